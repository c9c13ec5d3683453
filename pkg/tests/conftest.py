import pytest
import torch

from disarm.encoders import EncoderSet
from disarm.synthetic import make_corpus
from helpers import SMALL

_criteria: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    num, title = crit
    row = _criteria.setdefault(num, {"title": title, "outcomes": []})
    if report.when == "call" or report.outcome != "passed":
        row["outcomes"].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        rep.criterion = (marker.args[0], marker.kwargs.get("title", ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        row = _criteria[num]
        outs = row["outcomes"]
        if any(o == "failed" for o in outs):
            status = "FAIL"
        elif outs and all(o == "skipped" for o in outs):
            status = "SKIP"
        else:
            status = "PASS"
        skipped = sum(o == "skipped" for o in outs)
        note = f" ({skipped} conditional check(s) skipped)" if skipped and status == "PASS" else ""
        terminalreporter.write_line(f"criterion {num}: {status}  {row['title']}{note}")


@pytest.fixture
def small_dims():
    return SMALL


@pytest.fixture(scope="session")
def stub_encoders():
    return EncoderSet.stub(seed=0)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest, lexicon, records = make_corpus(root)
    return root, manifest, lexicon, records


@pytest.fixture
def gen():
    return torch.Generator().manual_seed(1234)

