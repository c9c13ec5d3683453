import math

import pytest
import torch

from disarm.encoders import EncoderSet
from disarm.errors import ConfigError, DimensionError
from disarm.model import (
    VARIANT_LABELS,
    VARIANTS,
    DisarmModel,
    HeadParams,
    ModelDims,
    bce_loss,
    bce_with_logits,
    classify,
    contextualized_entity,
    contextualized_multimodal,
    contextualized_text,
    forward,
)
from disarm.synthetic import make_corpus
from helpers import SMALL


def _batch(n=3, d=SMALL, seed=0):
    g = torch.Generator().manual_seed(seed)
    return (torch.randn(n, d.context_dim, generator=g), torch.randn(n, d.image_dim, generator=g),
            torch.randn(n, d.harm_dim, generator=g))


def test_default_dims():
    d = ModelDims()
    assert (d.entity_dim, d.entity_proj_dim, d.context_dim, d.image_dim, d.harm_dim) == (300, 512, 512, 512, 768)
    assert (d.rank, d.fused_dim, d.head_hidden) == (256, 512, 256)


def test_model_dims_reject_unknown_keys():
    with pytest.raises(ConfigError):
        ModelDims.from_dict({"rnak": 3})


def test_full_model_block_shapes_at_default_dims():
    m = DisarmModel(["a", "b"])
    shapes = m.block_shapes()
    assert shapes["entity_table.weight"] == [3, 300]
    assert shapes["entity_proj.weight"] == [512, 300]
    assert shapes["ce.U"] == [512, 256] and shapes["ce.V"] == [512, 256] and shapes["ce.P"] == [256, 512]
    assert shapes["ce.b"] == [512]
    assert shapes["concat_proj.weight"] == [512, 1280]
    assert shapes["cmm.A_x"] == [512, 512] and shapes["cmm.A_y"] == [512, 512]
    assert "cmm.b" not in shapes
    assert shapes["head_hidden.weight"] == [256, 512] and shapes["head_out.weight"] == [1, 256]


@pytest.mark.parametrize("variant", VARIANTS)
def test_every_variant_runs(variant):
    m = DisarmModel(["x", "y"], SMALL, variant, seed=1)
    c, i, h = _batch()
    out = m(m.entity_indices(["x", "y", "zzz"]), c, i, h)
    assert out["logit"].shape == (3,)
    assert torch.isfinite(out["logit"]).all()


def test_variant_labels_cover_all():
    assert set(VARIANT_LABELS) == set(VARIANTS)
    assert VARIANT_LABELS["full"] == "DISARM"
    with pytest.raises(ConfigError):
        DisarmModel([], SMALL, "CE+XYZ")


def test_stage_functions_reproduce_module_forward():
    m = DisarmModel(["x"], SMALL, "full", seed=2)
    c, i, h = _batch(2)
    with torch.no_grad():
        out = m(m.entity_indices(["x", "x"]), c, i, h)
        c_ent = contextualized_entity(out["e"], c, m.ce_params())
        c_txt = contextualized_text(h, c_ent, m.concat_proj.weight, m.concat_proj.bias)
        jp, p = m.cmm_params()
        c_mm = contextualized_multimodal(c_txt, i, jp, p)
        logit, prob = classify(c_mm, m.head_params())
    assert torch.allclose(c_ent, out["c_ent"], atol=1e-6)
    assert torch.allclose(c_txt, out["c_txt"], atol=1e-6)
    assert torch.allclose(c_mm, out["c_mm"], atol=1e-6)
    assert torch.allclose(logit, out["logit"], atol=1e-6)
    assert torch.allclose(prob, torch.sigmoid(out["logit"]), atol=1e-6)


def test_contextualized_text_linear_switch_and_dims():
    w = torch.eye(4)
    o, c = torch.tensor([2.0, 0.0]), torch.tensor([0.0, -3.0])
    assert torch.equal(contextualized_text(o, c, w, nonlinear=False), torch.tensor([2.0, 0.0, 0.0, -3.0]))
    assert torch.allclose(contextualized_text(o, c, w), torch.tanh(torch.tensor([2.0, 0.0, 0.0, -3.0])))
    with pytest.raises(DimensionError):
        contextualized_text(o, c, torch.eye(5))


def test_classify_range_and_dims():
    head = HeadParams(torch.randn(3, 4), torch.zeros(3), torch.randn(3), torch.tensor(0.0))
    logit, prob = classify(torch.randn(5, 4) * 50, head)
    assert ((prob >= 0) & (prob <= 1)).all()
    with pytest.raises(DimensionError):
        classify(torch.randn(5), head)


def test_bce_hand_values():
    assert bce_loss(torch.tensor([0.5]), torch.tensor([1.0])).item() == pytest.approx(0.6931, abs=1e-4)
    assert bce_loss(torch.tensor([0.9, 0.2]), torch.tensor([1.0, 0.0])).item() == pytest.approx(0.1643, abs=1e-4)


def test_bce_is_finite_at_extremes():
    loss = bce_loss(torch.tensor([0.0, 1.0], dtype=torch.float64), torch.tensor([1.0, 0.0]))
    assert math.isfinite(loss.item())
    assert loss.item() == pytest.approx(-math.log(1e-7), rel=1e-3)


def test_logit_loss_matches_probability_loss():
    z = torch.linspace(-6, 6, 13, dtype=torch.float64)
    y = (torch.arange(13) % 2).double()
    assert bce_with_logits(z, y).item() == pytest.approx(bce_loss(torch.sigmoid(z), y).item(), rel=1e-9)


def test_model_is_deterministic_in_seed():
    a, b = DisarmModel(["x"], SMALL, seed=5), DisarmModel(["x"], SMALL, seed=5)
    for k, v in a.state_dict().items():
        assert torch.equal(v, b.state_dict()[k])


def test_forward_trace_on_synthetic_meme(tmp_path):
    _, _, records = make_corpus(tmp_path, n_train=2, n_val=0, n_test=0)
    model = DisarmModel(["joe biden"], ModelDims(), seed=0)
    trace = forward(records[0], records[0].candidates[0], model, EncoderSet.stub())
    assert trace.is_finite()
    assert 0.0 <= trace.prob <= 1.0
    assert trace.c_txt.shape == (512,) and trace.c_mm.shape == (512,)
    assert trace.decision == (trace.prob >= 0.5)
    with pytest.raises(ConfigError):
        forward(records[0], "x", DisarmModel([], SMALL, "EH"), EncoderSet.stub())
