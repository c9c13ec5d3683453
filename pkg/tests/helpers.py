"""Shared test utilities: a small model configuration and a finite-difference oracle."""

import torch

from disarm.features import featurize
from disarm.model import ModelDims

SMALL = ModelDims(entity_dim=8, entity_proj_dim=8, context_dim=8, image_dim=8, harm_dim=8,
                  rank=4, fused_dim=8, text_dim=8, joint_dim=8, head_hidden=6)


def small_features(records, instances, encoders, width=8):
    """Featurize, then truncate encoder outputs to ``width`` columns."""
    fs = featurize(instances, {r.id: r for r in records}, encoders)
    fs.context = fs.context[:, :width].contiguous()
    fs.image = fs.image[:, :width].contiguous()
    fs.harm = fs.harm[:, :width].contiguous()
    return fs


def central_difference(fn, inputs, h=1e-4):
    """Numerical gradient of scalar ``fn(*inputs)`` w.r.t. each input, by central differences."""
    grads = []
    for t in inputs:
        g = torch.zeros_like(t)
        flat, gflat = t.view(-1), g.view(-1)
        for k in range(flat.numel()):
            old = flat[k].item()
            flat[k] = old + h
            plus = fn(*inputs).item()
            flat[k] = old - h
            minus = fn(*inputs).item()
            flat[k] = old
            gflat[k] = (plus - minus) / (2 * h)
        grads.append(g)
    return grads


def check_gradients(fn, inputs, h=1e-4, rtol=1e-3, atol=1e-8):
    """Compare autograd against central differences; returns the worst relative error."""
    inputs = [t.detach().clone().double().requires_grad_(True) for t in inputs]
    out = fn(*inputs)
    analytic = torch.autograd.grad(out, inputs, allow_unused=True)
    with torch.no_grad():
        numeric = central_difference(fn, [t.detach().clone() for t in inputs], h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = torch.zeros_like(n) if a is None else a
        err = (a - n).abs().max().item()
        scale = max(a.abs().max().item(), n.abs().max().item())
        rel = err / max(scale, atol / rtol)
        worst = max(worst, rel)
    return worst


def random_features(n=12, width=8, seed=0):
    """Gaussian features over entities x/y with alternating labels and scenarios A/B/C."""
    from disarm.dataset import TargetInstance
    from disarm.features import FeatureSet

    g = torch.Generator().manual_seed(seed)
    inst = [TargetInstance(f"m{i}", "x" if i % 2 else "y", i % 2, "ABC"[i % 3]) for i in range(n)]
    return FeatureSet(inst, torch.randn(n, width, generator=g), torch.randn(n, width, generator=g),
                      torch.randn(n, width, generator=g), torch.tensor([float(i % 2) for i in range(n)]))
