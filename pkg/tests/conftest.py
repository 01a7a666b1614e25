"""Shared fixtures and independent oracle implementations.

The oracles here are deliberately naive (explicit loops) so they stay
independent of the library's vectorized/compiled paths.
"""

import numpy as np
import pytest
import torch

# criterion verdicts from the acceptance module, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(0xBEEF)


def random_image(rng, h, w):
    return rng.random((h, w, 3))


def dark_channel_oracle(img, radius):
    h, w = img.shape[:2]
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            patch = img[max(0, i - radius) : i + radius + 1, max(0, j - radius) : j + radius + 1]
            out[i, j] = patch.min()
    return out


def box_mean_oracle(x, radius):
    h, w = x.shape
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            out[i, j] = x[max(0, i - radius) : i + radius + 1, max(0, j - radius) : j + radius + 1].mean()
    return out


def guided_filter_oracle(g, s, radius, eps):
    mg = box_mean_oracle(g, radius)
    ms = box_mean_oracle(s, radius)
    var_g = box_mean_oracle(g * g, radius) - mg * mg
    cov = box_mean_oracle(g * s, radius) - mg * ms
    a = cov / (var_g + eps)
    b = ms - a * mg
    return box_mean_oracle(a, radius) * g + box_mean_oracle(b, radius)


def contextual_similarity_oracle(X, Y, h=0.5, eps=1e-5):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    mu = Y.mean(axis=0)
    Xc = X - mu
    Yc = Y - mu
    n, m = len(Xc), len(Yc)
    dist = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            num = Xc[i] @ Yc[j]
            den = np.linalg.norm(Xc[i]) * np.linalg.norm(Yc[j]) + 1e-12
            dist[i, j] = 1.0 - num / den
    rel = dist / (dist.min(axis=1, keepdims=True) + eps)
    w = np.exp((1.0 - rel) / h)
    cx = w / w.sum(axis=1, keepdims=True)
    return cx.max(axis=0).mean()


def fd_gradient_check(loss_fn, tensors, n_probes=10, step=1e-5, rtol=1e-3, atol=5e-6, seed=0):
    """Central finite differences against autograd, in float64.

    ``tensors`` are leaf float64 tensors with requires_grad; a few
    coordinates of each are probed. The default step is 1e-5 (1e-6 for
    early-layer weights of deep nets): ReLU-style kinks sit denser than
    1e-3 along these coordinates even when the gradient is exact, and
    float64 keeps the cancellation noise orders of magnitude below rtol.
    A convergence study against autograd at h -> 0 backs the choice.
    """
    loss = loss_fn()
    grads = torch.autograd.grad(loss, tensors, allow_unused=False)
    gen = np.random.default_rng(seed)
    worst = (0.0, 1.0, None)
    for tensor, grad in zip(tensors, grads):
        flat = tensor.detach().reshape(-1)
        n = flat.numel()
        for idx in gen.choice(n, size=min(n_probes, n), replace=False):
            idx = int(idx)
            orig = float(flat[idx])
            with torch.no_grad():
                flat[idx] = orig + step
            plus = float(loss_fn().detach())
            with torch.no_grad():
                flat[idx] = orig - step
            minus = float(loss_fn().detach())
            with torch.no_grad():
                flat[idx] = orig
            fd = (plus - minus) / (2 * step)
            ad = float(grad.reshape(-1)[idx])
            err = abs(fd - ad)
            scale = max(abs(fd), abs(ad))
            if err - rtol * scale > worst[0] - rtol * worst[1]:
                worst = (err, scale, idx)
    err, scale, _ = worst
    assert err <= rtol * scale + atol, f"finite-difference mismatch: err={err:.3g} scale={scale:.3g}"


def small_bundle(base=8, blocks=1, seed=0):
    from nsdehaze.networks import NetworkConfig, build_models

    return build_models(NetworkConfig(base_channels=base, generator_res_blocks=blocks, seed=seed))
