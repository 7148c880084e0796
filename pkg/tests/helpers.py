"""Shared test utilities."""

import numpy as np

from bondsent import autodiff as ad


def numeric_grad(fn, x, eps=1e-5):
    """Central-difference gradient of a scalar function at x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = fn(x)
        flat[i] = orig - eps
        f_minus = fn(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def check_grad(build_loss, x0, rtol=1e-3, atol=1e-8, eps=1e-5):
    """Compare the autodiff gradient of build_loss(Tensor) against central
    differences. build_loss maps one leaf tensor to a scalar loss tensor."""
    leaf = ad.param(np.array(x0, dtype=np.float64, copy=True))
    loss = build_loss(leaf)
    ad.backward(loss)
    analytic = leaf.grad.copy()

    def f(x):
        return build_loss(ad.Tensor(x)).item()

    numeric = numeric_grad(f, np.array(x0, dtype=np.float64, copy=True), eps=eps)
    denom = np.maximum(np.abs(numeric), np.abs(analytic))
    err = np.abs(analytic - numeric)
    rel = err / np.where(denom > atol, denom, 1.0)
    worst = float(rel.max()) if rel.size else 0.0
    assert worst < rtol, (
        f"gradient mismatch: worst relative error {worst:.3e}\n"
        f"analytic:\n{analytic}\nnumeric:\n{numeric}"
    )
    return worst
