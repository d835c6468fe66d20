"""Finite-difference gradient verification.

The numerical side is an independent oracle: it only ever calls the forward
pass, perturbing parameter entries by a central difference step, and never
touches the tape. Used by the unit tests and the acceptance suite.
"""

import numpy as np

from .tensor import backward


def numerical_gradient(loss_fn, array, step=1e-5):
    """Central-difference d loss / d array, perturbing entries in place.

    loss_fn() must run a fresh forward pass and return a float.
    """
    grad = np.zeros_like(array)
    flat = array.ravel()
    gflat = grad.ravel()
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + step
        up = loss_fn()
        flat[idx] = orig - step
        down = loss_fn()
        flat[idx] = orig
        gflat[idx] = (up - down) / (2.0 * step)
    return grad


def max_relative_error(analytic, numeric, floor=1e-3):
    """max |a - n| / max(|a|, |n|, floor) over all entries."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_gradients(build_loss, params, step=1e-5, tol=1e-4):
    """Compare tape gradients of every parameter against central differences.

    build_loss() -> scalar Tensor (fresh forward each call). Returns a dict
    name -> max relative error; raises AssertionError when any exceeds tol.
    """
    loss = build_loss()
    for p in params.values():
        p.grad = None
    backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}

    def forward_value():
        return float(build_loss().data)

    report = {}
    for name, p in params.items():
        numeric = numerical_gradient(forward_value, p.data, step=step)
        report[name] = max_relative_error(analytic[name], numeric)
    worst = max(report, key=report.get)
    if report[worst] > tol:
        raise AssertionError(
            f"gradient mismatch in {worst}: max relative error {report[worst]:.3e} > {tol:g}"
        )
    return report
