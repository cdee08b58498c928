"""Central finite-difference gradient oracle, independent of the engine's
backward pass: it only calls forward evaluations."""

import numpy as np

from n2b.tensor import Tensor


def finite_diff_grad(func, arrays, index, h=1e-5):
    """d func(arrays) / d arrays[index] by central differences (float64).

    `func` maps a list of float64 numpy arrays to a scalar float.
    """
    base = [a.astype(np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        plus = [a.copy() for a in base]
        minus = [a.copy() for a in base]
        plus[index][idx] += h
        minus[index][idx] -= h
        grad[idx] = (func(plus) - func(minus)) / (2 * h)
    return grad


def check_gradients(build_loss, arrays, h=1e-5, rtol=1e-4):
    """Compare backward() gradients with central differences.

    `build_loss` takes a list of Tensors (requires_grad, float64) and returns
    a scalar loss Tensor. Returns the worst relative error observed.
    """
    tensors = [Tensor(a.astype(np.float64), requires_grad=True) for a in arrays]
    loss = build_loss(tensors)
    loss.backward()

    def forward_only(arrs):
        plain = [Tensor(a) for a in arrs]
        return float(build_loss(plain).data)

    worst = 0.0
    for i, t in enumerate(tensors):
        fd = finite_diff_grad(forward_only, arrays, i, h=h)
        analytic = t.grad if t.grad is not None else np.zeros_like(fd)
        scale = np.maximum(np.abs(fd), 1.0)
        err = float(np.max(np.abs(analytic - fd) / scale))
        worst = max(worst, err)
        assert err < rtol, f"input {i}: max rel grad error {err:.3g} >= {rtol}"
    return worst
