"""Central finite-difference gradient checking shared by tests and acceptance."""

import torch


def fd_gradient(fn, x, step):
    """Central-difference gradient of scalar fn at x (same shape as x)."""
    x = x.detach()
    g = torch.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + step
        hi = fn(x).item()
        flat[i] = orig - step
        lo = fn(x).item()
        flat[i] = orig
        g.reshape(-1)[i] = (hi - lo) / (2 * step)
    return g


def max_rel_error(analytic, numeric, floor=1e-6):
    """Worst per-coordinate relative error between two gradients."""
    a = analytic.reshape(-1)
    n = numeric.reshape(-1)
    denom = torch.maximum(torch.maximum(a.abs(), n.abs()), torch.full_like(a, floor))
    return ((a - n).abs() / denom).max().item()


def check_gradients(fn, x, step, tol, floor=1e-6):
    """Assert autograd gradient of scalar fn matches central differences."""
    x = x.detach().double().requires_grad_(True)
    fn(x).backward()
    analytic = x.grad.clone()
    numeric = fd_gradient(fn, x, step)
    err = max_rel_error(analytic, numeric, floor)
    assert err <= tol, f"gradient mismatch: max relative error {err:.3e} > {tol:.0e}"
    return err
