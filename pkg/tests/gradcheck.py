"""Central finite-difference gradient checking, independent of the tape.

The oracle only ever evaluates the forward pass (inside no_grad), so it
cannot inherit a bug from the backward closures it is checking.
"""
import numpy as np

FD_STEP = 1e-5
REL_TOL = 1e-4


def finite_difference(loss_fn, tape, params=None, step=FD_STEP):
    """Numeric gradient of ``loss_fn()`` w.r.t. each parameter on ``tape``.

    ``loss_fn`` must close over the live parameter matrices and return a
    scalar Matrix; entries are perturbed in place and restored.
    """
    params = tape.parameters if params is None else params
    out = {}
    for name, mat in params.items():
        grad = np.zeros(mat.data.shape)
        for idx in np.ndindex(*mat.data.shape):
            orig = mat.data[idx]
            mat.data[idx] = orig + step
            with tape.no_grad():
                up = loss_fn().item()
            mat.data[idx] = orig - step
            with tape.no_grad():
                down = loss_fn().item()
            mat.data[idx] = orig
            grad[idx] = (up - down) / (2 * step)
        out[name] = grad
    return out


def max_relative_error(analytic, numeric):
    """Worst elementwise relative error over matching gradient dicts."""
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def assert_gradients_match(loss_fn, tape, tol=REL_TOL):
    loss = loss_fn()
    analytic = tape.backward(loss)
    numeric = finite_difference(loss_fn, tape)
    err = max_relative_error(analytic, numeric)
    assert err < tol, f"gradient check failed: max relative error {err:.3e} >= {tol}"
    return err
