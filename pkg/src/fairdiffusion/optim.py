"""Adaptive-moment parameter updates and finite-difference gradient checks."""

import numpy as np

from .autodiff import ParameterSet, Tape, backward
from .errors import ContractError, NumericError


class AdamState:
    """Per-parameter first/second moment accumulators plus step counter.

    Accumulators follow each parameter's dtype, so float64 gradient-check
    runs stay float64 end to end.
    """

    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}


def adam_update(params, state):
    """Apply one bias-corrected adaptive-moment step in stable name order."""
    for name, t in params.items():
        if t.grad is None:
            raise ContractError(f"adam_update: parameter {name!r} has no gradient")
        if state.m[name].shape != t.data.shape:
            raise ContractError(f"adam_update: accumulator shape mismatch for {name!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step
    for name, t in params.items():
        g = t.grad
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        t.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


def finite_difference_check(f, params, h=1e-5):
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` takes no arguments, reads the current parameter values and returns
    a scalar Tensor built from taped operations. Returns the maximum over
    all parameter entries of |analytic - central| / max(1, |central|).
    Meaningful only with float64 parameters.
    """
    if h <= 0:
        raise ContractError("finite_difference_check: h must be positive")
    with Tape() as tape:
        tape.watch(params)
        loss = f()
    if not np.isfinite(loss.data):
        raise NumericError("finite_difference_check: f produced a non-finite value")
    backward(loss, tape)
    analytic = {name: t.grad.copy() for name, t in params.items()}

    def eval_f():
        value = float(f().data)
        if not np.isfinite(value):
            raise NumericError("finite_difference_check: f produced a non-finite value")
        return value

    worst = 0.0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            f_plus = eval_f()
            flat[i] = original - h
            f_minus = eval_f()
            flat[i] = original
            central = (f_plus - f_minus) / (2.0 * h)
            err = abs(float(grad_flat[i]) - central) / max(1.0, abs(central))
            if err > worst:
                worst = err
    return worst
