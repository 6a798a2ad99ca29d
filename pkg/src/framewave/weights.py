"""Weight functions of the retarded parameter q = r - t.

    w(q)    = (1+|q|)^(1+2*gamma)  for q > 0,   1               for q < 0
    what(q) = (1+|q|)^(1+2*gamma)  for q > 0,   (1+|q|)^(2*mu)  for q < 0
    wtilde  = what + w

with gamma > 0 and mu < 0.  Values at the q = 0 kink are defined by
continuity (both branches agree there); derivative queries exactly at the
kink raise KinkPoint rather than silently picking a branch -- quadratures
never need the derivative on that measure-zero set.

All functions accept scalars or numpy arrays.  Pure functions; safe for
unrestricted concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, KinkPoint


@dataclass(frozen=True)
class WeightParams:
    gamma: float = 0.5
    mu: float = -0.25

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConstraintError("gamma must be > 0")
        if not self.mu < 0:
            raise ConstraintError("mu must be < 0")


def _split(q):
    q = np.asarray(q, dtype=float)
    return q, q > 0, np.abs(q)


def _check_kink(q):
    if np.any(np.asarray(q) == 0.0):
        raise KinkPoint("weight derivative undefined at q = 0")


def _ret(val, q):
    return float(val) if np.isscalar(q) or np.ndim(q) == 0 else val


def w(q, params: WeightParams):
    qa, pos, aq = _split(q)
    out = np.where(pos, (1.0 + aq) ** (1.0 + 2.0 * params.gamma), 1.0)
    return _ret(out, q)


def w_prime(q, params: WeightParams):
    _check_kink(q)
    qa, pos, aq = _split(q)
    out = np.where(pos, (1.0 + 2.0 * params.gamma) * (1.0 + aq) ** (2.0 * params.gamma), 0.0)
    return _ret(out, q)


def w_hat(q, params: WeightParams):
    qa, pos, aq = _split(q)
    out = np.where(
        pos,
        (1.0 + aq) ** (1.0 + 2.0 * params.gamma),
        (1.0 + aq) ** (2.0 * params.mu),
    )
    return _ret(out, q)


def w_hat_prime(q, params: WeightParams):
    # For q < 0, d|q|/dq = -1 makes the derivative -2 mu (1+|q|)^(2 mu - 1) > 0.
    _check_kink(q)
    qa, pos, aq = _split(q)
    out = np.where(
        pos,
        (1.0 + 2.0 * params.gamma) * (1.0 + aq) ** (2.0 * params.gamma),
        -2.0 * params.mu * (1.0 + aq) ** (2.0 * params.mu - 1.0),
    )
    return _ret(out, q)


def w_tilde(q, params: WeightParams):
    out = np.asarray(w(q, params)) + np.asarray(w_hat(q, params))
    return _ret(out, q)


def w_tilde_prime(q, params: WeightParams):
    _check_kink(q)
    out = np.asarray(w_prime(q, params)) + np.asarray(w_hat_prime(q, params))
    return _ret(out, q)
