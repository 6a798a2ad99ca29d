"""Exact-identity certification suite.

Each check measures a residual (or a best constant) on a seeded family of
exact fields and sample points and compares against a fixed tolerance.
The suite is the machine-precision backbone behind the grid experiments:
if these pass, the algebra wired into the energy and commutator
evaluators is the algebra the estimates are about.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import energy, estimates, vecfields, weights
from .fields import PolyField
from .geometry import Point, null_frame_at
from .poly import random_poly
from .vecfields import GENERATORS, SCALING


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def to_json(self):
        return {"name": self.name, "value": self.value,
                "tolerance": self.tolerance, "passed": bool(self.passed),
                "detail": self.detail}


def _sample_points(rng, n, tmin=-2.0, tmax=2.0, box=3.0, rmin=0.5):
    pts = np.empty((n, 4))
    k = 0
    while k < n:
        cand = np.empty(4)
        cand[0] = rng.uniform(tmin, tmax)
        cand[1:] = rng.uniform(-box, box, size=3)
        if np.linalg.norm(cand[1:]) >= rmin:
            pts[k] = cand
            k += 1
    return pts


def _random_H(rng, degree=2, scale=1):
    H = PolyField.random(rng, rank=2, channels=1, degree=degree, nterms=3,
                         variance=("u", "u"), symmetric=True)
    return H if scale == 1 else H.scale(scale)


def check_weight_lemmas(n_q=10_000, seed=7):
    """Branch arithmetic of the three weights: derivative-ratio window and
    the w <= wtilde <= 2w envelope, exact up to roundoff."""
    rng = np.random.default_rng(seed)
    q = rng.uniform(-20, 20, size=n_q)
    q = q[q != 0.0]
    worst = 0.0
    for gamma in (0.25, 0.5, 1.0):
        for mu in (-0.1, -0.25, -1.0):
            p = weights.WeightParams(gamma=gamma, mu=mu)
            ratio = weights.w_hat_prime(q, p) * (1 + np.abs(q)) / weights.w_hat(q, p)
            lo = min(1 + 2 * gamma, -2 * mu)
            hi = max(1 + 2 * gamma, -2 * mu)
            worst = max(worst, float(np.max(np.maximum(lo - ratio, ratio - hi))))
            wv = weights.w(q, p)
            wt = weights.w_tilde(q, p)
            worst = max(worst, float(np.max(wv - wt)), float(np.max(wt - 2 * wv)))
            wp = weights.w_tilde_prime(q, p)
            hp = weights.w_hat_prime(q, p)
            branch = np.where(q > 0, 2.0, 1.0)
            worst = max(worst, float(np.max(np.abs(wp - branch * hp) / np.abs(hp))))
    return CheckResult("weight_lemmas", worst, 1e-12, worst <= 1e-12)


def check_gradient_decomposition(seed=11, n_fields=20, n_pts=100):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fields):
        psi = PolyField.random(rng, rank=0, channels=2, degree=3, nterms=5)
        pts = _sample_points(rng, n_pts)
        r1, r2 = energy.gradient_decomposition_residuals(psi, pts)
        grad = psi.gradient().eval(pts)
        scale = np.maximum(np.sum(grad ** 2, axis=(1, 2)), 1.0)
        worst = max(worst, float(np.max(r1 / scale)), float(np.max(r2 / scale)))
    return CheckResult("gradient_decomposition", worst, 1e-12, worst <= 1e-12)


def check_nullframe_rewriting(seed=13, n_inputs=100, n_pts=25):
    """Coordinate vs null-frame forms of the T_tt + T_rt density, plus the
    cross-check against the assembled stress components."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_inputs):
        H = _random_H(rng)
        psi = PolyField.random(rng, rank=0, channels=1, degree=2, nterms=4)
        pts = _sample_points(rng, n_pts)
        bundle = energy.eval_point_bundle(H, psi, pts)
        a = energy.ttr_coordinate(bundle)
        b = energy.ttr_nullframe(bundle)
        c = energy.ttr_from_stress(H, psi, pts)
        scale = max(1.0, float(np.max(np.abs(a))))
        worst = max(worst, float(np.max(np.abs(a - b))) / scale,
                    float(np.max(np.abs(a - c))) / scale)
    return CheckResult("nullframe_rewriting", worst, 1e-12, worst <= 1e-12)


def check_divergence_identity(seed=17, n_fields=10):
    """Exact equality of the direct stress divergence and its three-term
    evaluation, as polynomials (coefficient-level zero residual)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fields):
        H = _random_H(rng, degree=1)
        psi = PolyField.random(rng, rank=0, channels=1, degree=2, nterms=4)
        for nu in range(4):
            diff = energy.divergence_direct(H, psi, nu) - energy.divergence_formula(H, psi, nu)
            coeffs = [abs(float(v)) for v in diff.c.values()]
            worst = max(worst, max(coeffs, default=0.0))
    return CheckResult("divergence_identity", worst, 1e-12, worst <= 1e-12)


def check_commutator_identity(seed=19, n_pairs=50, max_order=3, n_pts=20,
                              time_budget=None):
    """The exact commutator expansion on seeded (H, phi) pairs.

    For each pair a mixed random multi-index of every length up to
    max_order (scaling generator included with its own draw) is checked at
    sampled points with r > 0.
    """
    import time

    rng = np.random.default_rng(seed)
    start = time.monotonic()
    worst = 0.0
    checked = 0
    for _ in range(n_pairs):
        H = _random_H(rng)
        phi = PolyField.random(rng, rank=0, channels=1, degree=3, nterms=4)
        pts = _sample_points(rng, n_pts)
        for order in range(1, max_order + 1):
            gens = tuple(GENERATORS[i] for i in rng.integers(0, 11, size=order))
            if order >= 2 and SCALING not in gens:
                gens = gens[:-1] + (SCALING,)
            worst = max(worst, estimates.identity_residual(H, phi, gens, pts))
            checked += 1
        if time_budget is not None and time.monotonic() - start > time_budget:
            break
    elapsed = time.monotonic() - start
    return CheckResult("commutator_identity", worst, 1e-10, worst <= 1e-10,
                       detail=f"{checked} multi-indices in {elapsed:.1f}s")


def check_slash_representations(seed=23, n_pts=1000):
    """Both generator representations of the restricted derivatives, the
    direct formula cross-check, and the vanishing outgoing derivative of
    x^j / r.  Vectorized over the sample batch; a small per-point loop
    exercises the representation API itself.
    """
    from .vecfields import VectorFieldId, apply_to_scalar

    rng = np.random.default_rng(seed)
    pts = _sample_points(rng, n_pts, rmin=0.4)
    pts[:, 0][np.abs(pts[:, 0]) < 0.2] += 0.5  # keep t away from 0
    worst = float(estimates.lbar_radial_residual(pts))
    F = random_poly(rng, degree=3, nterms=5)
    gradF = np.stack([F.diff(mu).eval_many(pts) for mu in range(4)])
    ZF = {}
    for a in range(4):
        for b in range(a + 1, 4):
            g = VectorFieldId("Z", a, b)
            ZF[g] = apply_to_scalar(g, F).eval_many(pts)
    x = pts[:, 1:]
    r = np.linalg.norm(x, axis=1)
    t = pts[:, 0]
    dr = np.einsum("ni,in->n", x, gradF[1:]) / r
    for i in (1, 2, 3):
        direct = gradF[i] - (x[:, i - 1] / r) * dr
        v1 = np.zeros(n_pts)
        for j in (1, 2, 3):
            if j == i:
                continue
            coeff = x[:, j - 1] / r ** 2
            key = VectorFieldId("Z", min(i, j), max(i, j))
            v1 += coeff * ZF[key] * (1 if i < j else -1)
        v2 = np.zeros(n_pts)
        for j in (1, 2, 3):
            coeff = -(x[:, i - 1] / r) * (x[:, j - 1] / r) / t
            if j == i:
                coeff = coeff + 1.0 / t
            v2 += coeff * ZF[VectorFieldId("Z", 0, j)]
        scale = np.maximum(1.0, np.abs(direct))
        worst = max(worst,
                    float(np.max(np.abs(v1 - direct) / scale)),
                    float(np.max(np.abs(v2 - direct) / scale)),
                    float(np.max(np.abs(v1 - v2) / scale)))
    for k in range(min(n_pts, 40)):
        p = Point(pts[k, 0], tuple(pts[k, 1:]))
        for i in (1, 2, 3):
            rot, boost = vecfields.restricted_derivative_as_Z(i, p)
            direct = vecfields.restricted_derivative_direct(i, F, p)
            v1 = vecfields.apply_representation(rot, F, p)
            v2 = vecfields.apply_representation(boost, F, p)
            scale = max(1.0, abs(direct))
            worst = max(worst, abs(v1 - direct) / scale, abs(v2 - direct) / scale)
    return CheckResult("slash_as_generators", worst, 1e-10, worst <= 1e-10,
                       detail=f"{n_pts} sample points")


def check_eA_expansions(seed=29, n_pts=200):
    rng = np.random.default_rng(seed)
    pts = _sample_points(rng, n_pts, rmin=0.4)
    pts[:, 0][np.abs(pts[:, 0]) < 0.2] += 0.5
    F = random_poly(rng, degree=3, nterms=5)
    gradF = [F.diff(mu) for mu in range(4)]
    worst = 0.0
    for k in range(n_pts):
        p = Point(pts[k, 0], tuple(pts[k, 1:]))
        fr = null_frame_at(p)
        rot = estimates.eA_rotation_representation(p, fr)
        boost = estimates.eA_boost_representation(p, fr)
        pt = p.coords()[None, :]
        for a, name in enumerate(("e1", "e2")):
            vec = fr.by_name(name)
            direct = sum(vec[mu] * float(gradF[mu].eval_many(pt)[0]) for mu in range(4))
            v1 = vecfields.apply_representation(rot[a], F, p)
            v2 = vecfields.apply_representation(boost[a], F, p)
            scale = max(1.0, abs(direct))
            worst = max(worst, abs(v1 - direct) / scale, abs(v2 - direct) / scale)
    return CheckResult("eA_as_generators", worst, 1e-10, worst <= 1e-10)


def check_jacobi():
    worst = float(vecfields.jacobi_residual())
    return CheckResult("jacobi_identity", worst, 0.0, worst == 0.0,
                       detail="165 unordered triples, exact structure constants")


def check_decay_inequalities(seed=31, n_fields=6, n_pts=400):
    """Measured constants in the flat decay inequalities on the declared
    family: random polynomial fields sampled in {t in [1, 4], |x| <= 4}."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_fields):
        rank = int(rng.integers(0, 2))
        phi = PolyField.random(rng, rank=rank, channels=1, degree=3, nterms=4)
        pts = _sample_points(rng, n_pts, tmin=1.0, tmax=4.0, box=4.0, rmin=0.3)
        for I in ((), (GENERATORS[int(rng.integers(0, 11))],)):
            c_full, c_tang = vecfields.measure_decay_constants(phi, I, pts)
            worst = max(worst, c_full, c_tang)
    return CheckResult("decay_inequalities", worst, 10.0, worst <= 10.0)


def run_suite(seed=1234, fast=False):
    """Run every certification check; returns a list of CheckResult."""
    pairs = 10 if fast else 50
    results = [
        check_weight_lemmas(seed=seed),
        check_gradient_decomposition(seed=seed + 1),
        check_nullframe_rewriting(seed=seed + 2, n_inputs=20 if fast else 100),
        check_divergence_identity(seed=seed + 3, n_fields=4 if fast else 10),
        check_commutator_identity(seed=seed + 4, n_pairs=pairs,
                                  max_order=2 if fast else 3),
        check_slash_representations(seed=seed + 5, n_pts=200 if fast else 1000),
        check_eA_expansions(seed=seed + 6, n_pts=50 if fast else 200),
        check_jacobi(),
        check_decay_inequalities(seed=seed + 7, n_fields=3 if fast else 6),
    ]
    return results
