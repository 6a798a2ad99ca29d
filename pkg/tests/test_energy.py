import numpy as np
import pytest

from framewave import energy, evolve
from framewave.background import BumpBackground, ZeroBackground
from framewave.energy import (BudgetReport, ExteriorRegion, conservation_budget,
                              cone_flux, divergence_direct, divergence_formula,
                              eval_point_bundle, exterior_energy,
                              gradient_decomposition_residuals,
                              norm_equivalence_bounds, slice_energy, stress_mixed,
                              tangential_flux_integral, ttr_coordinate,
                              ttr_from_stress, ttr_nullframe)
from framewave.errors import EmptyCone
from framewave.fields import GridGeometry, PolyField
from framewave.poly import Poly, measure_order
from framewave.weights import WeightParams
from conftest import sample_points

PARAMS = WeightParams(0.5, -0.25)


def _random_H(rng, degree=2):
    return PolyField.random(rng, rank=2, channels=1, degree=degree, nterms=3,
                            variance=("u", "u"), symmetric=True)


# --- stress tensor ----------------------------------------------------------

def test_stress_flat_time_gradient():
    # dPsi = (c, 0, 0, 0): T^t_t = -c^2/2 so T_tt = +c^2/2
    psi = PolyField.scalar(Poly.var(0) * 2.0)
    T = stress_mixed(None, psi, 0, 0)
    assert T == Poly.const(-2.0)
    # lowered: first-slot time sign flip
    assert energy.stress_lowered(None, psi, 0, 0) == Poly.const(2.0)


def test_stress_constant_field_vanishes(rng):
    psi = PolyField.scalar(Poly.const(5))
    H = _random_H(rng)
    for mu in range(4):
        for nu in range(4):
            assert stress_mixed(H, psi, mu, nu).is_zero()


def test_stress_brute_force_oracle(rng):
    H = _random_H(rng)
    psi = PolyField.random(rng, rank=0, channels=2, degree=2, nterms=4)
    pts = sample_points(rng, 10)
    grad = psi.gradient().eval(pts)  # (n, 4, ch)
    Hv = H.eval(pts)[..., 0]
    m_inv = np.diag([-1.0, 1, 1, 1])
    for mu in range(4):
        for nu in range(4):
            got = stress_mixed(H, psi, mu, nu).eval_many(pts)
            want = np.zeros(len(pts))
            for k in range(len(pts)):
                g = m_inv + Hv[k]
                ip = lambda a, b: float(grad[k, a] @ grad[k, b])
                val = sum(g[mu, a] * ip(a, nu) for a in range(4))
                if mu == nu:
                    val -= 0.5 * sum(g[a, b] * ip(a, b)
                                     for a in range(4) for b in range(4))
                want[k] = val
            assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


# --- slice densities --------------------------------------------------------

def test_ttr_outgoing_profile_vanishes():
    # hand-built bundle with dPsi the gradient of q = r - t: (d_t + d_r) и
    # angular parts both vanish, H = 0
    n = 20
    rng = np.random.default_rng(0)
    pts = sample_points(rng, n)
    r = np.linalg.norm(pts[:, 1:], axis=1)
    dpsi = np.zeros((n, 4, 1))
    dpsi[:, 0, 0] = -1.0
    dpsi[:, 1:, 0] = pts[:, 1:] / r[:, None]
    bundle = {"pts": pts, "r": r, "xhat": pts[:, 1:] / r[:, None],
              "dpsi": dpsi, "H": np.zeros((n, 4, 4))}
    assert np.max(np.abs(ttr_coordinate(bundle))) <= 1e-14
    assert np.max(np.abs(ttr_nullframe(bundle))) <= 1e-14


def test_ttr_pure_time_gradient():
    n = 5
    rng = np.random.default_rng(1)
    pts = sample_points(rng, n)
    r = np.linalg.norm(pts[:, 1:], axis=1)
    dpsi = np.zeros((n, 4, 1))
    dpsi[:, 0, 0] = 1.0
    bundle = {"pts": pts, "r": r, "xhat": pts[:, 1:] / r[:, None],
              "dpsi": dpsi, "H": np.zeros((n, 4, 4))}
    assert np.allclose(ttr_coordinate(bundle), 0.5)


def test_ttr_identities_random(rng):
    for _ in range(30):
        H = _random_H(rng)
        psi = PolyField.random(rng, rank=0, channels=2, degree=2, nterms=4)
        pts = sample_points(rng, 15)
        b = eval_point_bundle(H, psi, pts)
        a = ttr_coordinate(b)
        c = ttr_nullframe(b)
        d = ttr_from_stress(H, psi, pts)
        scale = max(1.0, float(np.max(np.abs(a))))
        assert np.max(np.abs(a - c)) / scale <= 1e-12
        assert np.max(np.abs(a - d)) / scale <= 1e-12


def test_gradient_decomposition_exact(rng):
    psi = PolyField.random(rng, rank=0, channels=2, degree=3, nterms=5)
    pts = sample_points(rng, 100)
    r1, r2 = gradient_decomposition_residuals(psi, pts)
    grad = psi.gradient().eval(pts)
    scale = np.maximum(1.0, np.sum(grad ** 2, axis=(1, 2)))
    assert np.max(r1 / scale) <= 1e-12
    assert np.max(r2 / scale) <= 1e-12


# --- divergence -------------------------------------------------------------

def test_divergence_harmonic_flat():
    psi = PolyField.scalar(Poly.var(0) * Poly.var(1))  # t x1, flat-harmonic
    assert divergence_formula(None, psi, 0).is_zero()


def test_divergence_direct_vs_formula(rng):
    for _ in range(5):
        H = _random_H(rng, degree=1)
        psi = PolyField.random(rng, rank=0, channels=2, degree=2, nterms=4)
        for nu in range(4):
            diff = divergence_direct(H, psi, nu) - divergence_formula(H, psi, nu)
            assert all(v == 0 for v in diff.c.values()) or diff.is_zero()


def test_norm_equivalence_bounds(rng):
    samples = []
    for _ in range(200):
        A = rng.normal(size=(4, 4))
        A = 0.5 * (A + A.T)
        A *= 0.3 / np.linalg.norm(A)
        samples.append(A)
    lo, hi = norm_equivalence_bounds(samples)
    assert 0.0 < lo <= 1.0 <= hi
    assert hi < 2.0  # |H| <= 0.3 keeps the form within a unit of flat


# --- grid-side integrals ----------------------------------------------------

@pytest.fixture(scope="module")
def flat_run():
    geom = GridGeometry(32, 8.0)
    target = evolve.gaussian_target(amplitude=1.0, center=(0, 0, 3.5), sigma=1.0)
    Phi0, Pi0 = evolve.data_from_target(geom, target, 0.0)
    hist = evolve.evolve_run(geom, ZeroBackground(), Phi0, Pi0, 0.0, 0.75,
                             cfl=0.45, n_monitors=9)
    return hist, hist.component_series("scalar")


def test_exterior_energy_zero_and_scaling(flat_run):
    hist, series = flat_run
    region = ExteriorRegion(q0=-2.0)
    geom = hist.geom
    zero = energy.ComponentSeries(geom, ZeroBackground(), series.times,
                                  [0 * a for a in series.psi],
                                  [0 * a for a in series.psi_t],
                                  [0 * a for a in series.psi_tt])
    assert exterior_energy(zero, 0.0, region, PARAMS) == 0.0
    doubled = energy.ComponentSeries(geom, ZeroBackground(), series.times,
                                     [2 * a for a in series.psi],
                                     [2 * a for a in series.psi_t],
                                     [2 * a for a in series.psi_tt])
    e1 = exterior_energy(series, 0.0, region, PARAMS)
    e2 = exterior_energy(doubled, 0.0, region, PARAMS)
    assert e2 == pytest.approx(4 * e1, rel=1e-12)


def test_exterior_energy_refinement_reference():
    # static Gaussian data: slice energy converges to a fine-grid reference
    region = ExteriorRegion(q0=float("-inf"))
    vals = {}
    for N in (48, 96):
        geom = GridGeometry(N, 8.0)
        target = evolve.gaussian_target(amplitude=1.0, center=(0, 0, 3.5), sigma=1.5)
        Phi0, Pi0 = evolve.data_from_target(geom, target, 0.0)
        ev = evolve.Evolver(geom, ZeroBackground())
        series = evolve.RunHistory(geom, ZeroBackground(), 0, 1, [0.0], [Phi0],
                                   [Pi0], ev).component_series("scalar")
        vals[N] = slice_energy(series.state(0), region, PARAMS, "w")
    assert abs(vals[48] - vals[96]) <= 0.01 * vals[96]


def test_tangential_flux_zero_and_nonneg(flat_run):
    hist, series = flat_run
    region = ExteriorRegion(q0=-2.0)
    val = tangential_flux_integral(series, 0.0, 0.75, region, PARAMS)
    assert val >= 0.0
    zero = energy.ComponentSeries(hist.geom, ZeroBackground(), series.times,
                                  [0 * a for a in series.psi],
                                  [0 * a for a in series.psi_t],
                                  [0 * a for a in series.psi_tt])
    assert tangential_flux_integral(zero, 0.0, 0.75, region, PARAMS) == 0.0


def _monopole_series(geom, t1, t2, n_mon, q_center, sigma):
    """Exact outgoing monopole f(q)/r sampled on monitor slices."""
    r = geom.r_full()
    times = np.linspace(t1, t2, n_mon)
    psi, psi_t, psi_tt = [], [], []
    for t in times:
        q = r - t
        u = (q - q_center) / sigma
        f = np.exp(-u ** 2)
        fp = f * (-2.0 * u / sigma)
        fpp = f * (4.0 * u ** 2 - 2.0) / sigma ** 2
        psi.append((f / r)[None])
        psi_t.append((-fp / r)[None])
        psi_tt.append((fpp / r)[None])
    return energy.ComponentSeries(geom, ZeroBackground(), times, psi, psi_t, psi_tt)


def test_tangential_flux_outgoing_reference():
    # purely outgoing monopole: (d_t + d_r) psi = -f/r^2, angular zero;
    # compare against dense reference quadrature of the closed form
    geom = GridGeometry(64, 8.0)
    t1, t2 = 10.0, 10.5
    sigma, q_center = 1.2, -6.0
    series = _monopole_series(geom, t1, t2, 9, q_center, sigma)
    ball = 0.5
    region = ExteriorRegion(q0=float("-inf"), origin_ball_radius=ball)
    got = tangential_flux_integral(series, t1, t2, region, PARAMS)

    from framewave.energy import trapz
    from framewave.weights import w_hat_prime

    def slice_ref(tau):
        rr = np.linspace(ball, 8.0, 4000)
        q = rr - tau
        f = np.exp(-((q - q_center) / sigma) ** 2)
        val = 0.5 * (f / rr ** 2) ** 2 * w_hat_prime(q, PARAMS) * 4 * np.pi * rr ** 2
        return trapz(val, rr)

    taus = np.linspace(t1, t2, 41)
    ref = trapz([slice_ref(tt) for tt in taus], taus)
    assert got == pytest.approx(ref, rel=0.02)


def test_cone_flux_zero_and_empty(flat_run):
    hist, series = flat_run
    zero = energy.ComponentSeries(hist.geom, ZeroBackground(), series.times,
                                  [0 * a for a in series.psi],
                                  [0 * a for a in series.psi_t],
                                  [0 * a for a in series.psi_tt])
    with pytest.raises(EmptyCone):
        cone_flux(series, float("-inf"), 0.0, 0.75, PARAMS)
    with pytest.raises(EmptyCone):
        cone_flux(series, -50.0, 0.0, 0.75, PARAMS)  # cone below the ball
    val = cone_flux(zero, 0.5, 0.0, 0.75, PARAMS,
                    region=ExteriorRegion(q0=0.5))
    assert val == 0.0


def test_budget_closure_with_active_cone():
    # outgoing pulse with the cone crossing only the far tail: the flux is
    # nonzero and the budget still closes at order >= 1.9
    params = PARAMS
    region = ExteriorRegion(q0=-4.0)
    res, flux = [], []
    for N in (24, 32, 48):
        geom = GridGeometry(N, 8.0)
        Phi0, Pi0 = evolve.outgoing_pulse_data(geom, 6.0, amplitude=1.0,
                                               q_center=-2.5, sigma=0.5)
        hist = evolve.evolve_run(geom, ZeroBackground(), Phi0, Pi0, 6.0, 6.75,
                                 cfl=0.45, n_monitors=N // 4 + 1)
        series = hist.component_series("scalar")
        rep = conservation_budget(series, region, 6.0, 6.75, params)
        res.append(rep.residual)
        flux.append(rep.cone_flux)
    assert abs(flux[-1]) > 1e-4  # the cone term is genuinely exercised
    assert measure_order([16.0 / N for N in (24, 32, 48)], res) >= 1.9


def test_cone_cut_surface_error_measured():
    # a support-crossing sharp cutoff degrades the closure order: this is
    # the measured (not hidden) O(dx) surface error of the node-based cut
    params = PARAMS
    region = ExteriorRegion(q0=-2.5)  # straight through the pulse peak
    res = []
    for N in (24, 48):
        geom = GridGeometry(N, 8.0)
        Phi0, Pi0 = evolve.outgoing_pulse_data(geom, 6.0, amplitude=1.0,
                                               q_center=-2.5, sigma=0.5)
        hist = evolve.evolve_run(geom, ZeroBackground(), Phi0, Pi0, 6.0, 6.75,
                                 cfl=0.45, n_monitors=N // 4 + 1)
        series = hist.component_series("scalar")
        res.append(conservation_budget(series, region, 6.0, 6.75, params).residual)
    order = measure_order([16.0 / N for N in (24, 48)], res)
    print(f"\nsupport-crossing cutoff: measured surface-error order {order:.2f}")
    assert order > 0.5  # converges, but slower than the smooth-cut budget


def test_cone_flux_outgoing_nonnegative():
    # incoming-free data: the cone-flux integrand T_tt + T_rt >= 0 up to
    # discretization, so the flux stays above a vanishing negative floor
    vals = []
    for N in (24, 48):
        geom = GridGeometry(N, 8.0)
        Phi0, Pi0 = evolve.outgoing_pulse_data(geom, 6.0, amplitude=1.0,
                                               q_center=-2.0, sigma=0.5)
        hist = evolve.evolve_run(geom, ZeroBackground(), Phi0, Pi0, 6.0, 6.5,
                                 cfl=0.45, n_monitors=N // 8 + 1)
        series = hist.component_series("scalar")
        region = ExteriorRegion(q0=-4.0)
        vals.append(cone_flux(series, -4.0, 6.0, 6.5, PARAMS, region=region))
    floors = [max(0.0, -v) for v in vals]
    assert floors[1] <= max(floors[0], 1e-10)


def test_budget_closure_and_report(flat_run):
    hist, series = flat_run
    region = ExteriorRegion(q0=-2.0)
    rep = conservation_budget(series, region, 0.0, 0.75, PARAMS)
    assert isinstance(rep, BudgetReport)
    assert rep.hypothesis_ok and rep.sup_H == 0.0
    assert rep.relative_residual < 0.2  # coarse grid; order checked in acceptance
    js = rep.to_json()
    assert set(js) >= {"slice_t1", "slice_t2", "cone_flux", "ball_flux",
                       "weight_derivative_volume", "divergence_volume",
                       "residual", "relative_residual"}


def test_budget_unweighted_flat(flat_run):
    hist, series = flat_run
    region = ExteriorRegion(q0=float("-inf"))
    rep = conservation_budget(series, region, 0.0, 0.75, params=None)
    assert rep.weight_volume == 0.0
    assert rep.relative_residual < 0.05


def test_budget_traveling_background_closes():
    # time-dependent H exercises the d_t H piece of the divergence display
    geom = GridGeometry(24, 8.0)
    bg = BumpBackground(0.1, center=(0, 0, 2.0), radius=3.0, velocity=(0.4, 0, 0))
    target = evolve.gaussian_target(amplitude=1.0, center=(0, 0, 3.5), sigma=1.0)
    Phi0, Pi0 = evolve.data_from_target(geom, target, 0.0)
    hist = evolve.evolve_run(geom, bg, Phi0, Pi0, 0.0, 0.6, cfl=0.45, n_monitors=7)
    series = hist.component_series("scalar")
    rep = conservation_budget(series, ExteriorRegion(q0=-2.0), 0.0, 0.6, PARAMS)
    assert rep.relative_residual < 0.15


def test_budget_small_H_closes():
    geom = GridGeometry(24, 8.0)
    bg = BumpBackground(0.1, center=(0, 0, 2.0), radius=3.0)
    target = evolve.gaussian_target(amplitude=1.0, center=(0, 0, 3.5), sigma=1.0)
    Phi0, Pi0 = evolve.data_from_target(geom, target, 0.0)
    hist = evolve.evolve_run(geom, bg, Phi0, Pi0, 0.0, 0.6, cfl=0.45, n_monitors=7)
    series = hist.component_series("scalar")
    rep = conservation_budget(series, ExteriorRegion(q0=-2.0), 0.0, 0.6, PARAMS)
    assert rep.hypothesis_ok
    assert rep.relative_residual < 0.2


def test_csv_and_json_writers(tmp_path):
    rows = [(0.0, "a", 1.0), (0.5, "b", -2.0)]
    p = tmp_path / "series.csv"
    energy.write_series_csv(p, rows)
    text = p.read_text().splitlines()
    assert text[0] == "t,term,value"
    assert len(text) == 3
    energy.write_json(tmp_path / "x.json", {"b": 1, "a": 2})
    assert (tmp_path / "x.json").read_text().index('"a"') < \
           (tmp_path / "x.json").read_text().index('"b"')
