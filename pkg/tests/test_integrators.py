import math

import numpy as np
import pytest
from scipy.linalg import expm

from avgspde.errors import InvalidArgumentError, SimulationError
from avgspde.integrators import (
    ClosedFormFbar,
    CoupledState,
    SimParams,
    VariationState,
    finite_difference_jacobian,
    simulate_frozen,
    simulate_pair,
    simulate_recorded,
    simulate_terminal,
    step_coefficients,
    step_coupled,
    step_first_variation,
    step_frozen,
    step_grid,
    step_averaged,
)
from avgspde.models import CovarianceSpec, LinearDrift, ModelSpec, NemytskiiDrift, ScalarMap, Term, benchmark_spec
from avgspde.noise import NoiseStream, ProcessTag
from avgspde.oracle import gaussian_moments_averaged
from avgspde.spectral import SpectralField, eigenvalues

PI = math.pi
UNIT = CovarianceSpec("constant", 1.0)


def test_sim_params_defaults_and_validation():
    p = SimParams(epsilon=0.1, T=1.0, h_macro=0.01)
    assert p.coupled_step == pytest.approx(0.005)
    assert SimParams(epsilon=1.0, h_macro=0.01).coupled_step == 0.01
    for bad in (dict(epsilon=0.0), dict(epsilon=1.5), dict(T=-1), dict(h_macro=2.0), dict(h_coupled=0.5, h_macro=0.1)):
        with pytest.raises(InvalidArgumentError):
            SimParams(**bad)


def test_step_grid_rounds_step_down():
    assert step_grid(1.0, 0.3) == (4, 0.25)
    steps, h = step_grid(0.5, 2.0**-9 / 20)
    assert steps == 5120 and steps * h == pytest.approx(0.5, rel=1e-15)


@pytest.mark.parametrize("kind", ["coupled", "averaged", "frozen"])
@pytest.mark.parametrize("h", [0.5, 0.01, 0.003])
def test_zero_drift_decay_is_exact(kind, h):
    spec = ModelSpec(LinearDrift(), sigma1=0.0, sigma2=0.0)
    n, eps, T = 6, 0.25, 1.0
    x0 = np.linspace(1.0, -1.0, n)
    y0 = np.linspace(0.5, 2.0, n)
    params = SimParams(epsilon=eps, T=T, h_macro=h, h_coupled=h, n=n, M=1)
    alpha = eigenvalues(n, PI)
    res = simulate_terminal(kind, spec, params, 0, x0, y0, **({"h": h} if kind != "coupled" else {}))
    if kind == "coupled":
        assert np.max(np.abs(res.x[0] - np.exp(-alpha * T) * x0)) <= 1e-12
        assert np.max(np.abs(res.y[0] - np.exp(-alpha * T / eps) * y0)) <= 1e-12
    elif kind == "averaged":
        assert np.max(np.abs(res.xbar[0] - np.exp(-alpha * T) * x0)) <= 1e-12
    else:
        assert np.max(np.abs(res.y[0] - np.exp(-alpha * T) * y0)) <= 1e-12


def _exact_mean_step(spec, n, eps, h, x, y):
    p = spec.drift.coefficients(n)
    alpha = eigenvalues(n, spec.length_l)
    out_x, out_y = np.empty(n), np.empty(n)
    for k in range(n):
        L = np.array([
            [-alpha[k] + p["a"][k], p["b"][k], p["f0"][k]],
            [p["g"][k] / eps, -(alpha[k] + p["c"][k]) / eps, p["g0"][k] / eps],
            [0.0, 0.0, 0.0],
        ])
        z = expm(L * h) @ np.array([x[k], y[k], 1.0])
        out_x[k], out_y[k] = z[0], z[1]
    return out_x, out_y


def test_one_step_mean_local_error_is_second_order():
    spec = ModelSpec(LinearDrift(a=-0.2, b=1.0, f0=0.3, g=1.0, c=0.5, g0=-0.1), sigma1=0.0, sigma2=0.0)
    n, eps = 4, 0.5
    x = np.array([1.0, -0.5, 0.25, 0.1])
    y = np.array([-0.3, 0.8, 0.0, 0.2])
    errs = []
    for h in (0.02, 0.01):
        params = SimParams(epsilon=eps, T=h, h_macro=h, h_coupled=h, n=n)
        st = CoupledState(SpectralField(x, PI), SpectralField(y, PI))
        new = step_coupled(st, spec, params, (NoiseStream(0, 0, ProcessTag.W1), NoiseStream(0, 0, ProcessTag.W2)))
        ex, ey = _exact_mean_step(spec, n, eps, h, x, y)
        errs.append(np.linalg.norm(np.concatenate([new.x.coeffs - ex, new.y.coeffs - ey])))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_coupled_determinism(bench):
    p = SimParams(epsilon=2.0**-4, T=0.25, n=8, seed=17)
    a = simulate_pair(bench, p, np.arange(10))
    b = simulate_pair(bench, p, np.arange(10))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y) and np.array_equal(a.xbar, b.xbar)


def test_fused_kernel_matches_generic_loop(bench, e1):
    p = SimParams(epsilon=2.0**-4, T=0.1, n=8, seed=3)
    fused = simulate_pair(bench, p, np.arange(6), e1, None, use_kernel=True)
    loop = simulate_pair(bench, p, np.arange(6), e1, None, use_kernel=False)
    for attr in ("x", "y", "xbar"):
        assert np.max(np.abs(getattr(fused, attr) - getattr(loop, attr))) <= 1e-13
    assert fused.draws == loop.draws
    assert loop.draws["W1_coupled"] == loop.draws["W1_averaged"] == fused.steps * 8


def test_frozen_relaxation_rate():
    spec = ModelSpec(LinearDrift(g=1.0, c=0.5), sigma2=0.0)
    n, h, T = 4, 1e-3, 2.0
    x = SpectralField(np.array([1.0, 0.5, -0.2, 0.1]), PI)
    m = x.coeffs / (eigenvalues(n, PI) + 0.5)
    y0 = m + 1.0
    y = simulate_frozen(spec, x.coeffs, y0, T, h, NoiseStream(0, [0]))[0]
    expected = m + np.exp(-(eigenvalues(n, PI) + 0.5) * T)
    assert np.allclose(y, expected, rtol=2e-3, atol=1e-12)
    # the stationary mean is an exact fixed point of the scheme
    fixed = step_frozen(SpectralField(m, PI), x, spec, 0.05, NoiseStream(0, 0))
    assert np.allclose(fixed.coeffs, m, rtol=1e-14, atol=1e-15)


def test_frozen_stationary_variance():
    spec = ModelSpec(LinearDrift(g=0.0, c=0.5), q2=UNIT, sigma2=1.0)
    M = 20_000
    y = simulate_frozen(spec, np.zeros(2), None, 12.0, 0.01, NoiseStream(8, np.arange(M), ProcessTag.AUX))
    v = y[:, 0].var(ddof=1)
    assert abs(v - 1 / 3) <= 3 * (1 / 3) * math.sqrt(2 / (M - 1))


def test_averaged_pure_decay_and_mean_order():
    spec = ModelSpec(LinearDrift(), sigma1=0.0)
    x = SpectralField(np.array([1.0, 2.0]), PI)
    fbar = ClosedFormFbar(spec, 2)
    out = step_averaged(x, fbar, spec, 0.3, NoiseStream(0, 0))
    assert np.allclose(out.coeffs, np.exp(-eigenvalues(2, PI) * 0.3) * x.coeffs, rtol=1e-15)

    bench = benchmark_spec()
    spec0 = ModelSpec(bench.drift, bench.q1, bench.q2, 0.0, 0.0)
    x0 = np.zeros(8)
    x0[0] = 1.0
    oracle = gaussian_moments_averaged(spec0, 0.5, x0).mx
    gaps = []
    for h in (0.05, 0.025, 0.0125):
        p = SimParams(epsilon=1.0, T=0.5, h_macro=h, n=8)
        res = simulate_terminal("averaged", spec0, p, 0, x0)
        gaps.append(np.linalg.norm(res.xbar[0] - oracle))
    for g1, g2 in zip(gaps, gaps[1:]):
        assert 1.6 <= g1 / g2 <= 2.4


@pytest.mark.parametrize("use_kernel", [True, False])
def test_shared_w1_gives_identical_paths_without_drift(use_kernel):
    spec = ModelSpec(LinearDrift(g=1.0, c=0.5), sigma1=0.7, sigma2=0.4)
    p = SimParams(epsilon=0.05, T=0.3, n=5, seed=9)
    res = simulate_pair(spec, p, np.arange(4), np.ones(5), None, use_kernel=use_kernel)
    assert np.array_equal(res.x, res.xbar)
    assert res.draws["W1_coupled"] == res.draws["W1_averaged"]


def test_first_variation_cases(rng):
    n, T, h = 4, 1.0, 1e-4
    spec0 = ModelSpec(LinearDrift())
    zero = ClosedFormFbar(spec0, n)
    v = VariationState(SpectralField.basis(1, n, PI))
    xb = SpectralField.zeros(n, PI)
    for _ in range(int(round(T / 0.01))):
        v = step_first_variation(v, xb, zero.jacobian_apply, 0.01)
    assert float(v.eta.norm()) == pytest.approx(math.exp(-T), rel=1e-12)

    for _ in range(5):
        drift = LinearDrift(a=tuple(rng.uniform(-1, 1, n)), b=tuple(rng.uniform(-1, 1, n)),
                            g=tuple(rng.uniform(-1, 1, n)), c=tuple(rng.uniform(0, 0.9, n)))
        spec = ModelSpec(drift)
        fb = ClosedFormFbar(spec, n)
        rho = fb.slope
        h_dir = rng.normal(size=n)
        v = VariationState(SpectralField(h_dir, PI))
        norms = []
        steps, hh = step_grid(T, h)
        for _ in range(steps):
            v = step_first_variation(v, xb, fb.jacobian_apply, hh)
            norms.append(float(v.eta.norm()))
        exact = np.exp((-eigenvalues(n, PI) + rho) * T) * h_dir
        assert np.allclose(v.eta.coeffs, exact, rtol=1e-3, atol=1e-12)
        assert max(norms) <= math.exp(max(rho.max(), 0) * T) * np.linalg.norm(h_dir) + 1e-12


def test_finite_difference_jacobian_matches_closed_form(bench, rng):
    fb = ClosedFormFbar(bench, 8)
    jac = finite_difference_jacobian(fb)
    x, eta = rng.normal(size=(3, 8)), rng.normal(size=(3, 8))
    assert np.allclose(jac(x, eta), fb.jacobian_apply(x, eta), rtol=1e-8, atol=1e-10)


def test_explosion_guard():
    spec = ModelSpec(LinearDrift(a=60.0, c=0.5), sigma1=0.1)
    with pytest.raises(SimulationError):
        simulate_pair(spec, SimParams(epsilon=0.5, T=1.0, n=3), [0], np.ones(3), averaged=False)


@pytest.mark.parametrize("k", [0, 3, 6, 10])
def test_mean_square_stability(bench, k):
    eps = 2.0**-k
    p = SimParams(epsilon=eps, T=2.0, h_macro=0.01, n=8, seed=2)
    res = simulate_pair(bench, p, np.arange(40), np.full(8, 2.0), np.full(8, -2.0))
    assert np.all(np.linalg.norm(res.x, axis=1) < 1e6)
    assert np.all(np.isfinite(res.y))


def test_recorded_path_matches_uninterrupted_run(bench, e1):
    p = SimParams(epsilon=2.0**-4, T=0.5, n=8, seed=4)
    h = p.coupled_step
    times = [0.0, 10 * h, 25 * h, 0.5]
    rec = simulate_recorded(bench, p, np.arange(5), times, e1)
    full = simulate_pair(bench, p, np.arange(5), e1, None, averaged=False)
    assert np.array_equal(rec[0], np.broadcast_to(e1, (5, 8)))
    assert np.array_equal(rec[-1], full.x)
    with pytest.raises(InvalidArgumentError):
        simulate_recorded(ModelSpec(NemytskiiDrift()), p, [0], times)


def test_time_regularity_slope(bench, e1):
    """Mean-square increments of the slow path grow at least like |t - s|^0.8."""
    p = SimParams(epsilon=2.0**-4, T=0.5, n=8, seed=5)
    h = p.coupled_step
    base = 0.25
    gaps = [h * 2**j for j in range(0, 7)]
    rec = simulate_recorded(bench, p, np.arange(2000), [base] + [base + g for g in gaps], e1)
    ms = [float(np.mean(np.sum((rec[i + 1] - rec[0]) ** 2, axis=1))) for i in range(len(gaps))]
    slope = np.polyfit(np.log(gaps), np.log(ms), 1)[0]
    assert slope >= 0.8


def test_nemytskii_generic_path_runs():
    drift = NemytskiiDrift(
        f=ScalarMap((Term(0.5, "sin", 1.0, 0.0), Term(0.5, "tanh", 0.0, 1.0))),
        g=ScalarMap((Term(0.5, "sin", 1.0, 0.0), Term(-0.5, "id", 0.0, 1.0))),
    )
    spec = ModelSpec(drift, sigma1=0.3, sigma2=0.3)
    p = SimParams(epsilon=0.1, T=0.1, n=6)
    res = simulate_pair(spec, p, np.arange(3), np.ones(6), fbar=lambda x: np.zeros_like(x))
    assert res.x.shape == (3, 6) and np.all(np.isfinite(res.xbar))
    assert res.draws["W1_coupled"] == res.draws["W1_averaged"]
