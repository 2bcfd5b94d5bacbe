import math

import numpy as np
import pytest

from avgspde.errors import ConfigError, HypothesisViolation, InvalidArgumentError, UnsupportedOperationError
from avgspde.models import (
    CosinePhi,
    CovarianceSpec,
    LinearDrift,
    ModelSpec,
    NemytskiiDrift,
    RationalPhi,
    ScalarMap,
    Term,
    apply_F,
    apply_G,
    drift_from_dict,
    fbar_closed_form,
    phi_eval,
    phi_from_dict,
    phi_grad,
    stationary_fast_mean,
    validate_hypotheses,
)
from avgspde.spectral import SpectralField, eigenvalues

PI = math.pi


def lin(**kw):
    return ModelSpec(LinearDrift(**kw), sigma1=0.5, sigma2=0.5)


def test_validation_examples():
    rep = validate_hypotheses(lin(g=1.0, c=0.5), 8)
    assert rep.ok and rep.L_g == 0.5 and rep.alpha1 == pytest.approx(1.0) and rep.beta == pytest.approx(0.5)
    bad = validate_hypotheses(lin(g=0.0, c=1.5), 8)
    assert not bad.ok
    assert [c.name for c in bad.checks if not c.passed] == ["L_g < alpha_1"]
    with pytest.raises(HypothesisViolation):
        bad.require()


def test_validation_flags_slow_trace_condition():
    spec = ModelSpec(LinearDrift(c=0.5), q1=CovarianceSpec("power", 1.0, 2.0))
    rep = validate_hypotheses(spec, 64)
    failed = {c.name for c in rep.checks if not c.passed}
    assert failed == {"Tr((-A)Q1) bounded"}
    # partial sums of k^-2 * k^2 grow without bound
    assert validate_hypotheses(spec, 128).trace_A_q1 > rep.trace_A_q1 * 1.9


def test_constant_covariance_flagged():
    spec = ModelSpec(LinearDrift(c=0.5), q1=CovarianceSpec("constant", 1.0), q2=CovarianceSpec("constant", 1.0))
    failed = {c.name for c in validate_hypotheses(spec, 8).checks if not c.passed}
    assert failed == {"Tr(Q1) bounded", "Tr(Q2) bounded", "Tr((-A)Q1) bounded"}


def test_covariance_lambdas():
    assert np.allclose(CovarianceSpec("power", 2.0, 2.0).lambdas(3), [2.0, 0.5, 2.0 / 9])
    assert np.all(CovarianceSpec("constant", 0.0).lambdas(4) == 0)
    neg = ModelSpec(LinearDrift(c=0.5), q2=CovarianceSpec("power", -1.0, 2.0))
    failed = {c.name for c in validate_hypotheses(neg, 4).checks if not c.passed}
    assert failed == {"Q2 nonnegative"}
    with pytest.raises(InvalidArgumentError):
        CovarianceSpec("fancy", 1.0)


def test_apply_examples():
    e1 = SpectralField.basis(1, 4, PI)
    assert np.allclose(apply_F(lin(a=1.0, b=1.0), e1, e1).coeffs, 2 * e1.coeffs)
    assert np.allclose(apply_G(lin(g=1.0, c=0.5), e1, e1).coeffs, 0.5 * e1.coeffs)
    nem = ModelSpec(NemytskiiDrift(f=ScalarMap((Term(1.0, "sin", 1.0, 0.0),))))
    z = SpectralField.zeros(6, PI)
    assert np.all(apply_F(nem, z, z).coeffs == 0)
    with pytest.raises(InvalidArgumentError):
        apply_F(lin(a=1.0), e1, SpectralField.zeros(3, PI))


def test_nemytskii_matches_quadrature():
    # F(x, y)(xi) = 0.5 sin(x(xi)); project onto e_1 by fine quadrature and compare
    nem = ModelSpec(NemytskiiDrift(f=ScalarMap((Term(0.5, "sin", 1.0, 0.0),)), grid_factor=16))
    x = SpectralField(np.array([0.8, -0.3, 0.2]), PI)
    out = apply_F(nem, x, SpectralField.zeros(3, PI)).coeffs
    xi = np.linspace(0, PI, 20001)
    u = sum(x.coeffs[k] * math.sqrt(2 / PI) * np.sin((k + 1) * xi) for k in range(3))
    ref = np.trapezoid(0.5 * np.sin(u) * math.sqrt(2 / PI) * np.sin(xi), xi)
    assert out[0] == pytest.approx(ref, abs=1e-6)


@pytest.mark.parametrize("family", ["linear", "nemytskii"])
def test_lipschitz_property(family, rng):
    n = 6
    if family == "linear":
        drift = LinearDrift(
            a=tuple(rng.uniform(-1, 1, n)), b=tuple(rng.uniform(-1, 1, n)), f0=0.3,
            g=tuple(rng.uniform(-1, 1, n)), c=tuple(rng.uniform(0, 0.9, n)), g0=-0.2,
        )
    else:
        drift = NemytskiiDrift(
            f=ScalarMap((Term(0.7, "sin", 1.0, 0.5), Term(-0.3, "tanh", 0.0, 1.0), Term(0.2, "const"))),
            g=ScalarMap((Term(0.4, "sin", 1.0, 0.0), Term(-0.5, "id", 0.0, 1.0))),
        )
    spec = ModelSpec(drift)
    K_F, K_G, _ = drift.lipschitz(n)
    for _ in range(1000):
        x1, y1, x2, y2 = (rng.normal(size=n) * rng.uniform(0.1, 3) for _ in range(4))
        dist = np.linalg.norm(x1 - x2) + np.linalg.norm(y1 - y2)
        dF = np.linalg.norm(drift.F(x1, y1, PI) - drift.F(x2, y2, PI))
        dG = np.linalg.norm(drift.G(x1, y1, PI) - drift.G(x2, y2, PI))
        assert dF <= K_F * dist + 1e-9
        assert dG <= K_G * dist + 1e-9
    assert validate_hypotheses(spec, n).ok


def test_fbar_closed_form_examples():
    e1 = SpectralField.basis(1, 4, PI)
    base = dict(g=1.0, c=0.5, g0=0.0)
    assert fbar_closed_form(lin(a=0.0, b=1.0, **base), e1).coeffs[0] == pytest.approx(2 / 3)
    assert fbar_closed_form(lin(a=1.0, b=1.0, **base), e1).coeffs[0] == pytest.approx(5 / 3)
    x = SpectralField(np.array([0.5, -1.0, 2.0, 0.1]), PI)
    spec = lin(a=0.7, b=0.0, f0=0.25, **base)
    assert np.allclose(fbar_closed_form(spec, x).coeffs, 0.7 * x.coeffs + 0.25)
    nem = ModelSpec(NemytskiiDrift())
    with pytest.raises(UnsupportedOperationError):
        fbar_closed_form(nem, e1)
    with pytest.raises(UnsupportedOperationError):
        stationary_fast_mean(nem, e1.coeffs)


def test_fbar_lipschitz(rng):
    n = 5
    for _ in range(20):
        p = dict(a=tuple(rng.uniform(-1, 1, n)), b=tuple(rng.uniform(-1, 1, n)),
                 g=tuple(rng.uniform(0, 1, n)), c=tuple(rng.uniform(0, 0.9, n)))
        spec = lin(**p)
        K_F = spec.drift.lipschitz(n)[0]
        gmax = float(np.max(np.asarray(p["g"]) / (eigenvalues(n, PI) + np.asarray(p["c"]))))
        x1, x2 = SpectralField(rng.normal(size=n), PI), SpectralField(rng.normal(size=n), PI)
        d = (fbar_closed_form(spec, x1) - fbar_closed_form(spec, x2)).norm()
        assert d <= K_F * (1 + gmax) * (x1 - x2).norm() + 1e-12


def test_phi_examples():
    v = SpectralField.basis(1, 3, PI)
    cos = CosinePhi(v.coeffs)
    z = SpectralField.zeros(3, PI)
    assert phi_eval(cos, z) == 1.0 and np.all(phi_grad(cos, z).coeffs == 0)
    assert phi_eval(cos, v * (PI / 2)) == pytest.approx(0.0, abs=1e-16)
    rat = RationalPhi()
    assert phi_eval(rat, SpectralField(np.array([0.6, 0.8, 0.0]), PI)) == pytest.approx(0.5)
    with pytest.raises(InvalidArgumentError):
        phi_eval(cos, SpectralField.zeros(4, PI))


@pytest.mark.parametrize("phi", [CosinePhi(np.array([0.3, -1.0, 0.5, 2.0])), RationalPhi()])
def test_phi_grad_matches_finite_differences(phi, rng):
    x = rng.normal(size=4) * 0.7
    g = phi.grad(x)
    for _ in range(10):
        d = rng.normal(size=4)
        d /= np.linalg.norm(d)
        h = 1e-5
        fd = (phi.value(x + h * d) - phi.value(x - h * d)) / (2 * h)
        assert fd == pytest.approx(g @ d, rel=1e-6, abs=1e-9)


def test_sup_grad_norms(rng):
    rat = RationalPhi()
    xs = rng.normal(size=(20000, 4)) * rng.uniform(0, 2, size=(20000, 1))
    assert np.max(np.linalg.norm(rat.grad(xs), axis=1)) <= rat.sup_grad_norm() + 1e-12
    assert CosinePhi(np.array([3.0, 4.0])).sup_grad_norm() == pytest.approx(5.0)


def test_dict_roundtrips():
    spec = ModelSpec(
        NemytskiiDrift(f=ScalarMap((Term(0.5, "sin", 1.0, 0.0),)), g=ScalarMap((Term(-0.2, "id", 0.0, 1.0),))),
        sigma1=0.3,
    )
    assert ModelSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()
    lspec = lin(a=(0.1, 0.2), c=0.5)
    assert ModelSpec.from_dict(lspec.to_dict()).to_dict() == lspec.to_dict()
    with pytest.raises(ConfigError):
        drift_from_dict({"family": "linear", "bogus": 1.0})
    with pytest.raises(ConfigError):
        phi_from_dict({"family": "cosine", "direction_mode": 9}, 8)
