import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from flowlens.errors import DegenerateSampleError, InvalidParamsError, UnsupportedValuesError
from flowlens.kstest import ks_distance
from flowlens.statdist import (
    FAMILIES,
    Family,
    Params,
    cdf,
    fit_mle,
    fitting_subset,
    sample,
    zero_fraction,
)


def scipy_twin(p: Params):
    """The same distribution built from scipy.stats, used as the reference."""
    v = p.values
    f = p.family
    if f is Family.WEIBULL:
        return stats.weibull_min(v["shape"], scale=v["scale"])
    if f is Family.RAYLEIGH:
        return stats.rayleigh(scale=v["scale"])
    if f is Family.POISSON:
        return stats.poisson(v["rate"])
    if f is Family.NEGATIVE_BINOMIAL:
        return stats.nbinom(v["size"], v["prob"])
    if f is Family.LOGNORMAL:
        return stats.lognorm(v["sigma"], scale=math.exp(v["mu"]))
    if f is Family.GENERALIZED_PARETO:
        return stats.genpareto(v["shape"], scale=v["scale"])
    if f is Family.GEV:
        # scipy's shape has the opposite sign
        return stats.genextreme(-v["shape"], loc=v["loc"], scale=v["scale"])
    if f is Family.EXPONENTIAL:
        return stats.expon(scale=1 / v["rate"])
    return stats.gamma(v["shape"], scale=v["scale"])


EXAMPLES = [
    Params(Family.WEIBULL, {"shape": 0.7, "scale": 2.0}),
    Params(Family.WEIBULL, {"shape": 3.0, "scale": 10.0}),
    Params(Family.RAYLEIGH, {"scale": 1.5}),
    Params(Family.POISSON, {"rate": 3.5}),
    Params(Family.NEGATIVE_BINOMIAL, {"size": 2.5, "prob": 0.4}),
    Params(Family.LOGNORMAL, {"mu": 0.3, "sigma": 0.8}),
    Params(Family.GENERALIZED_PARETO, {"shape": 0.4, "scale": 2.0}),
    Params(Family.GENERALIZED_PARETO, {"shape": -0.3, "scale": 2.0}),
    Params(Family.GEV, {"shape": 0.25, "loc": 3.0, "scale": 1.5}),
    Params(Family.GEV, {"shape": -0.25, "loc": 3.0, "scale": 1.5}),
    Params(Family.GEV, {"shape": 0.0, "loc": 1.0, "scale": 2.0}),
    Params(Family.EXPONENTIAL, {"rate": 0.5}),
    Params(Family.GAMMA, {"shape": 0.6, "scale": 3.0}),
    Params(Family.GAMMA, {"shape": 4.0, "scale": 0.5}),
]
IDS = [repr(p) for p in EXAMPLES]


# -- closed-form examples ---------------------------------------------------

def test_exponential_cdf_zero_at_support_edge():
    assert cdf(Params(Family.EXPONENTIAL, {"rate": 1.0}), 0.0) == 0.0


def test_weibull_unit_cdf_at_one():
    assert cdf(Params(Family.WEIBULL, {"shape": 1.0, "scale": 1.0}), 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert round(float(cdf(Params(Family.WEIBULL, {"shape": 1.0, "scale": 1.0}), 1.0)), 6) == 0.632121


def test_rayleigh_cdf_tends_to_one():
    assert cdf(Params(Family.RAYLEIGH, {"scale": 1.0}), np.inf) == 1.0
    assert cdf(Params(Family.RAYLEIGH, {"scale": 1.0}), 1e6) == pytest.approx(1.0)


def test_fit_exponential_constant_sample():
    assert fit_mle(Family.EXPONENTIAL, [2, 2, 2, 2])["rate"] == pytest.approx(0.5)


def test_fit_poisson_mean():
    assert fit_mle(Family.POISSON, [1, 2, 3])["rate"] == pytest.approx(2.0)


def test_fit_lognormal_two_points():
    p = fit_mle(Family.LOGNORMAL, [1.0, math.e**2])
    assert p["mu"] == pytest.approx(1.0)
    assert p["sigma"] == pytest.approx(1.0)


# -- against scipy ------------------------------------------------------------

@pytest.mark.parametrize("p", EXAMPLES, ids=IDS)
def test_cdf_matches_reference(p):
    ref = scipy_twin(p)
    xs = np.concatenate([ref.ppf(np.linspace(0.001, 0.999, 41)), [-1.0, 0.0, 0.5]])
    if p.family.discrete:
        xs = np.concatenate([xs, np.arange(0, 30) + 0.5])
    np.testing.assert_allclose(cdf(p, xs), ref.cdf(xs), atol=1e-10)


@pytest.mark.parametrize("p", EXAMPLES, ids=IDS)
def test_logpdf_matches_reference(p):
    ref = scipy_twin(p)
    if p.family.discrete:
        xs = np.arange(0, 25, dtype=float)
        np.testing.assert_allclose(p.logpdf(xs), ref.logpmf(xs), rtol=1e-9, atol=1e-9)
    else:
        xs = ref.ppf(np.linspace(0.01, 0.99, 31))
        np.testing.assert_allclose(p.logpdf(xs), ref.logpdf(xs), rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("p", [p for p in EXAMPLES if p.family.discrete], ids=repr)
def test_discrete_cdf_is_a_step_function(p):
    k = np.arange(0, 20, dtype=float)
    np.testing.assert_array_equal(cdf(p, k), cdf(p, k + 0.999))
    np.testing.assert_allclose(p.cdf_left(k + 1), cdf(p, k), atol=1e-15)


@pytest.mark.parametrize("p", [p for p in EXAMPLES if not p.family.discrete], ids=repr)
def test_density_is_derivative_of_cdf(p):
    ref = scipy_twin(p)
    xs = ref.ppf(np.linspace(0.05, 0.95, 19))
    h = 1e-6
    numeric = (cdf(p, xs + h) - cdf(p, xs - h)) / (2 * h)
    np.testing.assert_allclose(numeric, p.pdf(xs), atol=1e-4)


def test_rayleigh_is_weibull_with_shape_two():
    xs = np.linspace(0, 20, 401)
    for sigma in (0.3, 1.0, 4.5):
        r = Params(Family.RAYLEIGH, {"scale": sigma})
        w = Params(Family.WEIBULL, {"shape": 2.0, "scale": sigma * math.sqrt(2)})
        np.testing.assert_allclose(cdf(r, xs), cdf(w, xs), atol=1e-9)


# -- properties ---------------------------------------------------------------

pos = st.floats(0.05, 20.0)


@st.composite
def params_strategy(draw):
    fam = draw(st.sampled_from(FAMILIES))
    if fam is Family.NEGATIVE_BINOMIAL:
        return Params(fam, {"size": draw(pos), "prob": draw(st.floats(0.01, 0.99))})
    if fam is Family.LOGNORMAL:
        return Params(fam, {"mu": draw(st.floats(-3, 3)), "sigma": draw(pos)})
    if fam is Family.GEV:
        return Params(fam, {"shape": draw(st.floats(-0.9, 2.0)), "loc": draw(st.floats(-5, 5)), "scale": draw(pos)})
    if fam is Family.GENERALIZED_PARETO:
        return Params(fam, {"shape": draw(st.floats(-0.9, 3.0)), "scale": draw(pos)})
    return Params(fam, {name: draw(pos) for name in fam.param_names})


@given(params_strategy(), st.floats(-50, 200), st.floats(-50, 200))
def test_cdf_monotone(p, a, b):
    lo, hi = min(a, b), max(a, b)
    assert 0.0 <= cdf(p, lo) <= cdf(p, hi) <= 1.0


@given(params_strategy(), st.integers(1, 200), st.integers(0, 2**32 - 1))
@settings(max_examples=60)
def test_samples_stay_in_support(p, n, seed):
    x = sample(p, n, seed)
    lo, hi = p.support
    assert x.shape == (n,)
    assert np.all(x >= lo) and np.all(x <= hi)
    if p.family.discrete:
        assert np.all(x == np.floor(x))


@given(params_strategy())
@settings(max_examples=30)
def test_params_round_trip(p):
    assert Params.from_dict(p.to_dict()) == p


def test_sampling_is_deterministic():
    p = Params(Family.GAMMA, {"shape": 2.0, "scale": 1.0})
    np.testing.assert_array_equal(sample(p, 50, 9), sample(p, 50, 9))
    assert not np.array_equal(sample(p, 50, 9), sample(p, 50, 10))


def test_rayleigh_draws_non_negative():
    assert np.all(sample(Params(Family.RAYLEIGH, {"scale": 1.0}), 1000, 3) >= 0)


def test_exponential_draws_are_calibrated():
    p = Params(Family.EXPONENTIAL, {"rate": 1.0})
    assert ks_distance(sample(p, 10_000, 2024), p) < 0.02


# -- fitting ------------------------------------------------------------------

RECOVERY = [
    (Family.WEIBULL, {"shape": 1.7, "scale": 4.0}),
    (Family.RAYLEIGH, {"scale": 3.0}),
    (Family.POISSON, {"rate": 7.0}),
    (Family.NEGATIVE_BINOMIAL, {"size": 1.5, "prob": 0.2}),
    (Family.LOGNORMAL, {"mu": 2.0, "sigma": 0.9}),
    (Family.GENERALIZED_PARETO, {"shape": -0.2, "scale": 5.0}),
    (Family.GEV, {"shape": -0.1, "loc": 10.0, "scale": 3.0}),
    (Family.EXPONENTIAL, {"rate": 0.25}),
    (Family.GAMMA, {"shape": 0.8, "scale": 6.0}),
]


@pytest.mark.parametrize("fam,truth", RECOVERY, ids=[f.value for f, _ in RECOVERY])
def test_fit_recovers_parameters(fam, truth):
    fitted = fit_mle(fam, Params(fam, truth).sample(5000, 11))
    for name, v in truth.items():
        if name == "shape" and fam in (Family.GEV, Family.GENERALIZED_PARETO):
            assert abs(fitted[name] - v) <= 0.1
        else:
            assert fitted[name] == pytest.approx(v, rel=0.1)


def _loglik_grid(fam, x, cols):
    """Log-likelihood of ``x`` at every grid point (columns are parameter arrays)."""
    x = x[:, None]
    v = dict(zip(fam.param_names, cols))
    with np.errstate(all="ignore"):
        if fam is Family.WEIBULL:
            ll = stats.weibull_min.logpdf(x, v["shape"], scale=v["scale"])
        elif fam is Family.GAMMA:
            ll = stats.gamma.logpdf(x, v["shape"], scale=v["scale"])
        elif fam is Family.NEGATIVE_BINOMIAL:
            ll = stats.nbinom.logpmf(x, v["size"], v["prob"])
        elif fam is Family.GENERALIZED_PARETO:
            ll = stats.genpareto.logpdf(x, v["shape"], scale=v["scale"])
        else:
            ll = stats.genextreme.logpdf(x, -v["shape"], loc=v["loc"], scale=v["scale"])
        return np.nan_to_num(ll, nan=-np.inf).sum(axis=0)


def _grid_best(fam, x, centre, width=0.6, n=90):
    """Largest log-likelihood over a dense grid around ``centre``."""
    axes = []
    for name in fam.param_names:
        c = centre[name]
        if name == "shape" and fam in (Family.GEV, Family.GENERALIZED_PARETO):
            axes.append(np.linspace(c - 0.3, c + 0.3, n))
        elif name == "prob":
            axes.append(np.clip(np.linspace(c * (1 - width), c * (1 + width), n), 1e-6, 1 - 1e-6))
        elif name == "loc":
            axes.append(np.linspace(c - width * (abs(c) + 1), c + width * (abs(c) + 1), n))
        else:
            axes.append(np.linspace(c * (1 - width), c * (1 + width), n))
    cols = [g.ravel() for g in np.meshgrid(*axes, indexing="ij")]
    return float(np.max(_loglik_grid(fam, x, cols)))


SMALL = {
    Family.WEIBULL: [0.4, 1.1, 1.3, 2.2, 2.9, 3.5, 4.8, 7.0],
    Family.GAMMA: [0.4, 1.1, 1.3, 2.2, 2.9, 3.5, 4.8, 7.0],
    Family.NEGATIVE_BINOMIAL: [0, 1, 1, 2, 4, 5, 7, 9, 12, 3],
    Family.GENERALIZED_PARETO: [0.2, 0.5, 0.9, 1.4, 2.0, 3.1, 4.4, 8.0],
    Family.GEV: [1.0, 1.8, 2.1, 2.6, 3.3, 3.9, 5.2, 7.5, 2.4],
}


@pytest.mark.parametrize("fam", list(SMALL), ids=[f.value for f in SMALL])
def test_numeric_fits_beat_dense_grid(fam):
    x = np.asarray(SMALL[fam], dtype=float)
    fitted = fit_mle(fam, x)
    ref = scipy_twin(fitted)
    ll = np.sum(ref.logpmf(x) if fam.discrete else ref.logpdf(x))
    n = 60 if fam is Family.GEV else 300
    grid = _grid_best(fam, x, fitted.values, n=n)
    assert ll >= grid - 1e-6 * abs(grid)


def test_zero_rule_drops_zeros_for_positive_families():
    x = [0, 0, 1, 2, 3, 0, 5]
    for fam in FAMILIES:
        sub = fitting_subset(fam, x)
        if fam.positive_support:
            assert 0 not in sub and zero_fraction(fam, x) == pytest.approx(3 / 7)
        else:
            assert sub.size == len(x) and zero_fraction(fam, x) == 0.0


def test_positive_family_letters_are_the_zero_dropping_ones():
    assert {f.letter for f in FAMILIES if f.positive_support} == set("WRLGT")


def test_family_kinds():
    assert {f for f in FAMILIES if f.discrete} == {Family.POISSON, Family.NEGATIVE_BINOMIAL}
    assert [f.letter for f in FAMILIES] == list("WRPNLTVEG")


@pytest.mark.parametrize(
    "fam,values",
    [
        (Family.WEIBULL, {"shape": -1.0, "scale": 1.0}),
        (Family.RAYLEIGH, {"scale": 0.0}),
        (Family.POISSON, {"rate": 0.0}),
        (Family.NEGATIVE_BINOMIAL, {"size": 3.0, "prob": 1.0}),
        (Family.LOGNORMAL, {"mu": 0.0, "sigma": -0.1}),
        (Family.GAMMA, {"shape": 1.0}),
        (Family.EXPONENTIAL, {"rate": float("nan")}),
    ],
)
def test_invalid_params_rejected(fam, values):
    with pytest.raises(InvalidParamsError):
        Params(fam, values)


def test_degenerate_and_unsupported_samples():
    with pytest.raises(DegenerateSampleError):
        fit_mle(Family.WEIBULL, [3.0] * 10)
    with pytest.raises(DegenerateSampleError):
        fit_mle(Family.LOGNORMAL, [0, 0, 0])
    with pytest.raises(UnsupportedValuesError):
        fit_mle(Family.POISSON, [1.5, 2, 3])
    with pytest.raises(UnsupportedValuesError):
        fit_mle(Family.GAMMA, [-1.0, 2.0, 3.0])
