"""Candidate distribution families: CDF/density evaluation, MLE fitting, seeded sampling.

Fitting works on the weighted set of distinct sample values, which keeps the
likelihood cheap for per-second count data (a few dozen distinct integers
repeated thousands of times).

Zero handling: families whose log-density is undefined at 0 (Weibull,
Rayleigh, Lognormal, Gamma) and the threshold-excess GPD are fitted to the
strictly positive part of the sample only. :func:`zero_fraction` reports how
much was dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping

import numpy as np
from scipy import optimize, special

from .errors import (
    DegenerateSampleError,
    InvalidParamsError,
    NoConvergenceError,
    UnsupportedValuesError,
)

# Optimizer budget for every numerical profile search.
MAXITER = 200
XTOL = 1e-8
_GRID = 16


class Family(str, Enum):
    WEIBULL = "WEIBULL"
    RAYLEIGH = "RAYLEIGH"
    POISSON = "POISSON"
    NEGATIVE_BINOMIAL = "NEGATIVE_BINOMIAL"
    LOGNORMAL = "LOGNORMAL"
    GENERALIZED_PARETO = "GENERALIZED_PARETO"
    GEV = "GEV"
    EXPONENTIAL = "EXPONENTIAL"
    GAMMA = "GAMMA"

    @property
    def discrete(self) -> bool:
        return self in (Family.POISSON, Family.NEGATIVE_BINOMIAL)

    @property
    def kind(self) -> str:
        return "discrete" if self.discrete else "continuous"

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self]

    @property
    def n_params(self) -> int:
        return len(_PARAM_NAMES[self])

    @property
    def letter(self) -> str:
        return _LETTERS[self]

    @property
    def positive_support(self) -> bool:
        """True when zeros are dropped before fitting."""
        return self in _DROP_ZEROS


_PARAM_NAMES = {
    Family.WEIBULL: ("shape", "scale"),
    Family.RAYLEIGH: ("scale",),
    Family.POISSON: ("rate",),
    Family.NEGATIVE_BINOMIAL: ("size", "prob"),
    Family.LOGNORMAL: ("mu", "sigma"),
    Family.GENERALIZED_PARETO: ("shape", "scale"),
    Family.GEV: ("shape", "loc", "scale"),
    Family.EXPONENTIAL: ("rate",),
    Family.GAMMA: ("shape", "scale"),
}

# L/G/P/V/T/W follow the usual best-fit grid legend; R/N/E fill the rest.
_LETTERS = {
    Family.WEIBULL: "W",
    Family.RAYLEIGH: "R",
    Family.POISSON: "P",
    Family.NEGATIVE_BINOMIAL: "N",
    Family.LOGNORMAL: "L",
    Family.GENERALIZED_PARETO: "T",
    Family.GEV: "V",
    Family.EXPONENTIAL: "E",
    Family.GAMMA: "G",
}

_DROP_ZEROS = frozenset(
    {Family.WEIBULL, Family.RAYLEIGH, Family.LOGNORMAL, Family.GAMMA, Family.GENERALIZED_PARETO}
)

FAMILIES: tuple[Family, ...] = tuple(Family)


@dataclass(frozen=True, eq=True)
class Params:
    """A family together with its named parameter values."""

    family: Family
    values: Mapping[str, float]

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        names = fam.param_names
        if set(self.values) != set(names):
            raise InvalidParamsError(f"{fam.value} expects parameters {names}, got {sorted(self.values)}")
        vals = {}
        for name in names:
            try:
                v = float(self.values[name])
            except (TypeError, ValueError) as exc:
                raise InvalidParamsError(f"{name} is not a number") from exc
            if not math.isfinite(v):
                raise InvalidParamsError(f"{name} must be finite")
            vals[name] = v
        object.__setattr__(self, "values", vals)
        _validate(fam, vals)

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    @property
    def support(self) -> tuple[float, float]:
        return _support(self.family, self.values)

    def cdf(self, x):
        return cdf(self, x)

    def cdf_left(self, x):
        return cdf_left(self, x)

    def logpdf(self, x):
        return logpdf(self, x)

    def pdf(self, x):
        return np.exp(logpdf(self, x))

    def sample(self, n: int, seed: int) -> np.ndarray:
        return sample(self, n, seed)

    def loglik(self, samples) -> float:
        return float(np.sum(logpdf(self, np.asarray(samples, dtype=float))))

    def to_dict(self) -> dict:
        return {"family": self.family.value, "values": dict(self.values)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Params":
        try:
            return cls(Family(d["family"]), dict(d["values"]))
        except (KeyError, ValueError) as exc:
            raise InvalidParamsError(f"bad params document: {d!r}") from exc

    def __repr__(self):
        inner = ", ".join(f"{k}={v:.6g}" for k, v in self.values.items())
        return f"{self.family.value}({inner})"


def _validate(fam: Family, v: dict) -> None:
    positive = {
        Family.WEIBULL: ("shape", "scale"),
        Family.RAYLEIGH: ("scale",),
        Family.POISSON: ("rate",),
        Family.NEGATIVE_BINOMIAL: ("size",),
        Family.LOGNORMAL: ("sigma",),
        Family.GENERALIZED_PARETO: ("scale",),
        Family.GEV: ("scale",),
        Family.EXPONENTIAL: ("rate",),
        Family.GAMMA: ("shape", "scale"),
    }[fam]
    for name in positive:
        if v[name] <= 0:
            raise InvalidParamsError(f"{fam.value}.{name} must be > 0 (got {v[name]})")
    if fam is Family.NEGATIVE_BINOMIAL and not 0 < v["prob"] < 1:
        raise InvalidParamsError(f"NEGATIVE_BINOMIAL.prob must be in (0, 1) (got {v['prob']})")


def _support(fam: Family, v: dict) -> tuple[float, float]:
    if fam is Family.GENERALIZED_PARETO:
        xi, s = v["shape"], v["scale"]
        return (0.0, -s / xi if xi < 0 else math.inf)
    if fam is Family.GEV:
        xi, mu, s = v["shape"], v["loc"], v["scale"]
        if xi > 0:
            return (mu - s / xi, math.inf)
        if xi < 0:
            return (-math.inf, mu - s / xi)
        return (-math.inf, math.inf)
    return (0.0, math.inf)


def _coerce(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


# ---------------------------------------------------------------- evaluation


def cdf(params: Params, x):
    """Right-continuous CDF; a step function over the integers for discrete families."""
    if not isinstance(params, Params):
        raise InvalidParamsError("expected Params")
    x, scalar = _coerce(x)
    fam, v = params.family, params.values
    with np.errstate(all="ignore"):
        if fam is Family.WEIBULL:
            xp = np.maximum(x, 0.0)
            out = -np.expm1(-((xp / v["scale"]) ** v["shape"]))
        elif fam is Family.RAYLEIGH:
            xp = np.maximum(x, 0.0)
            out = -np.expm1(-0.5 * (xp / v["scale"]) ** 2)
        elif fam is Family.EXPONENTIAL:
            out = -np.expm1(-v["rate"] * np.maximum(x, 0.0))
        elif fam is Family.GAMMA:
            out = special.gammainc(v["shape"], np.maximum(x, 0.0) / v["scale"])
        elif fam is Family.LOGNORMAL:
            z = (np.log(np.where(x > 0, x, 1.0)) - v["mu"]) / v["sigma"]
            out = np.where(x > 0, special.ndtr(z), 0.0)
        elif fam is Family.POISSON:
            k = np.floor(x)
            out = np.where(k >= 0, special.pdtr(np.maximum(k, 0), v["rate"]), 0.0)
        elif fam is Family.NEGATIVE_BINOMIAL:
            k = np.floor(x)
            out = np.where(k >= 0, special.betainc(v["size"], np.maximum(k, 0) + 1.0, v["prob"]), 0.0)
        elif fam is Family.GENERALIZED_PARETO:
            out = _gpd_cdf(x, v["shape"], v["scale"])
        elif fam is Family.GEV:
            out = _gev_cdf(x, v["shape"], v["loc"], v["scale"])
        else:  # pragma: no cover
            raise InvalidParamsError(f"unknown family {fam}")
        if not fam.discrete and fam is not Family.GEV:
            out = np.where(x < 0, 0.0, out)
        out = np.where(np.isnan(x), np.nan, np.clip(out, 0.0, 1.0))
    return _out(out, scalar)


def cdf_left(params: Params, x):
    """Left limit F(x-). Equals cdf for continuous families."""
    if params.family.discrete:
        x, scalar = _coerce(x)
        return _out(np.asarray(cdf(params, np.ceil(x) - 1.0)), scalar)
    return cdf(params, x)


def _gpd_cdf(x, xi, s):
    xp = np.maximum(x, 0.0)
    if abs(xi) < 1e-12:
        return -np.expm1(-xp / s)
    arg = xi * xp / s
    inside = arg > -1.0
    out = -np.expm1(-np.log1p(np.where(inside, arg, 0.0)) / xi)
    return np.where(inside, out, 1.0)


def _gev_cdf(x, xi, mu, s):
    z = (x - mu) / s
    if abs(xi) < 1e-12:
        return np.exp(-np.exp(-z))
    arg = xi * z
    inside = arg > -1.0
    t = np.exp(-np.log1p(np.where(inside, arg, 0.0)) / xi)
    below = 0.0 if xi > 0 else 1.0
    return np.where(inside, np.exp(-t), below)


def logpdf(params: Params, x):
    """Log density (log mass for discrete families); -inf outside the support."""
    x, scalar = _coerce(x)
    fam, v = params.family, params.values
    with np.errstate(all="ignore"):
        if fam is Family.WEIBULL:
            k, lam = v["shape"], v["scale"]
            r = x / lam
            out = np.log(k / lam) + (k - 1) * np.log(r) - r**k
            out = np.where(x > 0, out, -np.inf if k > 1 else (np.log(k / lam) if k == 1 else np.inf))
            out = np.where(x < 0, -np.inf, out)
        elif fam is Family.RAYLEIGH:
            s = v["scale"]
            out = np.where(x > 0, np.log(x) - 2 * np.log(s) - 0.5 * (x / s) ** 2, -np.inf)
        elif fam is Family.EXPONENTIAL:
            lam = v["rate"]
            out = np.where(x >= 0, np.log(lam) - lam * x, -np.inf)
        elif fam is Family.GAMMA:
            a, s = v["shape"], v["scale"]
            out = -special.gammaln(a) - a * np.log(s) + (a - 1) * np.log(x) - x / s
            out = np.where(x > 0, out, -np.inf)
        elif fam is Family.LOGNORMAL:
            mu, sg = v["mu"], v["sigma"]
            lx = np.log(x)
            out = -lx - np.log(sg) - 0.5 * np.log(2 * np.pi) - 0.5 * ((lx - mu) / sg) ** 2
            out = np.where(x > 0, out, -np.inf)
        elif fam is Family.POISSON:
            lam = v["rate"]
            out = x * np.log(lam) - lam - special.gammaln(x + 1)
            out = np.where((x >= 0) & (x == np.floor(x)), out, -np.inf)
        elif fam is Family.NEGATIVE_BINOMIAL:
            r, p = v["size"], v["prob"]
            out = (
                special.gammaln(x + r) - special.gammaln(r) - special.gammaln(x + 1)
                + r * np.log(p) + x * np.log1p(-p)
            )
            out = np.where((x >= 0) & (x == np.floor(x)), out, -np.inf)
        elif fam is Family.GENERALIZED_PARETO:
            xi, s = v["shape"], v["scale"]
            if abs(xi) < 1e-12:
                out = -np.log(s) - x / s
                out = np.where(x >= 0, out, -np.inf)
            else:
                arg = xi * x / s
                ok = (x >= 0) & (arg > -1)
                out = np.where(ok, -np.log(s) - (1 + 1 / xi) * np.log1p(np.where(ok, arg, 0.0)), -np.inf)
        elif fam is Family.GEV:
            xi, mu, s = v["shape"], v["loc"], v["scale"]
            z = (x - mu) / s
            if abs(xi) < 1e-12:
                out = -np.log(s) - z - np.exp(-z)
            else:
                arg = xi * z
                ok = arg > -1
                ls = np.log1p(np.where(ok, arg, 0.0))
                out = np.where(ok, -np.log(s) - (1 + 1 / xi) * ls - np.exp(-ls / xi), -np.inf)
        else:  # pragma: no cover
            raise InvalidParamsError(f"unknown family {fam}")
    return _out(out, scalar)


# ------------------------------------------------------------------ sampling


def sample(params: Params, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. values; identical output for identical (params, n, seed)."""
    if not isinstance(params, Params):
        raise InvalidParamsError("expected Params")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    fam, v = params.family, params.values
    if fam is Family.WEIBULL:
        out = v["scale"] * rng.weibull(v["shape"], n)
    elif fam is Family.RAYLEIGH:
        out = rng.rayleigh(v["scale"], n)
    elif fam is Family.POISSON:
        out = rng.poisson(v["rate"], n).astype(float)
    elif fam is Family.NEGATIVE_BINOMIAL:
        out = rng.negative_binomial(v["size"], v["prob"], n).astype(float)
    elif fam is Family.LOGNORMAL:
        out = rng.lognormal(v["mu"], v["sigma"], n)
    elif fam is Family.EXPONENTIAL:
        out = rng.exponential(1.0 / v["rate"], n)
    elif fam is Family.GAMMA:
        out = rng.gamma(v["shape"], v["scale"], n)
    elif fam is Family.GENERALIZED_PARETO:
        xi, s = v["shape"], v["scale"]
        e = rng.standard_exponential(n)
        out = s * e if abs(xi) < 1e-12 else s * np.expm1(xi * e) / xi
    elif fam is Family.GEV:
        xi, mu, s = v["shape"], v["loc"], v["scale"]
        e = rng.standard_exponential(n)
        le = np.log(e)
        out = mu - s * le if abs(xi) < 1e-12 else mu + s * np.expm1(-xi * le) / xi
    else:  # pragma: no cover
        raise InvalidParamsError(f"unknown family {fam}")
    return np.asarray(out, dtype=float)


# ------------------------------------------------------------------- fitting


class _Weighted:
    """Distinct values with multiplicities."""

    __slots__ = ("x", "w", "n", "mean")

    def __init__(self, values: np.ndarray):
        self.x, counts = np.unique(values, return_counts=True)
        self.w = counts.astype(float)
        self.n = float(self.w.sum())
        self.mean = float(np.dot(self.w, self.x) / self.n)

    @property
    def distinct(self) -> int:
        return int(self.x.size)

    def wsum(self, arr) -> float:
        return float(np.dot(self.w, arr))


def _as_array(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DegenerateSampleError("empty sample")
    if not np.all(np.isfinite(x)):
        raise UnsupportedValuesError("sample contains non-finite values")
    return x


def fitting_subset(family: Family, samples) -> np.ndarray:
    """The part of ``samples`` that ``family`` is actually fitted to."""
    family = Family(family)
    x = _as_array(samples)
    if family is not Family.GEV and np.any(x < 0):
        raise UnsupportedValuesError(f"{family.value} needs non-negative values")
    if family.discrete and np.any(x != np.floor(x)):
        raise UnsupportedValuesError(f"{family.value} needs integer values")
    if family.positive_support:
        x = x[x > 0]
        if x.size == 0:
            raise DegenerateSampleError(f"{family.value}: no positive values")
    return x


def zero_fraction(family: Family, samples) -> float:
    """Share of the sample discarded by the zero-dropping rule (0 for other families)."""
    x = np.asarray(samples, dtype=float).ravel()
    if not Family(family).positive_support or x.size == 0:
        return 0.0
    return float(np.count_nonzero(x == 0) / x.size)


def fit_mle(family: Family, samples) -> Params:
    """Maximum-likelihood parameters of ``family`` for ``samples``.

    Closed form for Exponential, Rayleigh, Poisson and Lognormal; bounded Brent
    searches over profile likelihoods for the rest.
    """
    family = Family(family)
    x = fitting_subset(family, samples)
    ws = _Weighted(x)
    return _FITTERS[family](ws)


def _need_spread(ws: _Weighted, fam: Family) -> None:
    if ws.distinct < 2:
        raise DegenerateSampleError(f"{fam.value} needs at least two distinct values")


def _lse(v: np.ndarray, w: np.ndarray | None = None) -> float:
    """log(sum(w * exp(v))) without scipy's per-call overhead."""
    m = float(v.max())
    e = np.exp(v - m)
    return m + math.log(float(e.sum() if w is None else np.dot(w, e)))


def _profile_argmax(fun: Callable[[float], float], lo: float, hi: float, grid: int = _GRID) -> tuple[float, float]:
    """Maximise ``fun`` on [lo, hi]: coarse grid to bracket, then bounded Brent."""
    ts = np.linspace(lo, hi, grid)
    vals = np.array([fun(t) for t in ts])
    vals = np.where(np.isnan(vals), -np.inf, vals)
    i = int(np.argmax(vals))
    if not np.isfinite(vals[i]):
        if vals[i] == np.inf:
            raise NoConvergenceError("likelihood is unbounded")
        raise NoConvergenceError("no feasible point on the search interval")
    a, b = ts[max(i - 1, 0)], ts[min(i + 1, grid - 1)]

    def neg(t):
        f = fun(t)
        return np.inf if not np.isfinite(f) else -f

    # infeasible points inside the bracket are +inf; Brent's parabola step then sees inf - inf
    with np.errstate(invalid="ignore"):
        res = optimize.minimize_scalar(
            neg, bounds=(a, b), method="bounded", options={"xatol": XTOL, "maxiter": MAXITER}
        )
    if not res.success and res.status != 0:
        raise NoConvergenceError(f"bounded search stopped: {res.message}")
    if np.isfinite(res.fun) and -res.fun >= vals[i]:
        return float(res.x), float(-res.fun)
    return float(ts[i]), float(vals[i])


# closed forms


def _fit_exponential(ws: _Weighted) -> Params:
    if ws.mean <= 0:
        raise DegenerateSampleError("EXPONENTIAL: sample mean is 0")
    return Params(Family.EXPONENTIAL, {"rate": 1.0 / ws.mean})


def _fit_rayleigh(ws: _Weighted) -> Params:
    s2 = ws.wsum(ws.x**2) / (2 * ws.n)
    return Params(Family.RAYLEIGH, {"scale": math.sqrt(s2)})


def _fit_poisson(ws: _Weighted) -> Params:
    if ws.mean <= 0:
        raise DegenerateSampleError("POISSON: sample mean is 0")
    return Params(Family.POISSON, {"rate": ws.mean})


def _fit_lognormal(ws: _Weighted) -> Params:
    lx = np.log(ws.x)
    mu = ws.wsum(lx) / ws.n
    var = ws.wsum((lx - mu) ** 2) / ws.n
    if var <= 0:
        raise DegenerateSampleError("LOGNORMAL: zero spread of log values")
    return Params(Family.LOGNORMAL, {"mu": mu, "sigma": math.sqrt(var)})


# profile searches


def _fit_weibull(ws: _Weighted) -> Params:
    _need_spread(ws, Family.WEIBULL)
    lx = np.log(ws.x)
    slx = ws.wsum(lx)
    n, logn = ws.n, math.log(ws.n)

    def prof(t):
        k = math.exp(t)
        log_s = _lse(k * lx, ws.w)
        return n * t - n * (log_s - logn) + (k - 1) * slx - n

    t, _ = _profile_argmax(prof, math.log(0.02), math.log(100.0))
    k = math.exp(t)
    scale = math.exp((_lse(k * lx, ws.w) - logn) / k)
    return Params(Family.WEIBULL, {"shape": k, "scale": scale})


def _fit_gamma(ws: _Weighted) -> Params:
    _need_spread(ws, Family.GAMMA)
    m, n = ws.mean, ws.n
    slx = ws.wsum(np.log(ws.x))

    def prof(t):
        a = math.exp(t)
        return -n * special.gammaln(a) - n * a * math.log(m / a) + (a - 1) * slx - n * a

    t, _ = _profile_argmax(prof, math.log(1e-3), math.log(1e5))
    a = math.exp(t)
    return Params(Family.GAMMA, {"shape": a, "scale": m / a})


def _fit_negbin(ws: _Weighted) -> Params:
    _need_spread(ws, Family.NEGATIVE_BINOMIAL)
    m, n = ws.mean, ws.n
    if m <= 0:
        raise DegenerateSampleError("NEGATIVE_BINOMIAL: sample mean is 0")
    const = ws.wsum(special.gammaln(ws.x + 1))

    def prof(t):
        r = math.exp(t)
        # p = r / (r + m) is the exact conditional MLE of the success probability
        log_p = -math.log1p(m / r)
        log_q = -math.log1p(r / m)
        return ws.wsum(special.gammaln(ws.x + r)) - n * special.gammaln(r) - const + n * r * log_p + n * m * log_q

    t, _ = _profile_argmax(prof, math.log(1e-3), math.log(1e6))
    r = math.exp(t)
    p = r / (r + m)
    if not 0 < p < 1:
        raise NoConvergenceError("NEGATIVE_BINOMIAL: probability left (0, 1)")
    return Params(Family.NEGATIVE_BINOMIAL, {"size": r, "prob": p})


_GPD_SHAPES = (-0.9, 3.0)


def _fit_gpd(ws: _Weighted) -> Params:
    _need_spread(ws, Family.GENERALIZED_PARETO)
    x, n, m = ws.x, ws.n, ws.mean
    xmax = float(x[-1])

    def shape_at(theta):
        return ws.wsum(np.log1p(theta * x)) / n

    def prof(theta):
        if theta == 0.0:
            return -n * (math.log(m) + 1.0)
        if theta * xmax <= -1.0:
            return -np.inf
        xi = shape_at(theta)
        ratio = xi / theta
        if not ratio > 0:
            return -np.inf
        return -n * (math.log(ratio) + xi + 1.0)

    def theta_for(xi_target):
        # shape_at is increasing in theta with shape_at(0) = 0
        if xi_target == 0.0:
            return 0.0
        if xi_target < 0:
            lo = -1.0 / xmax * (1 - 1e-12)
            if shape_at(lo) > xi_target:
                return lo
            return optimize.brentq(lambda t: shape_at(t) - xi_target, lo, 0.0, xtol=1e-14)
        hi = 1.0 / m
        while shape_at(hi) < xi_target:
            hi *= 4.0
        return optimize.brentq(lambda t: shape_at(t) - xi_target, 0.0, hi, xtol=1e-14)

    shapes = np.linspace(*_GPD_SHAPES, 40)
    thetas = np.array([theta_for(s) for s in shapes])
    vals = np.array([prof(t) for t in thetas])
    i = int(np.argmax(vals))
    if not np.isfinite(vals[i]):
        raise NoConvergenceError("GENERALIZED_PARETO: no feasible shape")
    a, b = thetas[max(i - 1, 0)], thetas[min(i + 1, len(thetas) - 1)]
    # the xatol budget is relative to the theta scale here
    span = max(b - a, 1e-300)
    with np.errstate(invalid="ignore"):
        res = optimize.minimize_scalar(
            lambda u: -prof(a + u * span), bounds=(0.0, 1.0), method="bounded",
            options={"xatol": XTOL, "maxiter": MAXITER},
        )
    theta = a + float(res.x) * span if -res.fun >= vals[i] else float(thetas[i])
    if theta == 0.0:
        return Params(Family.GENERALIZED_PARETO, {"shape": 0.0, "scale": m})
    xi = shape_at(theta)
    return Params(Family.GENERALIZED_PARETO, {"shape": xi, "scale": xi / theta})


_GEV_SHAPES = (-0.9, 2.0)
_GUMBEL_EPS = 1e-4


def _gev_profile(ws: _Weighted, xi: float) -> tuple[float, float, float]:
    """Max log-likelihood over (loc, scale) for a fixed shape.

    For xi != 0 the scale has a closed form once the support endpoint is fixed,
    leaving a 1-D search over the endpoint offset.
    Returns (loglik, loc, scale).
    """
    x, w, n = ws.x, ws.w, ws.n
    spread = float(x[-1] - x[0])
    lo_d, hi_d = math.log(spread * 1e-6), math.log(spread * 1e6)

    if abs(xi) < _GUMBEL_EPS:
        def gum(t):
            s = math.exp(t)
            mu = -s * (_lse(-x / s, w) - math.log(n))
            return -n * t - ws.wsum((x - mu) / s) - n

        t, ll = _profile_argmax(gum, math.log(spread * 1e-4), math.log(spread * 1e4))
        s = math.exp(t)
        mu = -s * (_lse(-x / s, w) - math.log(n))
        return ll, mu, s

    if xi > 0:
        alpha = 1.0 / xi

        def endpoint(t):
            return x[0] - math.exp(t)

        def prof(t):
            y = x - endpoint(t)
            ly = np.log(y)
            # a**(-alpha) = mean(y**(-alpha))
            log_a = -(_lse(-alpha * ly, w) - math.log(n)) / alpha
            return n * math.log(alpha) + alpha * n * log_a - (1 + alpha) * ws.wsum(ly) - n

        t, ll = _profile_argmax(prof, lo_d, hi_d)
        if t - lo_d < 1e-3:
            raise NoConvergenceError("GEV likelihood unbounded at the lower endpoint")
        y = x - endpoint(t)
        a = math.exp(-(_lse(-alpha * np.log(y), w) - math.log(n)) / alpha)
        scale = xi * a
        return ll, endpoint(t) + a, scale

    beta = -1.0 / xi

    def endpoint(t):
        return x[-1] + math.exp(t)

    def prof(t):
        y = endpoint(t) - x
        ly = np.log(y)
        log_c = (_lse(beta * ly, w) - math.log(n)) / beta
        return n * math.log(beta) - n * beta * log_c + (beta - 1) * ws.wsum(ly) - n

    t, ll = _profile_argmax(prof, lo_d, hi_d)
    y = endpoint(t) - x
    c = math.exp((_lse(beta * np.log(y), w) - math.log(n)) / beta)
    scale = -xi * c
    return ll, endpoint(t) - c, scale


def _fit_gev(ws: _Weighted) -> Params:
    _need_spread(ws, Family.GEV)

    def prof(xi):
        try:
            return _gev_profile(ws, xi)[0]
        except NoConvergenceError:
            return -np.inf

    xi, _ = _profile_argmax(prof, *_GEV_SHAPES)
    _, loc, scale = _gev_profile(ws, xi)
    if abs(xi) < _GUMBEL_EPS:
        xi = 0.0
    params = Params(Family.GEV, {"shape": xi, "loc": loc, "scale": scale})
    lo, hi = params.support
    if ws.x[0] < lo or ws.x[-1] > hi:
        raise NoConvergenceError("GEV support does not cover the sample")
    return params


_FITTERS: dict[Family, Callable[[_Weighted], Params]] = {
    Family.WEIBULL: _fit_weibull,
    Family.RAYLEIGH: _fit_rayleigh,
    Family.POISSON: _fit_poisson,
    Family.NEGATIVE_BINOMIAL: _fit_negbin,
    Family.LOGNORMAL: _fit_lognormal,
    Family.GENERALIZED_PARETO: _fit_gpd,
    Family.GEV: _fit_gev,
    Family.EXPONENTIAL: _fit_exponential,
    Family.GAMMA: _fit_gamma,
}
