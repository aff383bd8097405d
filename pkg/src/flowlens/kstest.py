"""Kolmogorov-Smirnov statistics and KS-driven best-fit selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import EmptySampleError, FlowlensError, InvalidParamsError, NoFamilyFitsError
from .statdist import FAMILIES, Family, Params, fit_mle, zero_fraction

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05
TIE_TOLERANCE = 0.005
MIN_FIT_SAMPLES = 8


def critical_value(alpha: float) -> float:
    """Asymptotic Kolmogorov critical value K_alpha (about 1.3581 at alpha=0.05)."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return float(special.kolmogi(alpha))


@dataclass(frozen=True)
class EmpiricalCdf:
    values: np.ndarray

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalCdf":
        arr = np.sort(np.asarray(samples, dtype=float).ravel())
        if arr.size == 0:
            raise EmptySampleError("empirical CDF of an empty sample")
        return cls(arr)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __call__(self, x):
        return ecdf_eval(self, x)


def ecdf_eval(ecdf: EmpiricalCdf, x):
    """(#values <= x) / n."""
    if ecdf.values.size == 0:
        raise EmptySampleError("empty ECDF")
    res = np.searchsorted(ecdf.values, x, side="right") / ecdf.values.size
    return float(res) if np.ndim(res) == 0 else res


@dataclass(frozen=True)
class KsResult:
    statistic: float
    scaled_statistic: float
    alpha: float
    critical: float
    reject: bool
    n: int
    n2: int | None = None

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "scaled_statistic": self.scaled_statistic,
            "alpha": self.alpha,
            "critical": self.critical,
            "reject": self.reject,
            "n": self.n,
            "n2": self.n2,
        }


def _sorted(samples, name="sample") -> np.ndarray:
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size == 0:
        raise EmptySampleError(f"{name} is empty")
    return np.sort(arr)


def ks_distance(samples, params: Params) -> float:
    """Exact sup |F_n - F| over the real line.

    At each distinct value v with empirical jump from F_n(v-) to F_n(v), the
    supremum is attained at v itself or just below it, where the model takes
    its left limit F(v-) (different from F(v) only for discrete families).
    """
    if not isinstance(params, Params):
        raise InvalidParamsError("expected Params")
    x = _sorted(samples)
    n = x.size
    vals, counts = np.unique(x, return_counts=True)
    upper = np.cumsum(counts) / n
    lower = upper - counts / n
    f = np.asarray(params.cdf(vals), dtype=float)
    f_left = np.asarray(params.cdf_left(vals), dtype=float)
    d = max(float(np.max(np.abs(upper - f))), float(np.max(np.abs(lower - f_left))))
    return min(d, 1.0)


def ks_one_sample(samples, params: Params, alpha: float = DEFAULT_ALPHA) -> KsResult:
    n = np.size(samples)
    d = ks_distance(samples, params)
    scaled = math.sqrt(n) * d
    crit = critical_value(alpha)
    return KsResult(d, scaled, alpha, crit, scaled > crit, int(n))


def ks_statistic_2samp(s1, s2) -> float:
    """D = sup |F1 - F2| evaluated at every point of the merged sample."""
    a = _sorted(s1, "first sample")
    b = _sorted(s2, "second sample")
    merged = np.concatenate([a, b])
    f1 = np.searchsorted(a, merged, side="right") / a.size
    f2 = np.searchsorted(b, merged, side="right") / b.size
    return float(np.max(np.abs(f1 - f2)))


def ks_two_sample(s1, s2, alpha: float = DEFAULT_ALPHA) -> KsResult:
    """Two-sample test: reject when sqrt(n n' / (n + n')) * D > K_alpha."""
    d = ks_statistic_2samp(s1, s2)
    n1, n2 = int(np.size(s1)), int(np.size(s2))
    scaled = math.sqrt(n1 * n2 / (n1 + n2)) * d
    crit = critical_value(alpha)
    return KsResult(d, scaled, alpha, crit, scaled > crit, n1, n2)


@dataclass
class FittedModel:
    """Best-fitting family for one entity's samples."""

    entity_key: str
    params: Params
    ks_distance: float
    accepted: bool
    n: int = 0
    zero_fraction: float = 0.0
    candidates: dict[str, float] = field(default_factory=dict)

    @property
    def family(self) -> Family:
        return self.params.family

    def to_dict(self) -> dict:
        return {
            "entity": self.entity_key,
            "family": self.params.family.value,
            "params": dict(self.params.values),
            "ks_distance": self.ks_distance,
            "accepted": self.accepted,
            "n": self.n,
            "zero_fraction": self.zero_fraction,
            "candidates": dict(self.candidates),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        return cls(
            entity_key=d["entity"],
            params=Params(Family(d["family"]), d["params"]),
            ks_distance=float(d["ks_distance"]),
            accepted=bool(d["accepted"]),
            n=int(d.get("n", 0)),
            zero_fraction=float(d.get("zero_fraction", 0.0)),
            candidates=dict(d.get("candidates", {})),
        )


def fit_all(samples) -> dict[Family, tuple[Params, float]]:
    """Fit every family that accepts this sample; returns family -> (params, D)."""
    out = {}
    for fam in FAMILIES:
        try:
            params = fit_mle(fam, samples)
        except FlowlensError as exc:
            log.debug("skipping %s: %s", fam.value, exc)
            continue
        out[fam] = (params, ks_distance(samples, params))
    return out


def choose(distances: dict[Family, float], tol: float = TIE_TOLERANCE) -> Family:
    """Tie rule: anything within ``tol`` of the smallest D is tied; prefer fewer
    parameters, then the canonical family order."""
    best = min(distances.values())
    tied = [f for f, d in distances.items() if d < best + tol]
    order = {f: i for i, f in enumerate(FAMILIES)}
    return min(tied, key=lambda f: (f.n_params, order[f]))


def select_best_fit(samples, alpha: float = DEFAULT_ALPHA, entity_key: str = "") -> FittedModel:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_FIT_SAMPLES:
        raise EmptySampleError(f"need at least {MIN_FIT_SAMPLES} samples, got {x.size}")
    if np.all(x == x[0]):
        # a point mass is none of the candidate families
        raise NoFamilyFitsError(f"constant sample ({x[0]!r}) for {entity_key or 'sample'}")
    fits = fit_all(x)
    if not fits:
        raise NoFamilyFitsError(f"no family could be fitted to {entity_key or 'sample'}")
    fam = choose({f: d for f, (_, d) in fits.items()})
    params, d = fits[fam]
    crit = critical_value(alpha)
    return FittedModel(
        entity_key=entity_key,
        params=params,
        ks_distance=d,
        accepted=math.sqrt(x.size) * d <= crit,
        n=int(x.size),
        zero_fraction=zero_fraction(fam, x),
        candidates={f.value: dd for f, (_, dd) in fits.items()},
    )


def ks_statistic_sorted(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample D for inputs that are already sorted ascending (no copies made)."""
    merged = np.concatenate([a, b])
    f1 = np.searchsorted(a, merged, side="right") / a.size
    f2 = np.searchsorted(b, merged, side="right") / b.size
    return float(np.max(np.abs(f1 - f2)))
