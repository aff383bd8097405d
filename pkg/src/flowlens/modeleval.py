"""Generic vs interest-based modelling accuracy.

For each grouping of the traffic (per domain, per building, per user-domain
cell, per user-location cell) the interest-based score is the traffic-weighted
mean KS distance of every group against its own best fit. The generic score
uses one model fitted to the pooled samples of all groups of that grouping,
evaluated against each group and weighted the same way.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import EmptyInputError, MissingModelError
from .ingest import TrafficSeries
from .kstest import DEFAULT_ALPHA, FittedModel, ks_distance, select_best_fit

log = logging.getLogger(__name__)

COLUMNS = ("DOMAIN", "LOCATION", "USER_DOMAIN_GROUPS", "USER_LOCATION_GROUPS")
GENERIC = "GENERIC"
INTEREST = "INTEREST_BASED"
DECIMALS = 6


def _counts(s) -> np.ndarray:
    return np.asarray(s.counts if isinstance(s, TrafficSeries) else s, dtype=float).ravel()


def pooled_samples(all_series: Mapping[str, TrafficSeries]) -> np.ndarray:
    if not all_series:
        raise EmptyInputError("no series to pool")
    return np.concatenate([_counts(all_series[k]) for k in sorted(all_series)])


def fit_generic(all_series: Mapping[str, TrafficSeries], alpha: float = DEFAULT_ALPHA) -> FittedModel:
    """Best fit of every bin of every series pooled into one sample."""
    return select_best_fit(pooled_samples(all_series), alpha, entity_key=GENERIC)


@dataclass(frozen=True)
class GroupScore:
    group: str
    weight: float
    ks_distance: float
    family: str

    def to_dict(self) -> dict:
        return {"group": self.group, "weight": self.weight, "ks_distance": self.ks_distance, "family": self.family}


def group_weights(series: Mapping[str, TrafficSeries], weights: Mapping[str, float] | None = None) -> dict[str, float]:
    """Traffic-density share of each non-empty group (flow counts unless ``weights`` given)."""
    raw = {g: float(weights[g]) if weights is not None else float(_counts(s).sum()) for g, s in series.items()}
    raw = {g: w for g, w in raw.items() if w > 0}
    total = math.fsum(raw.values())
    if total <= 0:
        raise EmptyInputError("all groups are empty")
    return {g: w / total for g, w in sorted(raw.items())}


def score_groups(
    models: Mapping[str, FittedModel] | FittedModel,
    series: Mapping[str, TrafficSeries],
    weights: Mapping[str, float] | None = None,
) -> list[GroupScore]:
    """Per-group (weight, D). A single FittedModel is applied to every group."""
    out = []
    for g, w in group_weights(series, weights).items():
        if isinstance(models, FittedModel):
            model = models
        else:
            model = models.get(g)
            if model is None:
                raise MissingModelError(f"no model for group {g!r}")
        out.append(GroupScore(g, w, ks_distance(_counts(series[g]), model.params), model.family.value))
    return out


def weighted_ks(
    models: Mapping[str, FittedModel] | FittedModel,
    series: Mapping[str, TrafficSeries],
    weights: Mapping[str, float] | None = None,
) -> float:
    """sum_g w_g D_g over non-empty groups, w_g = share of traffic."""
    scores = score_groups(models, series, weights)
    return math.fsum(s.weight * s.ks_distance for s in scores)


@dataclass
class ColumnInputs:
    series: Mapping[str, TrafficSeries]
    models: Mapping[str, FittedModel]
    weights: Mapping[str, float] | None = None


@dataclass
class EvalReport:
    columns: list[str]
    generic: dict[str, float]
    interest: dict[str, float]
    generic_models: dict[str, FittedModel]
    details: dict[str, list[GroupScore]] = field(default_factory=dict)
    generic_details: dict[str, list[GroupScore]] = field(default_factory=dict)
    global_generic: bool = False

    @property
    def improvement(self) -> dict[str, float]:
        out = {}
        for c in self.columns:
            g, i = self.generic[c], self.interest[c]
            out[c] = g / i if i > 0 else (1.0 if g == 0 else math.inf)
        return out

    def to_dict(self) -> dict:
        r = lambda v: None if not math.isfinite(v) else round(v, DECIMALS)  # noqa: E731
        return {
            "columns": list(self.columns),
            "rows": {
                GENERIC: {c: r(self.generic[c]) for c in self.columns},
                INTEREST: {c: r(self.interest[c]) for c in self.columns},
            },
            "improvement": {c: r(v) for c, v in self.improvement.items()},
            "global_generic": self.global_generic,
            "generic_models": {
                c: {"family": m.family.value, "params": {k: r(v) for k, v in m.params.values.items()}}
                for c, m in self.generic_models.items()
            },
            "groups": {
                c: [
                    {
                        "group": s.group,
                        "weight": r(s.weight),
                        "ks_distance": r(s.ks_distance),
                        "generic_ks_distance": r(gs.ks_distance),
                        "family": s.family,
                    }
                    for s, gs in zip(self.details.get(c, []), self.generic_details.get(c, []))
                ]
                for c in self.columns
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False) + "\n"

    def to_text(self) -> str:
        width = max(len(c) for c in self.columns + [INTEREST, "improvement"]) + 2
        head = "".ljust(16) + "".join(c.rjust(width) for c in self.columns)
        fmt = lambda v: ("inf" if not math.isfinite(v) else f"{v:.{DECIMALS}f}").rjust(width)  # noqa: E731
        rows = [
            head,
            GENERIC.ljust(16) + "".join(fmt(self.generic[c]) for c in self.columns),
            INTEREST.ljust(16) + "".join(fmt(self.interest[c]) for c in self.columns),
            "improvement".ljust(16) + "".join(fmt(self.improvement[c]) for c in self.columns),
        ]
        return "\n".join(rows) + "\n"


def compare(
    inputs: Mapping[str, ColumnInputs],
    alpha: float = DEFAULT_ALPHA,
    global_generic: bool = False,
) -> EvalReport:
    """Weighted KS distances of the generic and interest-based models per column.

    With ``global_generic`` the generic row holds the single KS distance of
    the pooled sample against the pooled fit instead of the per-group
    weighted distance.
    """
    cols = [c for c in COLUMNS if c in inputs] + sorted(c for c in inputs if c not in COLUMNS)
    if not cols:
        raise EmptyInputError("nothing to evaluate")
    generic, interest, gmodels, details, gdetails = {}, {}, {}, {}, {}
    for c in cols:
        inp = inputs[c]
        # only groups carrying traffic take part
        series = {g: s for g, s in inp.series.items() if _counts(s).sum() > 0}
        gm = fit_generic(series, alpha)
        gmodels[c] = gm
        details[c] = score_groups(inp.models, series, inp.weights)
        gdetails[c] = score_groups(gm, series, inp.weights)
        interest[c] = math.fsum(s.weight * s.ks_distance for s in details[c])
        if global_generic:
            generic[c] = gm.ks_distance
        else:
            generic[c] = math.fsum(s.weight * s.ks_distance for s in gdetails[c])
        log.info("evaluate %s: generic %.4f (%s), interest-based %.4f over %d groups",
                 c, generic[c], gm.family.value, interest[c], len(details[c]))
    return EvalReport(cols, generic, interest, gmodels, details, gdetails, global_generic)
