"""Regenerate src/flowlens/data/planted_small.json, the bundled planted corpus.

Ten user groups of ten users, twenty domains in ten groups of uneven size,
thirty buildings in ten location groups. Traffic cells are (user group,
location group) pairs: every group has a home location group with a heavy
cell, and every other group also visits the next location group with a
lighter cell. Each group sends 75% of its flows to one domain group and 25%
to another, swapping the two every five minutes; within a location group the
flow share of the three buildings (60/25/15%) rotates every ten minutes.
Heavy cells use wide continuous families so that rounding to whole counts
barely shows; light cells mostly use the discrete families.
"""

import json
import sys
from pathlib import Path

HOME = [
    ("GAMMA", {"shape": 2.5, "scale": 12.0}),
    ("POISSON", {"rate": 3.0}),
    ("WEIBULL", {"shape": 1.8, "scale": 33.0}),
    ("NEGATIVE_BINOMIAL", {"size": 3.0, "prob": 0.3}),
    ("LOGNORMAL", {"mu": 2.9, "sigma": 0.6}),
    ("RAYLEIGH", {"scale": 6.0}),
    ("GEV", {"shape": 0.1, "loc": 22.0, "scale": 12.0}),
    ("EXPONENTIAL", {"rate": 0.2}),
    ("GENERALIZED_PARETO", {"shape": 0.2, "scale": 4.0}),
    ("NEGATIVE_BINOMIAL", {"size": 2.0, "prob": 0.25}),
]
AWAY = {
    0: ("POISSON", {"rate": 2.0}),
    2: ("NEGATIVE_BINOMIAL", {"size": 2.0, "prob": 0.5}),
    4: ("POISSON", {"rate": 3.0}),
    6: ("NEGATIVE_BINOMIAL", {"size": 1.0, "prob": 0.3}),
    8: ("POISSON", {"rate": 1.5}),
}
DOMAIN_GROUP_SIZES = [1, 2, 3, 2, 1, 3, 2, 3, 1, 2]



def build() -> dict:
    n_groups = 10
    user_groups = [list(range(10 * g, 10 * g + 10)) for g in range(n_groups)]
    domain_groups, start = [], 0
    for size in DOMAIN_GROUP_SIZES:
        domain_groups.append(list(range(start, start + size)))
        start += size
    location_groups = [[3 * g, 3 * g + 1, 3 * g + 2] for g in range(n_groups)]
    cells = []
    for g, (fam, params) in enumerate(HOME):
        cells.append({"user_group": g, "location_group": g, "family": fam, "params": params})
        if g in AWAY:
            fam, params = AWAY[g]
            cells.append({"user_group": g, "location_group": (g + 1) % n_groups, "family": fam, "params": params})
    interests = {str(g): {str(g): 0.75, str((g + 3) % n_groups): 0.25} for g in range(n_groups)}
    return {
        "n_users": 100,
        "n_domains": start,
        "n_buildings": 30,
        "user_groups": user_groups,
        "domain_groups": domain_groups,
        "location_groups": location_groups,
        "cell_axis": "location",
        "cell_models": cells,
        "interests": interests,
        "interest_period": 300,
        "occupancy": [0.6, 0.25, 0.15],
        "occupancy_period": 600,
        "duration": 3600,
        "dwell": 100,
        "seed": 20240611,
    }


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/flowlens/data/planted_small.json"
    out.write_text(json.dumps(build(), indent=1) + "\n")
    print(out)
