"""CSV tables of effort curves, decision probabilities and integrated effort."""

from __future__ import annotations

import csv
import io

import numpy as np

from ..buckets import BucketSet, star_rating
from .density import NAMED_DENSITIES
from .effort import StoppingPredicate, make_predicate
from .lower_bounds import LowerBoundConfig, lower_bound_basic, lower_bound_improved
from .quadrature import effort_curve, integrated_effort, integrated_lower_bound, lower_bound_curve


def p_grid(n: int, lo: float = 1e-5) -> np.ndarray:
    """``n`` log-spaced points from ``lo`` to 1."""
    return np.geomspace(lo, 1.0, n)


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{x:.10g}" if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def effort_csv(bset: BucketSet, eps: float, ps, spending_k: float = 1000.0, delta: float = 1e-3) -> str:
    """Columns ``p, effort_rl, effort_simctest, lower_basic, lower_improved``."""
    ps = np.asarray(ps, dtype=float)
    rl = make_predicate("rl", bset, eps).exit_table.effort(ps)
    sim = make_predicate("simctest", bset, eps, spending_k).exit_table.effort(ps)
    cfg = LowerBoundConfig(eps, delta)
    rows = [
        (float(p), float(a), float(b), lower_bound_basic(p, bset, eps), lower_bound_improved(p, bset, cfg))
        for p, a, b in zip(ps, rl, sim)
    ]
    return _csv(["p", "effort_rl", "effort_simctest", "lower_basic", "lower_improved"], rows)


def rating_columns(bset: BucketSet) -> list[str]:
    """Distinct rating codes in bucket preference order; ``none`` for no stars."""
    codes = []
    for i in bset.tie_break_order:
        c = str(star_rating(bset, bset[i])) or "none"
        if c not in codes:
            codes.append(c)
    return codes


def decision_probs_csv(predicate: StoppingPredicate, ps) -> str:
    """Columns ``p`` and the probability of each rating code."""
    bset = predicate.bset
    cols = rating_columns(bset)
    code_of = [str(star_rating(bset, b)) or "none" for b in bset]
    _, prob, _ = predicate.exit_table.evaluate(np.asarray(ps, dtype=float))
    rows = []
    for p, row in zip(ps, prob):
        agg = dict.fromkeys(cols, 0.0)
        for k, v in enumerate(row):
            agg[code_of[k]] += float(v)
        rows.append([float(p), *agg.values()])
    return _csv(["p", *cols], rows)


def lower_bound_csv(bset: BucketSet, eps: float, ps, delta: float = 1e-3) -> str:
    """Columns ``p, lower_basic, lower_improved``."""
    cfg = LowerBoundConfig(eps, delta)
    rows = [(float(p), lower_bound_basic(p, bset, eps), lower_bound_improved(p, bset, cfg)) for p in ps]
    return _csv(["p", "lower_basic", "lower_improved"], rows)


def table2(bset: BucketSet, eps: float, spending_k: float = 1000.0, delta: float = 1e-3) -> dict[str, dict[str, float]]:
    """Integrated effort of both methods and the lower bound per density."""
    rl = make_predicate("rl", bset, eps)
    sim = make_predicate("simctest", bset, eps, spending_k)
    cfg = LowerBoundConfig(eps, delta)
    curves = {"rl": effort_curve(rl), "simctest": effort_curve(sim)}
    lb = lower_bound_curve(bset, cfg)
    out = {}
    for name, dens in NAMED_DENSITIES.items():
        out[name] = {
            "rl": integrated_effort(dens, rl, curve=curves["rl"]).value,
            "simctest": integrated_effort(dens, sim, curve=curves["simctest"]).value,
            "lower_bound": integrated_lower_bound(dens, bset, cfg, curve=lb).value,
        }
    return out


def table2_csv(table: dict[str, dict[str, float]]) -> str:
    """3x3 table with rows per density and columns ``rl, simctest, lower_bound``."""
    rows = [(name, *(round(v[c], 1) for c in ("rl", "simctest", "lower_bound"))) for name, v in table.items()]
    return _csv(["density", "rl", "simctest", "lower_bound"], rows)
