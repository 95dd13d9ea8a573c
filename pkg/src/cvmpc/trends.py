"""Expected qualitative outcomes of the ablation studies.

Each function takes the campaign's ``ResultsTable`` and returns
``(name, passed, detail)`` triples; the CLI's ``--check`` flag and the
acceptance suite share them.
"""

from __future__ import annotations

import re

from .harness import ResultsTable


def _cells(table: ResultsTable, name: str):
    return [r for r in table.rows if r.table == name]


def _lam(cell: str) -> float:
    m = re.search(r"lam=([0-9.eE+-]+)", cell)
    if m is None:
        raise ValueError(f"cell {cell!r} has no lambda")
    return float(m.group(1))


def grid_checks(table: ResultsTable, min_lam: float = 5.0):
    """The best value cell beats the best one-step cell once lambda >= ``min_lam``."""
    value = [r for r in _cells(table, "value") if _lam(r.cell) >= min_lam]
    one = [r for r in _cells(table, "one_step") if _lam(r.cell) >= min_lam]
    if not value or not one:
        return [("grid value > one-step", False, f"no cells with lambda >= {min_lam:g}")]
    bv = max(value, key=lambda r: r.success_rate)
    bo = max(one, key=lambda r: r.success_rate)
    return [("grid value > one-step", bv.success_rate > bo.success_rate,
             f"best value {bv.cell} {bv.success_rate:.1f}% vs best one-step {bo.cell} "
             f"{bo.success_rate:.1f}%")]


def _mu(cell: str) -> float:
    return float(cell.split(",")[0].split("=")[1])


def biased_checks(table: ResultsTable, margin: float = 0.0):
    """At the lowest true friction CV-MPC beats the biased demonstrator by more than ``margin`` points."""
    rows = _cells(table, "biased")
    if not rows:
        return [("biased improvement", False, "empty table")]
    mu = min(_mu(r.cell) for r in rows)
    demo = table.get(f"mu={mu:g},demonstrator", "biased")
    cv = table.get(f"mu={mu:g},cvmpc", "biased")
    gap = cv.success_rate - demo.success_rate
    passed = gap >= margin if margin > 0 else gap > 0
    return [(f"biased improvement at mu={mu:g}", passed,
             f"cvmpc {cv.success_rate:.1f}% vs demonstrator {demo.success_rate:.1f}% "
             f"(gap {gap:+.1f}, need {'>=' if margin > 0 else '>'} {margin:g})")]


def observation_checks(table: ResultsTable, same_start_rot: float = 90.0):
    rot_same = table.get("rot", "same_start")
    rot_shift = table.get("rot", "shifted_start")
    va_shift = table.get("vel_acc", "shifted_start")
    return [
        ("shifted start rot > vel_acc", rot_shift.success_rate > va_shift.success_rate,
         f"rot {rot_shift.success_rate:.1f}% vs vel_acc {va_shift.success_rate:.1f}%"),
        (f"same start rot >= {same_start_rot:g}%", rot_same.success_rate >= same_start_rot,
         f"rot {rot_same.success_rate:.1f}%"),
    ]


def pessimism_checks(table: ResultsTable):
    isp = table.get("initial_state", "pessimism")
    pwp = table.get("pointwise", "pessimism")
    return [
        ("initial_state success >= pointwise", isp.success_rate >= pwp.success_rate,
         f"{isp.success_rate:.1f}% vs {pwp.success_rate:.1f}%"),
        ("pointwise alpha_max <= initial_state", pwp.alpha_max_mean <= isp.alpha_max_mean,
         f"{pwp.alpha_max_mean:.3f} vs {isp.alpha_max_mean:.3f} deg"),
    ]
