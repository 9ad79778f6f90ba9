"""Optimal one-to-one assignment with reproducible tie-breaking.

``scipy.optimize.linear_sum_assignment`` returns *an* optimum; which one it
picks among equal-cost optima depends on solver internals. Evaluation output
must be reproducible, so among all optima we return the pair set that is
lexicographically smallest when sorted by (row, col).
"""

from __future__ import annotations

from typing import Dict, List, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

# Totals closer than this are considered tied.
TIE_TOLERANCE = 1e-9


def _solve(cost: np.ndarray, rows: List[int], cols: List[int]) -> Tuple[float, Dict[int, int]]:
    if not rows or not cols:
        return 0.0, {}
    sub = cost[np.ix_(rows, cols)]
    r, c = linear_sum_assignment(sub)
    plan = {rows[a]: cols[b] for a, b in zip(r.tolist(), c.tolist())}
    return float(sub[r, c].sum()), plan


def min_cost_assignment(cost) -> List[Tuple[int, int]]:
    """Minimum-cost assignment of rows to columns, ``min(n, m)`` pairs.

    Rows are fixed greedily in index order: each row takes the smallest
    column index that still admits a globally optimal completion, or stays
    unassigned when no column does. ``plan`` always holds one optimal
    completion of the current prefix, so a row only pays for solver calls on
    columns smaller than the one its plan already uses.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or 0 in cost.shape:
        return []
    n, m = cost.shape

    target, plan = _solve(cost, list(range(n)), list(range(m)))
    pairs: List[Tuple[int, int]] = []
    fixed = 0.0
    free_cols = list(range(m))
    for i in range(n):
        if not free_cols:
            break
        rest_rows = list(range(i + 1, n))
        planned = plan.get(i)
        for j in free_cols:
            if j == planned:
                break
            rest_cols = [c for c in free_cols if c != j]
            rest_total, rest_plan = _solve(cost, rest_rows, rest_cols)
            if fixed + cost[i, j] + rest_total <= target + TIE_TOLERANCE:
                planned = j
                plan = rest_plan
                break
        else:
            if planned is not None:
                raise AssertionError("planned column missing from free columns")
        if planned is None:
            continue
        pairs.append((i, planned))
        fixed += cost[i, planned]
        free_cols.remove(planned)
    return pairs


def max_weight_assignment(weight) -> List[Tuple[int, int]]:
    return min_cost_assignment(-np.asarray(weight, dtype=float))
