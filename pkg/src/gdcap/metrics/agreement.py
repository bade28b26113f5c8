"""Agreement and correlation statistics for rating studies.

Krippendorff's alpha uses the coincidence-matrix formulation with ordinal
distance by default (Likert criteria are ordered); interval distance is
available behind a switch for sensitivity checks.  Missing cells are ignored.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import InsufficientDataError, UndefinedCorrelationError


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation coefficient."""
    if len(xs) != len(ys):
        raise ValueError("sequences must have equal length")
    if len(xs) < 2:
        raise UndefinedCorrelationError("need at least two observations")
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = float(np.sqrt(np.sum(dx * dx) * np.sum(dy * dy)))
    if denom == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant sequence")
    return float(np.sum(dx * dy) / denom)


def average_ranks(values: Sequence[float]) -> List[float]:
    """1-based ranks with ties assigned the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for pos in range(i, j + 1):
            ranks[order[pos]] = avg
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Rank correlation: Pearson over average ranks."""
    return pearson(average_ranks(xs), average_ranks(ys))


def _ordinal_distance_sq(values: List[float], marginals: Dict[float, float]):
    index = {v: i for i, v in enumerate(values)}
    n_values = len(values)
    table = np.zeros((n_values, n_values))
    for a in range(n_values):
        for b in range(a + 1, n_values):
            between = sum(marginals[values[g]] for g in range(a, b + 1))
            d = between - (marginals[values[a]] + marginals[values[b]]) / 2
            table[a, b] = table[b, a] = d * d
    return index, table


def _interval_distance_sq(values: List[float]):
    index = {v: i for i, v in enumerate(values)}
    arr = np.asarray(values, dtype=np.float64)
    diff = arr[:, None] - arr[None, :]
    return index, diff * diff


def krippendorff_alpha(
    ratings: Sequence[Sequence[Optional[float]]], level: str = "ordinal"
) -> float:
    """Alpha = 1 - D_o/D_e over a raters x items matrix with missing cells.

    ``ratings[r][i]`` is rater r's value for item i, or None.  Items with
    fewer than two values are unpairable and ignored.
    """
    if level not in ("ordinal", "interval"):
        raise ValueError(f"unsupported distance level {level!r}")
    if not ratings:
        raise InsufficientDataError("empty rating matrix")
    n_items = max(len(row) for row in ratings)
    units: List[List[float]] = []
    for i in range(n_items):
        unit = [row[i] for row in ratings if i < len(row) and row[i] is not None]
        if len(unit) >= 2:
            units.append(unit)
    if len(units) < 2:
        raise InsufficientDataError("need at least two items with two or more ratings")

    values = sorted({v for unit in units for v in unit})
    if len(values) == 1:
        return 1.0  # no variation anywhere: perfect agreement by convention

    index = {v: i for i, v in enumerate(values)}
    k = len(values)
    coincidence = np.zeros((k, k))
    for unit in units:
        m = len(unit)
        for a in range(m):
            for b in range(m):
                if a != b:
                    coincidence[index[unit[a]], index[unit[b]]] += 1.0 / (m - 1)
    marginal_totals = coincidence.sum(axis=1)
    n = marginal_totals.sum()

    marginals = {v: marginal_totals[index[v]] for v in values}
    if level == "ordinal":
        _, dist_sq = _ordinal_distance_sq(values, marginals)
    else:
        _, dist_sq = _interval_distance_sq(values)

    d_observed = float((coincidence * dist_sq).sum()) / n
    d_expected = float((np.outer(marginal_totals, marginal_totals) * dist_sq).sum()) / (n * (n - 1))
    if d_expected == 0.0:
        return 1.0
    return 1.0 - d_observed / d_expected
