"""Pearson correlation and the Mann-Whitney U test."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, stdtr
from scipy.stats import rankdata

from .errors import ContractError, UndefinedMetricError

# above this many label arrangements the normal approximation is used
EXACT_LIMIT = 20_000


@dataclass(frozen=True)
class PearsonResult:
    r: float
    p: float
    n: int


def pearson(x, y) -> PearsonResult:
    """Sample correlation with a two-sided t-distribution p-value."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(x) != len(y):
        raise ContractError("samples differ in length")
    n = len(x)
    if n < 3:
        raise ContractError("need at least 3 paired observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedMetricError("correlation undefined: zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return PearsonResult(r, 0.0, n)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = float(2.0 * stdtr(n - 2, -abs(t)))
    return PearsonResult(r, min(p, 1.0), n)


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float  # U of the first sample
    p: float
    method: str  # "exact" or "normal"


def mann_whitney_u(a, b, exact_limit: int = EXACT_LIMIT) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test with midranks for ties.

    Small samples use the exact permutation distribution of the midrank sum;
    larger ones a normal approximation with tie-corrected variance and
    continuity correction.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    na, nb = len(a), len(b)
    if na == 0 and nb == 0:
        raise ContractError("both samples are empty")
    if na == 0 or nb == 0:
        raise ContractError("each sample needs at least one observation")
    ranks = rankdata(np.concatenate([a, b]))
    r_a = ranks[:na].sum()
    u = float(r_a - na * (na + 1) / 2.0)
    mean_u = na * nb / 2.0
    n = na + nb
    if math.comb(n, na) <= exact_limit:
        return MannWhitneyResult(u, _exact_p(ranks, na, u, mean_u), "exact")
    _, counts = np.unique(ranks, return_counts=True)
    tie = float(np.sum(counts ** 3 - counts))
    var = na * nb / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0.0:
        return MannWhitneyResult(u, 1.0, "normal")
    z = (abs(u - mean_u) - 0.5) / math.sqrt(var)
    p = 1.0 if z <= 0 else float(2.0 * ndtr(-z))
    return MannWhitneyResult(u, min(p, 1.0), "normal")


def _exact_p(ranks: np.ndarray, na: int, u: float, mean_u: float) -> float:
    offset = na * (na + 1) / 2.0
    observed = abs(u - mean_u)
    # doubled midranks are integers, so the comparison below is exact
    r2 = np.rint(2.0 * ranks).astype(np.int64)
    obs2 = round(2.0 * observed)
    base2 = round(2.0 * (offset + mean_u))
    extreme = 0
    total = 0
    for combo in itertools.combinations(range(len(ranks)), na):
        s2 = int(r2[list(combo)].sum())
        total += 1
        if abs(s2 - base2) >= obs2:
            extreme += 1
    return extreme / total
