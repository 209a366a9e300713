"""Mann-Whitney U test and policy comparison summaries."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Literal, Sequence

import numpy as np

Alternative = Literal["auto", "greater", "less"]

# exact null distribution below this smaller-sample size (and total n cap)
EXACT_MAX_SMALL = 8
EXACT_MAX_TOTAL = 200


class EmptySample(ValueError):
    pass


class MissingCell(KeyError):
    pass


@dataclass(frozen=True)
class UTestResult:
    U: float
    p_one: float
    p_two: float
    method: str
    n_a: int
    n_b: int

    def __iter__(self):
        # unpacks as (U, p_two_sided, p_one_sided)
        return iter((self.U, self.p_two, self.p_one))

    def to_dict(self) -> dict:
        return asdict(self)


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the average rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    xs = x[order]
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def u_statistic(a: Sequence[float], b: Sequence[float]) -> float:
    """U for sample ``a``: pairs with a > b plus half the ties."""
    a = np.asarray(a, dtype=float)
    r = midranks(np.concatenate([a, np.asarray(b, dtype=float)]))
    n_a = len(a)
    return float(r[:n_a].sum() - n_a * (n_a + 1) / 2)


def _exact_tails(ranks2: np.ndarray, n_a: int, s_obs: int) -> tuple[float, float]:
    """P(S >= s_obs) and P(S <= s_obs) for S the sum of doubled ranks of a random n_a-subset."""
    # counts[k][s] = number of k-subsets with doubled-rank sum s
    counts: list[dict[int, int]] = [dict() for _ in range(n_a + 1)]
    counts[0][0] = 1
    for r in ranks2:
        r = int(r)
        for k in range(min(n_a, len(counts) - 1), 0, -1):
            prev = counts[k - 1]
            cur = counts[k]
            for s, c in prev.items():
                cur[s + r] = cur.get(s + r, 0) + c
    dist = counts[n_a]
    total = sum(dist.values())
    ge = sum(c for s, c in dist.items() if s >= s_obs)
    le = sum(c for s, c in dist.items() if s <= s_obs)
    return ge / total, le / total


def _normal_tails(a_ranks_sum: float, ranks: np.ndarray, n_a: int, n_b: int) -> tuple[float, float]:
    n = n_a + n_b
    u = a_ranks_sum - n_a * (n_a + 1) / 2
    mu = n_a * n_b / 2
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1)) if n > 1 else 0.0
    var = n_a * n_b / 12 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0, 1.0
    sd = math.sqrt(var)
    z_ge = (u - mu - 0.5) / sd
    z_le = (u - mu + 0.5) / sd
    p_ge = 0.5 * math.erfc(z_ge / math.sqrt(2))
    p_le = 0.5 * math.erfc(-z_le / math.sqrt(2))
    return min(1.0, p_ge), min(1.0, p_le)


def mann_whitney_u(
    a: Sequence[float],
    b: Sequence[float],
    alternative: Alternative = "auto",
    method: str = "auto",
) -> UTestResult:
    """Two-sample rank test of ``a`` against ``b``.

    ``p_one`` is one-sided: ``"greater"`` tests a stochastically larger than
    b, ``"less"`` the reverse, and ``"auto"`` takes the tail in the direction
    of the observed effect. ``p_two`` is ``min(1, 2 * p_one)`` of the
    smaller tail. Small samples use the exact permutation distribution
    (ties handled through midranks); larger ones use the tie-corrected
    normal approximation with continuity correction.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n_a, n_b = len(a), len(b)
    if n_a == 0 or n_b == 0:
        raise EmptySample("both samples must be non-empty")
    if np.isnan(a).any() or np.isnan(b).any():
        raise ValueError("samples must not contain NaN")
    ranks = midranks(np.concatenate([a, b]))
    rsum = float(ranks[:n_a].sum())
    U = rsum - n_a * (n_a + 1) / 2
    if method == "auto":
        method = "exact" if min(n_a, n_b) < EXACT_MAX_SMALL and n_a + n_b <= EXACT_MAX_TOTAL else "normal"
    if method == "exact":
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        p_ge, p_le = _exact_tails(ranks2, n_a, int(ranks2[:n_a].sum()))
    elif method == "normal":
        p_ge, p_le = _normal_tails(rsum, ranks, n_a, n_b)
    else:
        raise ValueError(f"unknown method {method!r}")
    p_two = min(1.0, 2 * min(p_ge, p_le))
    if alternative == "greater":
        p_one = p_ge
    elif alternative == "less":
        p_one = p_le
    elif alternative == "auto":
        p_one = p_ge if U >= n_a * n_b / 2 else p_le
    else:
        raise ValueError(f"unknown alternative {alternative!r}")
    return UTestResult(U, p_one, p_two, method, n_a, n_b)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class Comparison:
    metric: str
    mean_a: float
    std_a: float
    mean_b: float
    std_b: float
    n_a: int
    n_b: int
    U: float
    p_one: float
    p_two: float
    method: str
    stars: str
    percent_change: float

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return d


def sample_std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def compare(a: Sequence[float], b: Sequence[float], metric: str = "D", alternative: Alternative = "auto") -> Comparison:
    """Summary of ``a`` versus ``b``; percent change is relative to b's mean."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    res = mann_whitney_u(a, b, alternative)
    mb = float(b.mean())
    change = 100.0 * (float(a.mean()) - mb) / mb if mb != 0 else math.nan
    return Comparison(
        metric,
        float(a.mean()),
        sample_std(a),
        mb,
        sample_std(b),
        len(a),
        len(b),
        res.U,
        res.p_one,
        res.p_two,
        res.method,
        significance_stars(res.p_one),
        change,
    )
