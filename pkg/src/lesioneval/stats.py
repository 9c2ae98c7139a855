"""Non-parametric method-comparison statistics.

Normality screening (Shapiro-Wilk W with Royston's AS R94 normalizing
transformation), the Wilcoxon signed-rank test for paired samples, the
Mann-Whitney U test for unpaired samples, Bonferroni correction, and the
significance-star convention. The rank tests compute exact two-sided
p-values by enumerating the null distribution for small tie-free samples
and fall back to a tie-corrected, continuity-corrected normal
approximation otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, ndtri

EXACT = "exact"
APPROXIMATE = "approximate"

# Enumeration is used up to these sizes; beyond them the normal
# approximation is already accurate to a few thousandths.
WILCOXON_EXACT_LIMIT = 25
MANN_WHITNEY_EXACT_LIMIT = 20


@dataclass(frozen=True)
class StatTestResult:
    test_name: str
    statistic: float
    p_value: float
    p_adjusted: float
    n: int | tuple[int, int]
    method: str

    def to_dict(self) -> dict:
        return {
            "test": self.test_name,
            "statistic": self.statistic,
            "p": self.p_value,
            "p_adj": self.p_adjusted,
            "n": list(self.n) if isinstance(self.n, tuple) else self.n,
            "method": self.method,
        }


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with tied values sharing the mean of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=float)
    i = 0
    sorted_vals = values[order]
    while i < values.size:
        j = i
        while j < values.size and sorted_vals[j] == sorted_vals[i]:
            j += 1
        ranks[order[i:j]] = (i + 1 + j) / 2.0
        i = j
    return ranks


def _tie_sizes(values: np.ndarray) -> np.ndarray:
    _, counts = np.unique(values, return_counts=True)
    return counts[counts > 1]


# ---------------------------------------------------------------------------
# Shapiro-Wilk (Royston AS R94)
# ---------------------------------------------------------------------------

# Polynomial coefficients of the published approximation, ascending powers.
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -0.0006714)   # mean of the transform, 4 <= n <= 11
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)   # log sd, 4 <= n <= 11
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)  # mean of the transform, n >= 12
_C6 = (-0.4803, -0.082676, 0.0030302)            # log sd, n >= 12


def _poly(coefficients, x: float) -> float:
    total = 0.0
    for power, coef in enumerate(coefficients):
        total += coef * x ** power
    return total


def _shapiro_weights(n: int) -> np.ndarray:
    if n == 3:
        return np.array([-np.sqrt(0.5), 0.0, np.sqrt(0.5)])
    m = ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    ssq = float((m ** 2).sum())
    c = m / np.sqrt(ssq)
    u = 1.0 / np.sqrt(n)
    a = np.empty(n)
    a_n = c[-1] + _poly(_C1, u)
    if n <= 5:
        phi = (ssq - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * a_n ** 2)
        a[1:-1] = m[1:-1] / np.sqrt(phi)
        a[-1], a[0] = a_n, -a_n
    else:
        a_n1 = c[-2] + _poly(_C2, u)
        phi = (ssq - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2) / (1.0 - 2.0 * a_n ** 2 - 2.0 * a_n1 ** 2)
        a[2:-2] = m[2:-2] / np.sqrt(phi)
        a[-1], a[-2] = a_n, a_n1
        a[0], a[1] = -a_n, -a_n1
    return a


def shapiro_wilk(x) -> StatTestResult:
    """Shapiro-Wilk normality test for 3 <= n <= 5000 samples.

    W is the squared correlation between the ordered sample and the expected
    normal order statistics; the p-value comes from Royston's normalizing
    transformation of 1 - W.
    """
    arr = np.sort(np.asarray(x, dtype=float))
    n = arr.size
    if n < 3 or n > 5000:
        raise ValueError(f"shapiro_wilk requires 3 <= n <= 5000, got n={n}")
    if arr[-1] - arr[0] == 0.0:
        raise ValueError("shapiro_wilk requires nonzero variance (all values identical)")
    a = _shapiro_weights(n)
    numerator = float(a @ arr) ** 2
    denominator = float(((arr - arr.mean()) ** 2).sum())
    w = min(numerator / denominator, 1.0)

    if n == 3:
        p = (6.0 / np.pi) * (np.arcsin(np.sqrt(w)) - np.arcsin(np.sqrt(0.75)))
        p = float(min(max(p, 0.0), 1.0))
    elif w >= 1.0:
        p = 1.0
    elif n <= 11:
        gamma = 0.459 * n - 2.273
        log_w1 = np.log(1.0 - w)
        if log_w1 >= gamma:
            p = 1e-19
        else:
            y = -np.log(gamma - log_w1)
            mean = _poly(_C3, float(n))
            sd = np.exp(_poly(_C4, float(n)))
            p = float(1.0 - ndtr((y - mean) / sd))
    else:
        y = np.log(1.0 - w)
        log_n = np.log(n)
        mean = _poly(_C5, log_n)
        sd = np.exp(_poly(_C6, log_n))
        p = float(1.0 - ndtr((y - mean) / sd))
    return StatTestResult("shapiro-wilk", statistic=float(w), p_value=p, p_adjusted=p,
                          n=n, method=APPROXIMATE)


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank
# ---------------------------------------------------------------------------

def _signed_rank_tail(n: int, w: float) -> float:
    """P(W+ <= w) under the tie-free null: subset sums of ranks 1..n."""
    smax = n * (n + 1) // 2
    ways = np.zeros(smax + 1, dtype=np.int64)
    ways[0] = 1
    for i in range(1, n + 1):
        ways[i:] += ways[:-i].copy()
    cutoff = int(np.floor(w + 1e-9))
    return float(ways[: cutoff + 1].sum()) / float(2 ** n)


def wilcoxon_signed_rank(differences) -> StatTestResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zero differences are dropped (Wilcoxon's original rule). The statistic
    is W = min(W+, W-). Exact p by enumeration of all sign assignments when
    n <= 25 without ties in |d|; otherwise a normal approximation with tie
    and continuity corrections.
    """
    d = np.asarray(differences, dtype=float)
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise ValueError("wilcoxon_signed_rank: all differences are zero")
    abs_d = np.abs(d)
    ranks = _midranks(abs_d)
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    has_ties = np.unique(abs_d).size < n

    if n <= WILCOXON_EXACT_LIMIT and not has_ties:
        p = min(1.0, 2.0 * _signed_rank_tail(n, w))
        method = EXACT
    else:
        mean = n * (n + 1) / 4.0
        ties = _tie_sizes(abs_d)
        variance = n * (n + 1) * (2 * n + 1) / 24.0 - float((ties ** 3 - ties).sum()) / 48.0
        if variance <= 0:
            p = 1.0
        else:
            z = (w - mean + 0.5) / np.sqrt(variance)
            p = float(min(1.0, 2.0 * ndtr(z)))
        method = APPROXIMATE
    return StatTestResult("wilcoxon-signed-rank", statistic=w, p_value=p, p_adjusted=p,
                          n=n, method=method)


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------

def _rank_sum_counts(n1: int, total: int) -> np.ndarray:
    """counts[s] = number of n1-subsets of {1..total} with rank sum s."""
    smax = n1 * total - n1 * (n1 - 1) // 2
    ways = np.zeros((n1 + 1, smax + 1), dtype=np.int64)
    ways[0, 0] = 1
    for value in range(1, total + 1):
        for k in range(min(value, n1), 0, -1):
            ways[k, value:] += ways[k - 1, :-value]
    return ways[n1]


def _mann_whitney_tail(n1: int, n2: int, u: float) -> float:
    """P(U <= u) under the tie-free null over all group assignments."""
    counts = _rank_sum_counts(n1, n1 + n2)
    offset = n1 * (n1 + 1) // 2  # U1 = R1 - offset
    cutoff = int(np.floor(u + 1e-9)) + offset
    cutoff = min(cutoff, counts.size - 1)
    return float(counts[: cutoff + 1].sum()) / float(counts.sum())


def mann_whitney_u(a, b) -> StatTestResult:
    """Two-sided Mann-Whitney U test on two independent samples.

    The statistic is U = min(U1, U2) from joint mid-ranks. Exact p by
    enumeration of all group assignments when n1 + n2 <= 20 without ties;
    otherwise a normal approximation with tie and continuity corrections.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise ValueError("mann_whitney_u requires nonempty groups")
    combined = np.concatenate([x, y])
    ranks = _midranks(combined)
    r1 = float(ranks[:n1].sum())
    u1 = r1 - n1 * (n1 + 1) / 2.0
    u2 = n1 * n2 - u1
    u = min(u1, u2)
    has_ties = np.unique(combined).size < n1 + n2

    if n1 + n2 <= MANN_WHITNEY_EXACT_LIMIT and not has_ties:
        p = min(1.0, 2.0 * _mann_whitney_tail(n1, n2, u))
        method = EXACT
    else:
        total = n1 + n2
        mean = n1 * n2 / 2.0
        ties = _tie_sizes(combined)
        tie_term = float((ties ** 3 - ties).sum()) / (total * (total - 1))
        variance = n1 * n2 / 12.0 * ((total + 1) - tie_term)
        if variance <= 0:
            p = 1.0
        else:
            z = (u - mean + 0.5) / np.sqrt(variance)
            p = float(min(1.0, 2.0 * ndtr(z)))
        method = APPROXIMATE
    return StatTestResult("mann-whitney-u", statistic=u, p_value=p, p_adjusted=p,
                          n=(n1, n2), method=method)


# ---------------------------------------------------------------------------
# Multiple-comparison correction and star labels
# ---------------------------------------------------------------------------

def bonferroni(p_values, m: int) -> list[float]:
    """Scale each p-value by the family size m and clamp to 1."""
    values = list(p_values)
    if m < len(values):
        raise ValueError(f"family size m={m} is smaller than the number of p-values ({len(values)})")
    if m < 1:
        raise ValueError(f"family size m must be >= 1, got {m}")
    out = []
    for p in values:
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"p-value {p} outside [0, 1]")
        out.append(min(1.0, m * p))
    return out


def adjust(results: list[StatTestResult], m: int) -> list[StatTestResult]:
    """Return copies of ``results`` with Bonferroni-adjusted p-values."""
    adjusted = bonferroni([r.p_value for r in results], m)
    return [replace(r, p_adjusted=p) for r, p in zip(results, adjusted)]


def significance_stars(p_adjusted: float) -> str:
    """Star label: *** below 0.001, ** below 0.01, * below 0.05, else n.s."""
    if not (0.0 <= p_adjusted <= 1.0):
        raise ValueError(f"p-value {p_adjusted} outside [0, 1]")
    if p_adjusted < 0.001:
        return "***"
    if p_adjusted < 0.01:
        return "**"
    if p_adjusted < 0.05:
        return "*"
    return "n.s."
