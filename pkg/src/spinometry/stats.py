"""Reliability and significance kernels.

Implements the three statistical tools the evaluation harness relies on:

* :func:`icc_a1` — intraclass correlation, two-way random effects, absolute
  agreement, single measures (ICC(A,1) in the McGraw & Wong naming). Raters
  are treated as interchangeable measurement instruments, and absolute
  agreement is the clinically relevant question, so every result carries the
  form tag for auditability.
* :func:`wilcoxon_rank_sum` — the unpaired two-sample rank-sum test with
  mid-ranks for ties. Small tie-free samples are evaluated exactly from the
  null rank-sum distribution; everything else uses the tie-corrected normal
  approximation with a 0.5 continuity correction.
* :func:`descriptive` — mean / SD / median / IQR under one fixed quartile
  rule shared by the whole package.

Quartile rule: linear interpolation between order statistics at rank
p*(n-1)+1 (1-based); IQR = Q3 - Q1. SD uses the n-1 sample denominator and
is defined as 0 for a singleton.

All functions are pure and safe for unrestricted concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateVariance, EmptySample

#: Form tag embedded in every ICC result.
ICC_FORM = "two-way random, absolute agreement, single measures (ICC(A,1))"

#: Quartile rule tag embedded in report metadata.
QUARTILE_RULE = "linear interpolation at rank p*(n-1)+1; IQR = Q3 - Q1"

#: Largest min(n1, n2) for which the rank-sum test is evaluated exactly.
EXACT_CUTOFF = 8


@dataclass(frozen=True)
class IccResult:
    """Intraclass correlation for one ratings matrix."""

    icc: float
    n_subjects: int
    k_raters: int
    model: str = ICC_FORM

    def __post_init__(self) -> None:
        if self.n_subjects < 2 or self.k_raters < 2:
            raise ValueError("ICC needs at least 2 subjects and 2 raters")
        if not math.isfinite(self.icc):
            raise ValueError("ICC must be finite")


@dataclass(frozen=True)
class RankSumResult:
    """Two-sample rank-sum test outcome."""

    u_statistic: float
    z_value: float
    p_two_sided: float
    n1: int
    n2: int
    tie_correction_applied: bool
    method: str  # "EXACT" | "NORMAL_APPROX"

    def __post_init__(self) -> None:
        if not (0.0 <= self.u_statistic <= self.n1 * self.n2):
            raise ValueError("U outside [0, n1*n2]")
        if not (0.0 <= self.p_two_sided <= 1.0):
            raise ValueError("p outside [0, 1]")


def _mean_squares(ratings: np.ndarray) -> Tuple[float, float, float]:
    """Two-way ANOVA mean squares (rows, columns, error) of an n x k matrix."""
    n, k = ratings.shape
    grand = ratings.mean()
    row_means = ratings.mean(axis=1)
    col_means = ratings.mean(axis=0)
    ss_rows = k * float(((row_means - grand) ** 2).sum())
    ss_cols = n * float(((col_means - grand) ** 2).sum())
    ss_total = float(((ratings - grand) ** 2).sum())
    # the residual is a sum of squares; cancellation may leave a tiny
    # negative remainder, which would push the ICC of perfect agreement
    # above 1 by an ulp
    ss_err = max(ss_total - ss_rows - ss_cols, 0.0)
    ms_rows = ss_rows / (n - 1)
    ms_cols = ss_cols / (k - 1)
    ms_err = ss_err / ((n - 1) * (k - 1))
    return ms_rows, ms_cols, ms_err


def icc_a1(ratings: Sequence[Sequence[float]]) -> IccResult:
    """Two-way random, absolute-agreement, single-measures ICC.

    ``ratings`` is an n_subjects x k_raters matrix with no missing cells.

    Raises DegenerateVariance when the between-subject variance is zero
    (including the all-cells-equal case) or the ICC denominator vanishes:
    agreement is undefined there, and reporting 1.0 would be misleading.
    """
    m = np.asarray(ratings, dtype=float)
    if m.ndim != 2:
        raise ValueError("ratings must be a 2-D matrix")
    n, k = m.shape
    if n < 2 or k < 2:
        raise ValueError("ICC needs at least 2 subjects and 2 raters")
    if not np.all(np.isfinite(m)):
        raise ValueError("ratings must be finite with no missing cells")

    ms_rows, ms_cols, ms_err = _mean_squares(m)
    if ms_rows == 0.0:
        raise DegenerateVariance("zero between-subject variance")
    denom = ms_rows + (k - 1) * ms_err + (k / n) * (ms_cols - ms_err)
    if denom == 0.0:
        raise DegenerateVariance("ICC denominator is zero")
    return IccResult(icc=(ms_rows - ms_err) / denom, n_subjects=n, k_raters=k)


@dataclass(frozen=True)
class IccMatrix:
    """Pairwise ICC per parameter; None marks undefined cells."""

    rater_ids: Tuple[str, ...]
    parameters: Tuple[str, ...]
    cells: Mapping[Tuple[str, str, str], Optional[float]]  # (param, a, b)

    def value(self, parameter: str, rater_a: str, rater_b: str) -> Optional[float]:
        if rater_a == rater_b:
            return 1.0
        return self.cells[(parameter, *sorted((rater_a, rater_b)))]

    def rows(self) -> List[Dict[str, object]]:
        """Heatmap-ready rows {rater_a, rater_b, parameter, icc}."""
        out: List[Dict[str, object]] = []
        for param in self.parameters:
            for i, ra in enumerate(self.rater_ids):
                for rb in self.rater_ids[i:]:
                    out.append({
                        "rater_a": ra,
                        "rater_b": rb,
                        "parameter": param,
                        "icc": self.value(param, ra, rb),
                    })
        return out


def icc_matrix(raters: Mapping[str, Mapping[str, Sequence[float]]]) -> IccMatrix:
    """Pairwise ICC(A,1) over every rater pair, for each parameter.

    ``raters`` maps rater id -> parameter label -> aligned value vector.
    The diagonal is defined as 1.0; cells whose ICC is undefined
    (DegenerateVariance) are None.
    """
    ids = tuple(sorted(raters))
    if len(ids) < 2:
        raise ValueError("need at least 2 raters")
    params: Tuple[str, ...] = ()
    for rid in ids:
        labels = tuple(raters[rid])
        params = params or labels
        if set(labels) != set(params):
            raise ValueError(f"rater {rid} has a different parameter set")
    cells: Dict[Tuple[str, str, str], Optional[float]] = {}
    for param in params:
        for i, ra in enumerate(ids):
            for rb in ids[i + 1:]:
                va, vb = raters[ra][param], raters[rb][param]
                if len(va) != len(vb):
                    raise ValueError(f"{ra}/{rb} vectors differ in length")
                try:
                    cell: Optional[float] = icc_a1(np.column_stack([va, vb])).icc
                except DegenerateVariance:
                    cell = None
                cells[(param, *sorted((ra, rb)))] = cell
    return IccMatrix(rater_ids=ids, parameters=params, cells=cells)


def _midranks(values: Sequence[float]) -> List[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = (i + j) / 2.0 + 1.0
        for idx in order[i:j + 1]:
            ranks[idx] = mid
        i = j + 1
    return ranks


def _exact_u_tail_counts(n1: int, n2: int) -> List[int]:
    """Null distribution of U for sample sizes n1, n2 without ties.

    Returns counts[u] = number of rank assignments yielding U = u, built
    with the standard recurrence over items of the pooled ranking.
    """
    max_u = n1 * n2
    # counts[m][u]: ways to choose m of the first t pooled ranks with U = u
    counts = [[0] * (max_u + 1) for _ in range(n1 + 1)]
    counts[0][0] = 1
    for t in range(1, n1 + n2 + 1):
        for m in range(min(t, n1), 0, -1):
            # taking pooled rank t as the m-th chosen adds (t - m) to U
            add = t - m
            if add > max_u:
                continue
            row, prev = counts[m], counts[m - 1]
            for u in range(max_u, add - 1, -1):
                if prev[u - add]:
                    row[u] += prev[u - add]
    return counts[n1]


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_rank_sum(sample_a: Sequence[float],
                      sample_b: Sequence[float]) -> RankSumResult:
    """Two-sided unpaired rank-sum test.

    Mid-ranks resolve ties. With min(n1, n2) <= 8 and no ties the two-sided
    p comes from the exact null distribution of U; otherwise from the normal
    approximation with tie-corrected variance and 0.5 continuity correction.
    """
    n1, n2 = len(sample_a), len(sample_b)
    if n1 == 0 or n2 == 0:
        raise EmptySample("both samples must be non-empty")
    pooled = list(sample_a) + list(sample_b)
    ranks = _midranks(pooled)
    r1 = sum(ranks[:n1])
    u1 = r1 - n1 * (n1 + 1) / 2.0

    n = n1 + n2
    tie_sizes = []
    for v in set(pooled):
        t = pooled.count(v)
        if t > 1:
            tie_sizes.append(t)
    has_ties = bool(tie_sizes)

    mu = n1 * n2 / 2.0
    tie_term = sum(t ** 3 - t for t in tie_sizes) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var > 0:
        shift = u1 - mu
        corrected = shift - math.copysign(0.5, shift) if shift != 0.0 else 0.0
        z = corrected / math.sqrt(var)
    else:
        z = 0.0

    if min(n1, n2) <= EXACT_CUTOFF and not has_ties:
        counts = _exact_u_tail_counts(n1, n2)
        lo = min(u1, n1 * n2 - u1)
        hi = max(u1, n1 * n2 - u1)
        total = math.comb(n, n1)
        tail = sum(c for u, c in enumerate(counts) if u <= lo or u >= hi)
        p = min(1.0, tail / total)
        method = "EXACT"
    else:
        p = min(1.0, 2.0 * _norm_sf(abs(z)))
        method = "NORMAL_APPROX"

    return RankSumResult(
        u_statistic=u1,
        z_value=z,
        p_two_sided=p,
        n1=n1,
        n2=n2,
        tie_correction_applied=has_ties,
        method=method,
    )


def descriptive(xs: Sequence[float]) -> Dict[str, float]:
    """Mean, sample SD, median, IQR, and n of a non-empty sample."""
    if len(xs) == 0:
        raise EmptySample("descriptive statistics need a non-empty sample")
    data = sorted(float(x) for x in xs)
    n = len(data)
    mean = sum(data) / n
    if n > 1:
        sd = math.sqrt(sum((x - mean) ** 2 for x in data) / (n - 1))
    else:
        sd = 0.0
    return {
        "mean": mean,
        "sd": sd,
        "median": quantile(data, 0.5),
        "iqr": quantile(data, 0.75) - quantile(data, 0.25),
        "n": n,
    }


def quantile(sorted_xs: Sequence[float], p: float) -> float:
    """Linear-interpolation quantile of an ascending sequence."""
    n = len(sorted_xs)
    if n == 0:
        raise EmptySample("quantile of an empty sample")
    if n == 1:
        return float(sorted_xs[0])
    pos = p * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return float(sorted_xs[lo]) + frac * (float(sorted_xs[hi]) - float(sorted_xs[lo]))
