"""Sensitivity of a trained network to single-coordinate NCP perturbations.

For each test NCP whose network output already reaches the fidelity
threshold, every coordinate (slot i, control j) is nudged by ``eps`` and the
l2 distance between the original and perturbed network outputs is recorded.
Pairwise Kruskal-Wallis tests then compare the resulting distributions.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .dynamics import CONTROL_NAMES, SystemSpec, evolve, fidelity
from .lstm import OUTLIER_THRESHOLD, ModelParams, model_forward

logger = logging.getLogger(__name__)


@dataclass
class PerturbationSample:
    record_id: int
    slot: int
    control: str
    epsilon: float
    deviation: float


@dataclass
class ScanResult:
    slots: int
    distributions: dict[tuple[int, str], list[float]]
    samples: list[PerturbationSample] = field(default_factory=list)
    skipped_records: list[int] = field(default_factory=list)
    skipped_perturbations: int = 0

    def keys(self) -> list[tuple[int, str]]:
        return matrix_order(self.slots)


@dataclass
class KwResult:
    h_statistic: float
    p_value: float
    group_sizes: tuple[int, int]


def matrix_order(slots: int) -> list[tuple[int, str]]:
    """Row/column order of the p-value matrix: all x slots, then all z slots."""
    return [(i, c) for c in CONTROL_NAMES for i in range(slots)]


def perturb(ncp: np.ndarray, i: int, j: int, eps: float) -> np.ndarray:
    """Shift entry ``(i, j)`` by ``+eps``, or by ``-eps`` if that would exceed 1."""
    if not 0 <= eps < 2:
        raise ValueError("eps must lie in [0, 2)")
    out = np.array(ncp, dtype=float, copy=True)
    if out[i, j] + eps <= 1.0:
        out[i, j] += eps
    else:
        out[i, j] -= eps
    return out


def sensitivity_scan(
    model: ModelParams,
    testset,
    sys: SystemSpec,
    eps: float = 0.1,
    threshold: float = OUTLIER_THRESHOLD,
) -> ScanResult:
    """Deviation distributions for every (slot, control) over the test set."""
    n = sys.slots
    keys = matrix_order(n)
    result = ScanResult(n, {k: [] for k in keys})
    for rec in testset:
        y = rec.target_superop()
        # one batch for base and perturbed inputs keeps eps=0 deviations exactly zero
        inputs = [rec.ncp] + [perturb(rec.ncp, i, CONTROL_NAMES.index(c), eps) for i, c in keys]
        outs = model_forward(np.stack(inputs), model)
        base = outs[0]
        if fidelity(y, evolve(sys, base)) < threshold:
            result.skipped_records.append(rec.id)
            continue
        for (i, c), out in zip(keys, outs[1:]):
            if fidelity(y, evolve(sys, out)) < threshold:
                result.skipped_perturbations += 1
                continue
            dev = float(np.linalg.norm(out - base))
            result.distributions[(i, c)].append(dev)
            result.samples.append(PerturbationSample(rec.id, i, c, eps, dev))
    if result.skipped_records or result.skipped_perturbations:
        logger.info(
            "scan skipped %d records and %d perturbations below F=%.2f",
            len(result.skipped_records), result.skipped_perturbations, threshold,
        )
    return result


def kruskal_wallis(a, b) -> KwResult:
    """Two-group Kruskal-Wallis test with tie correction and a chi-square(1) p-value.

    When all pooled values are equal the statistic is undefined; it is
    reported as 0 with p = 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be nonempty")
    pooled = np.concatenate([a, b])
    n_total = pooled.size
    ranks = stats.rankdata(pooled)
    mean_rank = (n_total + 1) / 2.0
    h = 0.0
    for r in (ranks[: a.size], ranks[a.size :]):
        h += r.size * (r.mean() - mean_rank) ** 2
    h *= 12.0 / (n_total * (n_total + 1))
    _, tie_counts = np.unique(pooled, return_counts=True)
    correction = 1.0 - np.sum(tie_counts**3 - tie_counts) / (n_total**3 - n_total) if n_total > 1 else 0.0
    if correction <= 0:
        return KwResult(0.0, 1.0, (a.size, b.size))
    h /= correction
    return KwResult(float(h), float(stats.chi2.sf(h, 1)), (a.size, b.size))


def pvalue_matrix(distributions: dict, slots: int | None = None) -> np.ndarray:
    """Symmetric matrix of pairwise p-values; NaN marks an empty distribution."""
    if slots is None:
        slots = max(i for i, _ in distributions) + 1
    keys = matrix_order(slots)
    size = len(keys)
    out = np.full((size, size), np.nan)
    data = [np.asarray(distributions.get(k, []), dtype=float) for k in keys]
    for l in range(size):
        if data[l].size == 0:
            continue
        out[l, l] = 1.0
        for k in range(l + 1, size):
            if data[k].size == 0:
                continue
            out[l, k] = out[k, l] = kruskal_wallis(data[l], data[k]).p_value
    return out


def near_diagonal_concentration(matrix: np.ndarray, band: int = 2, alpha: float = 0.05) -> tuple[float, float]:
    """Fraction of off-diagonal entries with p > alpha inside and outside ``|l - k| <= band``."""
    size = matrix.shape[0]
    l, k = np.indices((size, size))
    off = l != k
    valid = ~np.isnan(matrix)
    above = matrix > alpha
    inside = off & valid & (np.abs(l - k) <= band)
    outside = off & valid & (np.abs(l - k) > band)
    return float(above[inside].mean()), float(above[outside].mean())


def histogram(deviations, bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width histogram over [min, max]; a constant sample gets a unit-width range."""
    values = np.asarray(deviations, dtype=float)
    if values.size == 0:
        raise ValueError("cannot histogram an empty sample")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo, hi = values.min(), values.max()
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    return edges, counts


def write_distributions_csv(path: Path | str, scan: ScanResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "slot", "control", "epsilon", "deviation"])
        for s in scan.samples:
            w.writerow([s.record_id, s.slot, s.control, repr(s.epsilon), repr(s.deviation)])


def write_matrix_csv(path: Path | str, matrix: np.ndarray, slots: int) -> None:
    labels = [f"{c}{i}" for i, c in matrix_order(slots)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key"] + labels)
        for label, row in zip(labels, matrix):
            w.writerow([label] + ["" if np.isnan(v) else repr(float(v)) for v in row])


def write_histograms_csv(path: Path | str, scan: ScanResult, bins: int = 20) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "control", "bin_left", "bin_right", "count"])
        for i, c in scan.keys():
            values = scan.distributions[(i, c)]
            if not values:
                continue
            edges, counts = histogram(values, bins)
            for left, right, n in zip(edges[:-1], edges[1:], counts):
                w.writerow([i, c, repr(float(left)), repr(float(right)), int(n)])
