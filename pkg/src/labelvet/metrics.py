"""Annotation quality metrics and budget sweeps.

``quality`` scores one label sequence against a reference.  ``quality_gain``
measures how much of the achievable improvement over the machine labels a
correction actually realized (0 = no better than machine, 1 = as good as
the reference allows).  ``budget_curve`` sweeps the review budget from 0 to
N, recording the gain at every point and its normalized area, which
summarizes how efficiently a criticizer converts review budget into
quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .sampling import (
    _top_k_selection,
    draw_indicators,
    exponential_transform,
    normalization_transform,
    ppl_priority_indicators,
)


class MetricsError(ValueError):
    """Raised for malformed metric inputs."""


@dataclass(frozen=True)
class QualityMeasure:
    """A per-item similarity in [0, max_value] plus its ceiling."""

    name: str
    similarity: Callable[[object, object], float]
    max_value: float = 1.0


def _exact(a: object, b: object) -> float:
    return 1.0 if (a is not None and a == b) else 0.0


EXACT_MATCH = QualityMeasure(name="exact_match", similarity=_exact)


def quality(
    reference: Sequence[object],
    candidate: Sequence[object],
    measure: QualityMeasure = EXACT_MATCH,
) -> float:
    """Mean per-item similarity of ``candidate`` against ``reference``."""
    if len(reference) == 0:
        raise MetricsError("cannot score an empty label sequence")
    if len(reference) != len(candidate):
        raise MetricsError(f"length mismatch: {len(reference)} reference labels"
                           f" vs {len(candidate)} candidate labels")
    return float(np.mean([measure.similarity(r, c) for r, c in zip(reference, candidate)]))


@dataclass(frozen=True)
class QualityGain:
    """Realized fraction of the achievable quality improvement.

    ``degenerate`` marks the 0/0 case where the machine labels already sit
    at the measure's ceiling, so there was nothing to correct; the value is
    reported as 1.0 there.
    """

    value: float
    degenerate: bool


def quality_gain(
    reference: Sequence[object],
    machine: Sequence[object],
    corrected: Sequence[object],
    measure: QualityMeasure = EXACT_MATCH,
) -> QualityGain:
    """(Q(corrected) - Q(machine)) / (max - Q(machine)), scored on ``reference``."""
    q_machine = quality(reference, machine, measure)
    q_corrected = quality(reference, corrected, measure)
    headroom = measure.max_value - q_machine
    if headroom <= 0.0:
        return QualityGain(value=1.0, degenerate=True)
    return QualityGain(value=(q_corrected - q_machine) / headroom, degenerate=False)


@dataclass(frozen=True)
class CurvePoint:
    budget: int
    proportion: float
    gain: float
    degenerate: bool


@dataclass(frozen=True)
class BudgetCurve:
    """Quality gain at each swept budget plus the normalized curve area.

    ``area`` is (1/N) * sum of the gain over every integer budget 0..N.
    When the sweep was strided the skipped budgets are filled by linear
    interpolation before summing, and ``stride`` records the spacing.
    """

    points: tuple[CurvePoint, ...]
    area: float
    stride: int

    def gains(self) -> list[float]:
        return [p.gain for p in self.points]

    def trapezoid_area(self) -> float:
        """Diagnostic alternative: trapezoid integral of gain over proportion.

        The canonical ``area`` is the plain budget-grid sum; this integral
        differs from it by at most O(1/N) and is exposed for comparison only.
        """
        props = np.array([p.proportion for p in self.points])
        gains = np.array([p.gain for p in self.points])
        return float(np.trapezoid(gains, props))


def _per_budget_seed(seed: int, budget: int) -> int:
    """Stable sub-seed so each budget point draws independent indicators."""
    return int(np.random.SeedSequence([seed, budget]).generate_state(1)[0])


def _budget_grid(n: int, max_points: int) -> tuple[list[int], int]:
    if n + 1 <= max_points:
        return list(range(n + 1)), 1
    stride = math.ceil(n / (max_points - 1))
    grid = list(range(0, n + 1, stride))
    if grid[-1] != n:
        grid.append(n)
    return grid, stride


def budget_curve(
    reference: Sequence[object],
    machine: Sequence[object],
    error_estimates: Sequence[float] | None,
    rule: str,
    seed: int = 0,
    sharpness: float = 10.0,
    measure: QualityMeasure = EXACT_MATCH,
    max_points: int = 2001,
    decisions: Sequence[str] | None = None,
    perplexities: Sequence[float] | None = None,
) -> BudgetCurve:
    """Sweep the review budget and record the quality gain at each point.

    At each budget B the rule selects items for review (hard-capped so at
    most B are used), reviewed items take the reference label, and the gain
    is scored.  Selection randomness at each point is derived from
    (seed, B); threshold and priority-order selections reuse one fixed
    ordering so larger budgets select supersets of smaller ones.
    """
    n = len(reference)
    if n == 0 or len(machine) != n:
        raise MetricsError("reference and machine labels must be non-empty and equal length")
    grid, stride = _budget_grid(n, max_points)

    if rule in ("threshold", "ppl_priority"):
        # One fixed selection order serves every budget: the first B items
        # of the order are exactly the rule's selection at budget B.
        if rule == "threshold":
            if error_estimates is None:
                raise MetricsError("threshold rule needs error estimates")
            eps = np.asarray(error_estimates, dtype=float)
            if eps.size != n:
                raise MetricsError("error estimates must match the label count")
            order = _top_k_selection(eps, n, seed)
        else:
            if decisions is None or perplexities is None:
                raise MetricsError("ppl_priority rule needs decisions and perplexities")
            ppl_priority_indicators(decisions, perplexities, 0)  # validates inputs
            ppl = np.asarray(perplexities, dtype=float)
            keys = [(0, ppl[i], i) if d == "yes" else (1, -ppl[i], i)
                    for i, d in enumerate(decisions)]
            order = np.array(sorted(range(n), key=lambda i: keys[i]))
        gain_rows = np.array([
            measure.similarity(reference[i], reference[i])
            - measure.similarity(reference[i], machine[i])
            for i in order
        ])
        # A single division keeps the gain exact when similarities are 0/1
        # counts: recovered / total headroom, both accumulated un-normalized.
        headroom_total = n * measure.max_value - float(sum(
            measure.similarity(reference[i], machine[i]) for i in range(n)))
        cumulative = np.concatenate(([0.0], np.cumsum(gain_rows)))
        points = []
        for b in grid:
            if headroom_total <= 0.0:
                points.append(CurvePoint(b, b / n, 1.0, True))
            else:
                points.append(CurvePoint(
                    b, b / n, float(cumulative[b] / headroom_total), False))
    else:
        if error_estimates is None:
            raise MetricsError(f"{rule} rule needs error estimates")
        eps = np.asarray(error_estimates, dtype=float)
        if eps.size != n:
            raise MetricsError("error estimates must match the label count")
        points = []
        for b in grid:
            if rule == "normalization":
                probs = normalization_transform(eps, b)
            elif rule == "exponential":
                probs = exponential_transform(eps, b, sharpness).probs
            else:
                raise MetricsError(f"unknown sampling rule {rule!r}")
            indicators = draw_indicators(
                probs, b, _per_budget_seed(seed, b), mode="hard_cap", error_estimates=eps)
            corrected = [reference[i] if indicators[i] else machine[i] for i in range(n)]
            gain = quality_gain(reference, machine, corrected, measure)
            points.append(CurvePoint(b, b / n, gain.value, gain.degenerate))

    gains = np.array([p.gain for p in points])
    if stride == 1:
        area = float(gains.sum() / n)
    else:
        all_budgets = np.arange(n + 1)
        interpolated = np.interp(all_budgets, [p.budget for p in points], gains)
        area = float(interpolated.sum() / n)
    return BudgetCurve(points=tuple(points), area=area, stride=stride)


@dataclass(frozen=True)
class RunStats:
    mean: float
    std: float
    n_runs: int


def stability_runs(
    experiment: Callable[[int], Mapping[str, float]],
    n_runs: int = 5,
    base_seed: int = 0,
    seeds: Sequence[int] | None = None,
) -> dict[str, RunStats]:
    """Repeat a seeded experiment and report mean and spread per metric.

    ``experiment`` maps a seed to a dict of scalar metrics.  Runs use
    ``seeds`` when given, else base_seed, base_seed + 1, ...  At least two
    runs are required for a spread to exist; the sample standard deviation
    (ddof = 1) is reported.
    """
    if seeds is None:
        seeds = [base_seed + k for k in range(n_runs)]
    if len(seeds) < 2:
        raise MetricsError("stability requires at least two runs")
    results: dict[str, list[float]] = {}
    for seed in seeds:
        outcome = experiment(seed)
        if not outcome:
            raise MetricsError(f"experiment returned no metrics for seed {seed}")
        for name, value in outcome.items():
            results.setdefault(name, []).append(float(value))
    expected = len(seeds)
    stats = {}
    for name, values in results.items():
        if len(values) != expected:
            raise MetricsError(f"metric {name!r} missing from some runs")
        arr = np.array(values)
        stats[name] = RunStats(mean=float(arr.mean()), std=float(arr.std(ddof=1)),
                               n_runs=expected)
    return stats
