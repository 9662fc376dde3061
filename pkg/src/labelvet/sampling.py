"""Budget-constrained review sampling.

Given per-item error estimates in [0, 1] and a review budget B, a transform
maps the estimates to per-item review probabilities, and indicator draws
decide which items actually go to a human.  Three transforms are provided:

* ``normalization_transform``: probabilities proportional to the estimates,
  scaled so they sum to B (then clamped at 1).
* ``exponential_transform``: a logistic curve with tunable center and
  sharpness; the center is solved by bisection so the probabilities sum to
  approximately B.
* ``threshold_transform``: hard 0/1 probabilities for the top-B estimates.

All randomness is derived per item from (seed, item index) so that drawing
items one at a time, in any order, or all at once yields identical results.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Domain tags keep the per-item random streams used by different consumers
# of the same seed from colliding.
_DOMAIN_DRAW = 101
_DOMAIN_TIE = 102

# Bisection stops when |sum(probs) - budget| falls inside this band.
SUM_TOLERANCE = 0.5

SAMPLING_RULES = ("normalization", "exponential", "threshold", "ppl_priority")
DRAW_MODES = ("expectation", "hard_cap")


class SamplingError(ValueError):
    """Raised for invalid budgets, estimates, or draw configurations."""


def item_rng(seed: int, domain: int, item_id: int) -> np.random.Generator:
    """Independent generator for one (seed, domain, item) triple."""
    return np.random.default_rng(np.random.SeedSequence([seed, domain, item_id]))


def _check_inputs(error_estimates: np.ndarray, budget: int) -> np.ndarray:
    eps = np.asarray(error_estimates, dtype=float)
    if eps.ndim != 1 or eps.size == 0:
        raise SamplingError("error estimates must be a non-empty 1-D array")
    if np.any(~np.isfinite(eps)) or np.any(eps < 0.0) or np.any(eps > 1.0):
        raise SamplingError("error estimates must be finite and within [0, 1]")
    if not 0 <= budget <= eps.size:
        raise SamplingError(f"budget must be in [0, {eps.size}], got {budget}")
    return eps


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    # Clipping keeps exp() finite for extreme sharpness values.
    return 1.0 / (1.0 + np.exp(np.clip(-z, -500.0, 500.0)))


def normalization_transform(error_estimates: Sequence[float], budget: int) -> np.ndarray:
    """Probabilities proportional to the error estimates, summing to <= budget.

    Each probability is budget * estimate / sum(estimates), clamped at 1.
    If every estimate is zero the budget is spread uniformly (budget / N).
    """
    eps = _check_inputs(np.asarray(error_estimates), budget)
    total = eps.sum()
    if total == 0.0:
        return np.full(eps.size, budget / eps.size)
    return np.minimum(1.0, budget * eps / total)


@dataclass(frozen=True)
class ExponentialResult:
    """Probabilities plus the solved curve center.

    ``needs_hard_cap`` is set when even the flattest admissible curve
    (center at 1) leaves the expected review count above the budget; draws
    from such probabilities must use hard_cap mode to stay within budget.
    """

    probs: np.ndarray
    center: float
    needs_hard_cap: bool


def exponential_transform(
    error_estimates: Sequence[float],
    budget: int,
    sharpness: float,
) -> ExponentialResult:
    """Logistic review probabilities 1 / (1 + exp(-sharpness * (e - center))).

    The center is the smallest value in [0, 1] at which the probabilities
    sum to at most the budget; bisection stops once the sum is within
    ``SUM_TOLERANCE`` of the budget or the center hits a bound.
    """
    eps = _check_inputs(np.asarray(error_estimates), budget)
    if sharpness <= 0.0:
        raise SamplingError(f"sharpness must be positive, got {sharpness}")

    def prob_sum(center: float) -> tuple[np.ndarray, float]:
        probs = _stable_sigmoid(sharpness * (eps - center))
        return probs, float(probs.sum())

    probs_lo, sum_lo = prob_sum(0.0)
    if sum_lo <= budget:
        return ExponentialResult(probs=probs_lo, center=0.0, needs_hard_cap=False)
    probs_hi, sum_hi = prob_sum(1.0)
    if sum_hi > budget:
        return ExponentialResult(probs=probs_hi, center=1.0, needs_hard_cap=True)

    lo, hi = 0.0, 1.0
    probs, total = probs_hi, sum_hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        probs, total = prob_sum(mid)
        if abs(total - budget) <= SUM_TOLERANCE:
            return ExponentialResult(probs=probs, center=mid, needs_hard_cap=False)
        if total > budget:
            lo = mid
        else:
            hi = mid
    # The sum is discontinuity-free, so 200 halvings put us within float
    # precision of the crossing; fall back to the upper bracket.
    probs, total = prob_sum(hi)
    return ExponentialResult(probs=probs, center=hi, needs_hard_cap=total > budget)


def _tie_keys(n: int, seed: int) -> np.ndarray:
    """Per-item tie-break scores, stable across budgets for a fixed seed."""
    return np.array([item_rng(seed, _DOMAIN_TIE, i).random() for i in range(n)])


def _top_k_selection(error_estimates: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Indices of the k largest estimates, ties broken by seeded scores.

    The ordering is nested: the selection for k is always a subset of the
    selection for k + 1, which makes quality curves monotone under the
    threshold rule.
    """
    ties = _tie_keys(error_estimates.size, seed)
    order = np.lexsort((ties, -error_estimates))
    return order[:k]


def threshold_transform(
    error_estimates: Sequence[float],
    budget: int,
    seed: int = 0,
) -> tuple[np.ndarray, float]:
    """Hard selection of the top-budget estimates.

    Returns (probs, cutoff) where probs is 0/1 with exactly ``budget`` ones
    and cutoff is the budget-th largest estimate (+inf when budget is 0).
    Ties at the cutoff are broken by a seeded draw so the count is exact.
    """
    eps = _check_inputs(np.asarray(error_estimates), budget)
    probs = np.zeros(eps.size)
    if budget == 0:
        return probs, float("inf")
    cutoff = float(np.sort(eps)[::-1][budget - 1])
    probs[_top_k_selection(eps, budget, seed)] = 1.0
    return probs, cutoff


def draw_indicators(
    review_probs: Sequence[float],
    budget: int,
    seed: int,
    mode: str = "expectation",
    error_estimates: Sequence[float] | None = None,
) -> np.ndarray:
    """Bernoulli review indicators from per-item probabilities.

    ``expectation`` mode returns the raw per-item draws; the number of
    selected items then only meets the budget in expectation, which is what
    unbiased loss estimation requires.  ``hard_cap`` mode additionally
    drops the surplus draws with the smallest error estimates (seeded tie
    break) so the realized count never exceeds the budget; the review queue
    uses this mode.  ``error_estimates`` supplies the drop ordering; when
    omitted the probabilities themselves are used, which coincides with the
    estimate ordering for all monotone transforms.
    """
    probs = np.asarray(review_probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise SamplingError("review probabilities must be a non-empty 1-D array")
    if np.any(~np.isfinite(probs)) or np.any(probs < 0.0) or np.any(probs > 1.0):
        raise SamplingError("review probabilities must be finite and within [0, 1]")
    if mode not in DRAW_MODES:
        raise SamplingError(f"mode must be one of {DRAW_MODES}, got {mode!r}")
    if not 0 <= budget <= probs.size:
        raise SamplingError(f"budget must be in [0, {probs.size}], got {budget}")

    uniforms = np.array([item_rng(seed, _DOMAIN_DRAW, i).random() for i in range(probs.size)])
    indicators = (uniforms < probs).astype(int)

    if mode == "hard_cap" and int(indicators.sum()) > budget:
        key = probs if error_estimates is None else np.asarray(error_estimates, dtype=float)
        if key.shape != probs.shape:
            raise SamplingError("error_estimates must match review probabilities in length")
        drawn = np.flatnonzero(indicators)
        keep_local = _top_k_selection(key[drawn], budget, seed)
        kept = drawn[keep_local]
        indicators = np.zeros(probs.size, dtype=int)
        indicators[kept] = 1
    return indicators


def ppl_priority_indicators(
    decisions: Sequence[str],
    perplexities: Sequence[float],
    budget: int,
) -> np.ndarray:
    """Review indicators from yes/no correctness decisions plus perplexity.

    Items are ranked: confident "yes the label is wrong" first (ascending
    perplexity), then unconfident "yes", then unconfident "no" (descending
    perplexity), then confident "no" last.  The first ``budget`` items in
    that order are selected; ties fall back to item order.  No separate
    probability vector exists for this rule, so the implied review
    probability of every selected item is 1.
    """
    n = len(decisions)
    if len(perplexities) != n or n == 0:
        raise SamplingError("decisions and perplexities must be equal-length and non-empty")
    if not 0 <= budget <= n:
        raise SamplingError(f"budget must be in [0, {n}], got {budget}")
    ppl = np.asarray(perplexities, dtype=float)
    if np.any(~np.isfinite(ppl)) or np.any(ppl <= 0.0):
        raise SamplingError("perplexities must be finite and positive")

    keys = []
    for i, decision in enumerate(decisions):
        if decision not in ("yes", "no"):
            raise SamplingError(f"decision {decision!r} at index {i} must be 'yes' or 'no'")
        if decision == "yes":
            keys.append((0, ppl[i], i))       # flagged wrong: low perplexity first
        else:
            keys.append((1, -ppl[i], i))      # flagged right: high perplexity first
    order = sorted(range(n), key=lambda i: keys[i])
    indicators = np.zeros(n, dtype=int)
    indicators[order[:budget]] = 1
    return indicators


@dataclass(frozen=True)
class SamplingPlan:
    """A complete, serializable sampling decision for one dataset.

    Bundles the rule, its solved hyperparameters, the per-item review
    probabilities, and the drawn indicators.  Plans built in hard_cap mode
    never select more than ``budget`` items; expectation-mode plans keep
    the raw draws and respect the budget in expectation only.
    """

    rule: str
    budget: int
    seed: int
    mode: str
    review_probs: tuple[float, ...]
    indicators: tuple[int, ...]
    error_estimates: tuple[float, ...]
    center: float | None = None      # exponential rule: solved curve center
    sharpness: float | None = None   # exponential rule: curve sharpness
    cutoff: float | None = None      # threshold rule: selection cutoff

    def __post_init__(self) -> None:
        if self.rule not in SAMPLING_RULES:
            raise SamplingError(f"unknown sampling rule {self.rule!r}")
        if self.mode not in DRAW_MODES:
            raise SamplingError(f"unknown draw mode {self.mode!r}")
        if len(self.review_probs) != len(self.indicators):
            raise SamplingError("review_probs and indicators must be equal length")
        if self.mode == "hard_cap" and sum(self.indicators) > self.budget:
            raise SamplingError("hard_cap plan exceeds its budget")

    @property
    def n(self) -> int:
        return len(self.indicators)

    @property
    def proportion(self) -> float:
        """Budget as a fraction of the dataset size."""
        return self.budget / self.n if self.n else 0.0

    @property
    def selected_ids(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(np.asarray(self.indicators)))

    def to_records(self) -> list[dict]:
        """Serialize as JSONL records: one plan header, then one row per item."""
        from .data import SCHEMA_VERSION
        header = {
            "schema_version": SCHEMA_VERSION,
            "record": "plan",
            "item_id": -1,
            "rule": self.rule,
            "budget": self.budget,
            "proportion": self.proportion,
            "seed": self.seed,
            "mode": self.mode,
            "center": self.center,
            "sharpness": self.sharpness,
            "cutoff": self.cutoff if self.cutoff != float("inf") else "inf",
        }
        rows = [header]
        for i in range(self.n):
            rows.append({
                "schema_version": SCHEMA_VERSION,
                "record": "item",
                "item_id": i,
                "review_prob": float(self.review_probs[i]),
                "indicator": int(self.indicators[i]),
                "error_estimate": float(self.error_estimates[i]),
            })
        return rows

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "SamplingPlan":
        if not records or records[0].get("record") != "plan":
            raise SamplingError("plan file must start with a plan header record")
        header = records[0]
        rows = sorted((r for r in records[1:] if r.get("record") == "item"),
                      key=lambda r: r["item_id"])
        cutoff = header.get("cutoff")
        return cls(
            rule=header["rule"],
            budget=header["budget"],
            seed=header["seed"],
            mode=header["mode"],
            review_probs=tuple(r["review_prob"] for r in rows),
            indicators=tuple(r["indicator"] for r in rows),
            error_estimates=tuple(r["error_estimate"] for r in rows),
            center=header.get("center"),
            sharpness=header.get("sharpness"),
            cutoff=float("inf") if cutoff == "inf" else cutoff,
        )


def build_plan(
    error_estimates: Sequence[float],
    budget: int,
    rule: str,
    seed: int,
    mode: str = "hard_cap",
    sharpness: float = 10.0,
    decisions: Sequence[str] | None = None,
    perplexities: Sequence[float] | None = None,
) -> SamplingPlan:
    """Run one sampling rule end to end and package the result."""
    if rule == "ppl_priority":
        if decisions is None or perplexities is None:
            raise SamplingError("ppl_priority needs decisions and perplexities")
        indicators = ppl_priority_indicators(decisions, perplexities, budget)
        eps = np.zeros(len(indicators)) if error_estimates is None \
            else np.asarray(error_estimates, dtype=float)
        return SamplingPlan(
            rule=rule, budget=budget, seed=seed, mode=mode,
            review_probs=tuple(float(d) for d in indicators),
            indicators=tuple(int(d) for d in indicators),
            error_estimates=tuple(float(e) for e in eps),
        )

    eps = _check_inputs(np.asarray(error_estimates), budget)
    center = None
    sharp = None
    cutoff = None
    if rule == "normalization":
        probs = normalization_transform(eps, budget)
    elif rule == "exponential":
        result = exponential_transform(eps, budget, sharpness)
        probs, center, sharp = result.probs, result.center, sharpness
        if result.needs_hard_cap:
            mode = "hard_cap"
    elif rule == "threshold":
        probs, cutoff = threshold_transform(eps, budget, seed)
    else:
        raise SamplingError(f"unknown sampling rule {rule!r}")

    indicators = draw_indicators(probs, budget, seed, mode=mode, error_estimates=eps)
    return SamplingPlan(
        rule=rule, budget=budget, seed=seed, mode=mode,
        review_probs=tuple(float(p) for p in probs),
        indicators=tuple(int(d) for d in indicators),
        error_estimates=tuple(float(e) for e in eps),
        center=center, sharpness=sharp, cutoff=cutoff,
    )
