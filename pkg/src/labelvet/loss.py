"""Review-weighted training losses.

After budgeted review, every item carries a machine-label loss, a review
probability, and a 0/1 review indicator; reviewed items also carry a
human-label loss.  ``unbiased_loss`` combines these so that its expectation
over the indicator draws equals the mean human-label loss over the whole
dataset, even though only the reviewed fraction was ever labeled by a
human.  ``rule_loss`` generalizes this with a machine-loss power weight and
with closed-form importance weights specific to each sampling rule.

All functions operate on aligned 1-D arrays; ``stack_samples`` converts a
list of per-item ``LossSample`` records into that form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

RULE_LOSSES = ("normalization", "exponential", "threshold")


class LossError(ValueError):
    """Raised for inconsistent loss inputs or rule mismatches."""


@dataclass(frozen=True)
class LossSample:
    """Per-item ingredients for review-weighted losses."""

    item_id: int
    loss_true: float
    loss_machine: float
    review_prob: float
    reviewed: int
    error_estimate: float = 0.0


def stack_samples(samples: Sequence[LossSample]) -> tuple[np.ndarray, ...]:
    """Split sample records into (loss_true, loss_machine, probs, indicators, estimates)."""
    if not samples:
        raise LossError("no loss samples given")
    ordered = sorted(samples, key=lambda s: s.item_id)
    return (
        np.array([s.loss_true for s in ordered]),
        np.array([s.loss_machine for s in ordered]),
        np.array([s.review_prob for s in ordered]),
        np.array([s.reviewed for s in ordered]),
        np.array([s.error_estimate for s in ordered]),
    )


class _NegativeEvaluationCounter:
    """Diagnostics: counts loss evaluations that came out negative.

    Review-weighted losses are unbiased but not sign-preserving; a spike in
    negative evaluations usually means tiny review probabilities are being
    importance-weighted into instability.
    """

    def __init__(self) -> None:
        self.count = 0

    def observe(self, value: float) -> None:
        if value < 0.0:
            self.count += 1

    def reset(self) -> None:
        self.count = 0


negative_evaluations = _NegativeEvaluationCounter()


def _check_arrays(*arrays: Sequence[float]) -> list[np.ndarray]:
    out = [np.asarray(a, dtype=float) for a in arrays]
    n = out[0].size
    for a in out:
        if a.ndim != 1 or a.size != n or n == 0:
            raise LossError("loss inputs must be equal-length non-empty 1-D arrays")
        if np.any(~np.isfinite(a)):
            raise LossError("loss inputs must be finite")
    return out


def unbiased_loss(
    loss_true: Sequence[float],
    loss_machine: Sequence[float],
    review_probs: Sequence[float],
    indicators: Sequence[int],
) -> float:
    """Mean of machine losses plus importance-weighted review corrections.

    Computes mean_i [ lm_i + (l_i - lm_i) * d_i / p_i ].  Unreviewed items
    contribute their machine loss; reviewed items swap in the human loss,
    scaled up by 1/p_i so the estimator stays unbiased for the mean human
    loss under Bernoulli(p_i) review draws.
    """
    l_true, l_machine, probs, delta = _check_arrays(
        loss_true, loss_machine, review_probs, indicators)
    if np.any((delta != 0.0) & (delta != 1.0)):
        raise LossError("indicators must be 0 or 1")
    if np.any((delta == 1.0) & (probs <= 0.0)):
        raise LossError("a reviewed item has review probability 0; the"
                        " importance weight is undefined")
    correction = np.zeros_like(l_true)
    selected = delta == 1.0
    correction[selected] = (l_true[selected] - l_machine[selected]) / probs[selected]
    value = float(np.mean(l_machine + correction))
    negative_evaluations.observe(value)
    return value


@dataclass(frozen=True)
class RuleLossConfig:
    """Configuration for rule-specific loss variants.

    ``power`` scales the machine-loss term (1.0 recovers the plain unbiased
    form for each rule).  ``center``/``sharpness`` are the exponential
    curve parameters used at sampling time; ``budget`` is needed by the
    normalization weight.
    """

    rule: str
    power: float = 1.0
    center: float | None = None
    sharpness: float | None = None
    budget: int | None = None

    def __post_init__(self) -> None:
        if self.rule not in RULE_LOSSES:
            raise LossError(f"unknown rule {self.rule!r}; expected one of {RULE_LOSSES}")
        if not 0.0 <= self.power <= 1.0:
            raise LossError(f"power must be in [0, 1], got {self.power}")
        if self.rule == "exponential" and (self.center is None or self.sharpness is None):
            raise LossError("exponential rule needs center and sharpness")
        if self.rule == "normalization" and (self.budget is None or self.budget <= 0):
            raise LossError("normalization rule needs a positive budget")


def _rule_weights(
    indicators: np.ndarray,
    error_estimates: np.ndarray,
    config: RuleLossConfig,
) -> np.ndarray:
    """Per-item closed-form importance weights w_i; the loss uses w_i * d_i."""
    if config.rule == "threshold":
        return np.ones_like(error_estimates)
    if config.rule == "exponential":
        z = config.sharpness * (error_estimates - config.center)
        return 1.0 + np.exp(np.clip(-z, -500.0, 500.0))
    # normalization: weight is sum(e) / (B * e_i), the reciprocal of the
    # unclamped review probability.
    total = error_estimates.sum()
    weights = np.zeros_like(error_estimates)
    selected = indicators == 1.0
    bad = selected & (error_estimates <= 0.0)
    if np.any(bad):
        raise LossError("normalization weight undefined: a reviewed item has"
                        " error estimate 0")
    weights[selected] = total / (config.budget * error_estimates[selected])
    return weights


def rule_coefficients(
    indicators: np.ndarray,
    error_estimates: np.ndarray,
    config: RuleLossConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (c_machine, c_true) so each item contributes
    c_machine * lm + c_true * l.  Shared by the loss and its gradient."""
    weights = _rule_weights(indicators, error_estimates, config)
    weighted = weights * indicators
    return config.power * (1.0 - weighted), weighted


def rule_loss(
    loss_true: Sequence[float],
    loss_machine: Sequence[float],
    indicators: Sequence[int],
    error_estimates: Sequence[float],
    config: RuleLossConfig,
    sampled_rule: str,
) -> float:
    """Rule-specific review-weighted loss.

    Computes mean_i [ power * lm_i + (l_i - power * lm_i) * w_i * d_i ]
    with the closed-form weight w_i of the configured rule.  With the
    threshold rule and power 1.0 this is exactly the plain mean loss over
    the corrected labels.  ``sampled_rule`` is the rule that actually
    produced the indicators; a mismatch is an error rather than a silent
    bias.
    """
    if sampled_rule != config.rule:
        raise LossError(f"indicators were sampled with rule {sampled_rule!r}"
                        f" but the loss is configured for {config.rule!r}")
    l_true, l_machine, delta, eps = _check_arrays(
        loss_true, loss_machine, indicators, error_estimates)
    if np.any((delta != 0.0) & (delta != 1.0)):
        raise LossError("indicators must be 0 or 1")
    c_machine, c_true = rule_coefficients(delta, eps, config)
    value = float(np.mean(c_machine * l_machine + c_true * l_true))
    negative_evaluations.observe(value)
    return value


def rule_loss_gradient(
    grad_true: np.ndarray,
    grad_machine: np.ndarray,
    indicators: Sequence[int],
    error_estimates: Sequence[float],
    config: RuleLossConfig,
    sampled_rule: str,
) -> np.ndarray:
    """Gradient of ``rule_loss`` from per-item gradient rows.

    ``grad_true`` and ``grad_machine`` are (N, D) arrays of per-item
    gradients of the human-label and machine-label losses.  The result is
    the same coefficient combination as the loss: mean_i [ c_machine_i *
    grad_machine_i + c_true_i * grad_true_i ].
    """
    if sampled_rule != config.rule:
        raise LossError(f"indicators were sampled with rule {sampled_rule!r}"
                        f" but the loss is configured for {config.rule!r}")
    g_true = np.asarray(grad_true, dtype=float)
    g_machine = np.asarray(grad_machine, dtype=float)
    if g_true.ndim != 2 or g_true.shape != g_machine.shape:
        raise LossError("gradients must be matching (N, D) arrays")
    delta, eps = _check_arrays(indicators, error_estimates)
    if delta.size != g_true.shape[0]:
        raise LossError("indicator length must match gradient row count")
    c_machine, c_true = rule_coefficients(delta, eps, config)
    combined = c_machine[:, None] * g_machine + c_true[:, None] * g_true
    return combined.mean(axis=0)


def variance_estimate(
    loss_true: Sequence[float],
    loss_machine: Sequence[float],
    review_probs: Sequence[float],
) -> float:
    """Variance of ``unbiased_loss`` when both the items and the review
    indicators are treated as random.

    Computes (1/N) * [ Var(l) + mean_i (l_i - lm_i)^2 (1/p_i - 1) ] with the
    population variance convention.  This is exactly the variance of one
    Monte Carlo replicate that resamples items with replacement and then
    draws fresh review indicators (``monte_carlo_loss_stats`` with
    resample_data=True).
    """
    l_true, l_machine, probs = _check_arrays(loss_true, loss_machine, review_probs)
    gap_sq = (l_true - l_machine) ** 2
    inflation = np.zeros_like(gap_sq)
    positive = probs > 0.0
    inflation[positive] = gap_sq[positive] * (1.0 / probs[positive] - 1.0)
    if np.any(~positive & (gap_sq > 0.0)):
        raise LossError("variance undefined: an item with differing losses has"
                        " review probability 0")
    n = l_true.size
    return float((np.var(l_true) + inflation.mean()) / n)


def monte_carlo_loss_stats(
    loss_true: Sequence[float],
    loss_machine: Sequence[float],
    review_probs: Sequence[float],
    n_resamples: int,
    seed: int,
    resample_data: bool = False,
) -> tuple[float, float]:
    """Empirical mean and variance of ``unbiased_loss`` over fresh draws.

    With ``resample_data=False`` only the review indicators are redrawn
    (Bernoulli per item); the empirical mean then converges to the mean
    human loss of the fixed items.  With ``resample_data=True`` each
    replicate also resamples the items with replacement, which adds the
    item-sampling variance so the empirical variance converges to
    ``variance_estimate``.
    """
    l_true, l_machine, probs = _check_arrays(loss_true, loss_machine, review_probs)
    if n_resamples <= 0:
        raise LossError("n_resamples must be positive")
    rng = np.random.default_rng(seed)
    n = l_true.size
    gap = l_true - l_machine
    with np.errstate(divide="ignore"):
        inv_probs = np.where(probs > 0.0, 1.0 / np.maximum(probs, 1e-300), 0.0)
    if np.any((probs <= 0.0) & (gap != 0.0)):
        raise LossError("an item with differing losses has review probability 0")

    # Evaluate in chunks so the (resamples, N) matrices stay modest.
    chunk = max(1, min(n_resamples, 20_000_000 // max(n, 1)))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_resamples:
        m = min(chunk, n_resamples - done)
        if resample_data:
            idx = rng.integers(0, n, size=(m, n))
            base = l_machine[idx]
            g = gap[idx]
            p = probs[idx]
            w = inv_probs[idx]
        else:
            base = l_machine[None, :]
            g = gap[None, :]
            p = probs[None, :]
            w = inv_probs[None, :]
        draws = rng.random(size=(m, n)) < p
        replicates = (base + g * w * draws).mean(axis=1)
        total += float(replicates.sum())
        total_sq += float((replicates ** 2).sum())
        done += m
    mean = total / n_resamples
    variance = max(0.0, total_sq / n_resamples - mean ** 2)
    return mean, variance
