"""
Bayesian normal-normal hierarchical meta-analysis and fixed-margin quantities.

Model::

    y_i | theta_i ~ N(theta_i, s_i^2)
    theta_i | mu, tau ~ N(mu, tau^2)
    mu ~ N(mu_prior_mean, mu_prior_sd^2)
    tau ~ HalfNormal(tau_prior_scale)

Given ``tau`` the posterior of ``mu`` is normal, so the marginal posterior of
``mu`` is a finite mixture of normals over a grid in ``tau`` with weights
proportional to ``p(y | tau) p(tau)``. Everything is deterministic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, stats


class ModelError(Exception):
    """Raised when a model quantity is undefined for the given inputs."""


@dataclass(frozen=True)
class TrialEffect:
    trial_id: str
    estimand: str
    y: float
    s: float
    ci_lo: Optional[float] = None
    ci_hi: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.y) and math.isfinite(self.s)):
            raise ValueError(f"{self.trial_id}: effect and SE must be finite")
        if not self.s > 0:
            raise ValueError(f"{self.trial_id}: SE must be positive, got {self.s}")


@dataclass(frozen=True)
class HierarchicalModelSpec:
    tau_prior_scale: float = 5.0
    mu_prior_mean: float = 0.0
    mu_prior_sd: float = 100.0
    tau_grid_size: int = 2001
    tau_grid_max: Optional[float] = None   # defaults to 6 * tau_prior_scale

    def __post_init__(self):
        if not self.tau_prior_scale > 0:
            raise ValueError("tau_prior_scale must be positive")
        if not self.mu_prior_sd > 0:
            raise ValueError("mu_prior_sd must be positive")
        if self.tau_grid_size < 2:
            raise ValueError("tau_grid_size must be >= 2")
        if self.tau_grid_max is not None and not self.tau_grid_max > 0:
            raise ValueError("tau_grid_max must be positive")

    @property
    def grid_max(self) -> float:
        if self.tau_grid_max is None:
            return 6.0 * self.tau_prior_scale
        return self.tau_grid_max


@dataclass(frozen=True)
class PosteriorSummary:
    mu_mean: float
    mu_median: float
    ci95: tuple[float, float]
    tau_median: float
    n_trials: int
    estimand: str = ""
    trial_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "estimand": self.estimand,
            "n_trials": self.n_trials,
            "trial_ids": list(self.trial_ids),
            "mu_mean": self.mu_mean,
            "mu_median": self.mu_median,
            "ci95": list(self.ci95),
            "tau_median": self.tau_median,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorSummary":
        lo, hi = d["ci95"]
        return cls(float(d["mu_mean"]), float(d["mu_median"]),
                   (float(lo), float(hi)), float(d["tau_median"]),
                   int(d["n_trials"]), d.get("estimand", ""),
                   tuple(d.get("trial_ids", ())))


class BenefitDirection(enum.Enum):
    NEGATIVE_IS_GOOD = "negative"
    POSITIVE_IS_GOOD = "positive"


@dataclass(frozen=True)
class MarginResult:
    m1: float
    direction: BenefitDirection
    retention: Optional[float] = None
    m2: Optional[float] = None

    def __post_init__(self):
        if self.m2 is not None and self.m2 > self.m1:
            raise ValueError("M2 cannot exceed M1")

    def with_retention(self, retention: float) -> "MarginResult":
        return MarginResult(self.m1, self.direction, retention,
                            derive_m2(self.m1, retention))

    def to_dict(self) -> dict:
        return {"m1": self.m1, "direction": self.direction.value,
                "retention": self.retention, "m2": self.m2}


def se_from_ci(lo: float, hi: float, level: float = 0.95) -> float:
    """Standard error implied by a symmetric normal-theory confidence interval."""
    if not hi > lo:
        raise ValueError(f"need hi > lo, got ({lo}, {hi})")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    z = float(stats.norm.ppf((1 + level) / 2))
    return (hi - lo) / (2 * z)


@dataclass
class _Mixture:
    tau: np.ndarray
    weights: np.ndarray        # posterior mass of each tau node (sums to 1)
    cond_mean: np.ndarray      # E[mu | tau, y]
    cond_sd: np.ndarray        # sd[mu | tau, y]

    def cdf(self, x: float) -> float:
        return float(np.dot(self.weights,
                            stats.norm.cdf(x, self.cond_mean, self.cond_sd)))

    def quantile(self, q: float) -> float:
        lo = float(np.min(self.cond_mean - 40 * self.cond_sd))
        hi = float(np.max(self.cond_mean + 40 * self.cond_sd))
        return optimize.brentq(lambda x: self.cdf(x) - q, lo, hi,
                               xtol=1e-10, rtol=1e-14, maxiter=500)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.empty_like(x)
    dx = np.diff(x)
    w[0] = dx[0] / 2
    w[-1] = dx[-1] / 2
    w[1:-1] = (dx[:-1] + dx[1:]) / 2
    return w


def _posterior_mixture(y: np.ndarray, s: np.ndarray,
                       spec: HierarchicalModelSpec) -> _Mixture:
    tau = np.linspace(0.0, spec.grid_max, spec.tau_grid_size)
    var = s[None, :] ** 2 + tau[:, None] ** 2
    w = 1.0 / var
    prior_prec = 1.0 / spec.mu_prior_sd ** 2
    prec = w.sum(axis=1) + prior_prec
    mean = ((w * y[None, :]).sum(axis=1) + spec.mu_prior_mean * prior_prec) / prec

    # log p(y | tau) with mu integrated out, up to a constant
    resid = y[None, :] - mean[:, None]
    loglik = (-0.5 * np.log(var).sum(axis=1)
              - 0.5 * (w * resid ** 2).sum(axis=1)
              - 0.5 * (mean - spec.mu_prior_mean) ** 2 * prior_prec
              - 0.5 * np.log(prec))
    logpost = loglik + stats.halfnorm.logpdf(tau, scale=spec.tau_prior_scale)
    mass = np.exp(logpost - logpost.max()) * _trapezoid_weights(tau)
    mass /= mass.sum()
    return _Mixture(tau, mass, mean, 1.0 / np.sqrt(prec))


def _check_effects(effects: Sequence[TrialEffect]) -> str:
    if not effects:
        raise ValueError("no trial effects to pool")
    labels = {e.estimand for e in effects}
    if len(labels) > 1:
        raise ValueError(f"mixed estimand labels: {sorted(labels)}")
    ids = [e.trial_id for e in effects]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate trial ids within one estimand")
    for e in effects:
        if not (math.isfinite(e.y) and math.isfinite(e.s) and e.s > 0):
            raise ValueError(f"{e.trial_id}: non-finite effect or SE")
    return labels.pop()


def fit_hierarchical(effects: Sequence[TrialEffect],
                     spec: HierarchicalModelSpec = HierarchicalModelSpec()
                     ) -> PosteriorSummary:
    """
    Pool trial effects sharing one estimand label.

    Returns the posterior mean and median of the overall effect ``mu``, its
    equal-tailed 95% credible interval and the posterior median of ``tau``.
    """
    label = _check_effects(effects)
    y = np.array([e.y for e in effects], dtype=float)
    s = np.array([e.s for e in effects], dtype=float)
    mix = _posterior_mixture(y, s, spec)

    cum = np.concatenate([[0.0], np.cumsum((mix.weights[1:] + mix.weights[:-1]) / 2)])
    cum /= cum[-1]
    tau_median = float(np.interp(0.5, cum, mix.tau))

    return PosteriorSummary(
        mu_mean=float(np.dot(mix.weights, mix.cond_mean)),
        mu_median=mix.quantile(0.5),
        ci95=(mix.quantile(0.025), mix.quantile(0.975)),
        tau_median=tau_median,
        n_trials=len(effects),
        estimand=label,
        trial_ids=tuple(e.trial_id for e in effects),
    )


def leave_one_out(effects: Sequence[TrialEffect],
                  spec: HierarchicalModelSpec = HierarchicalModelSpec()
                  ) -> list[tuple[str, PosteriorSummary]]:
    """Refit once per trial with that trial removed, in input order."""
    if len(effects) < 2:
        raise ValueError("leave-one-out needs at least 2 effects")
    return [(e.trial_id, fit_hierarchical(
                [f for j, f in enumerate(effects) if j != i], spec))
            for i, e in enumerate(effects)]


def fixed_effect_mean(effects: Sequence[TrialEffect]) -> float:
    """Inverse-variance weighted mean."""
    w = [1.0 / e.s ** 2 for e in effects]
    return math.fsum(wi * e.y for wi, e in zip(w, effects)) / math.fsum(w)


def derive_m1(post: PosteriorSummary | tuple[float, float],
              direction: BenefitDirection = BenefitDirection.NEGATIVE_IS_GOOD
              ) -> MarginResult:
    """
    M1 is the magnitude of the credible bound closest to zero on the
    beneficial side.

    Raises
    ------
    ModelError
        If the interval does not exclude zero on the beneficial side.
    """
    lo, hi = post.ci95 if isinstance(post, PosteriorSummary) else post
    if direction is BenefitDirection.NEGATIVE_IS_GOOD:
        if not hi < 0:
            raise ModelError("no demonstrated reference effect; M1 undefined "
                             f"(interval ({lo}, {hi}) does not exclude 0)")
        return MarginResult(abs(hi), direction)
    if not lo > 0:
        raise ModelError("no demonstrated reference effect; M1 undefined "
                         f"(interval ({lo}, {hi}) does not exclude 0)")
    return MarginResult(abs(lo), direction)


def derive_m2(m1: float, retention: float) -> float:
    """Clinically acceptable margin ``(1 - retention) * m1``."""
    if not 0.0 <= retention <= 1.0:
        raise ValueError(f"retention must lie in [0, 1], got {retention}")
    if not m1 > 0:
        raise ValueError("m1 must be positive")
    return (1.0 - retention) * m1
