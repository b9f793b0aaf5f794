"""
Patient-journey simulation of a two-arm weight-management trial with a
single irreversible intercurrent event.

Latent (event-free) trajectories are multivariate normal over the 11
post-baseline visits. At each visit the event occurs with probability
``expit(beta0 + beta1 * y)`` given the patient's current latent value; after
the event the patient's mean jumps to the placebo mean while the individual
deviation is kept.

Random numbers come from fixed-size blocks of patients, each with its own
``SeedSequence`` keyed by ``(seed, arm, stream, block)``. Results are
therefore identical for any number of worker threads.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

VISIT_WEEKS = (0, 4, 8, 12, 16, 20, 28, 36, 44, 52, 60, 68)

# Relative mean % change from baseline, one entry per visit in VISIT_WEEKS.
MEAN_PLACEBO = (0.0, -1.12, -1.70, -2.20, -2.51, -2.86, -2.89, -3.04, -3.31,
                -3.30, -3.22, -3.02)
MEAN_REFERENCE = (0.0, -2.32, -4.07, -6.05, -7.84, -9.71, -12.04, -13.86,
                  -15.21, -16.14, -16.53, -16.8)

DEFAULT_BETA1 = math.log(1.1)
DEFAULT_P0_GRID = tuple(round(0.01 * k, 2) for k in range(11))
DEFAULT_N_PER_ARM = 150_000
BLOCK_SIZE = 4096

_STREAM_LATENT = 0
_STREAM_IE = 1


class Arm(enum.Enum):
    PLACEBO = "placebo"
    REFERENCE = "reference"

    @property
    def code(self) -> int:
        return 0 if self is Arm.PLACEBO else 1


# -- logistic helpers ---------------------------------------------------------

def expit(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def logit(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


# -- model objects ------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryModel:
    visit_weeks: tuple[int, ...] = VISIT_WEEKS
    mean_placebo: tuple[float, ...] = MEAN_PLACEBO
    mean_reference: tuple[float, ...] = MEAN_REFERENCE
    variance: float = 95.0
    lag1_correlation: float = 0.8

    def __post_init__(self):
        k = len(self.visit_weeks)
        if len(self.mean_placebo) != k or len(self.mean_reference) != k:
            raise ValueError("mean vectors must match the number of visits")
        if any(b <= a for a, b in zip(self.visit_weeks, self.visit_weeks[1:])):
            raise ValueError("visit weeks must be strictly increasing")
        if self.mean_placebo[0] != 0 or self.mean_reference[0] != 0:
            raise ValueError("baseline change must be zero in both arms")
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        if not abs(self.lag1_correlation) < 1:
            raise ValueError("correlation must lie in (-1, 1)")

    @property
    def n_post_baseline(self) -> int:
        return len(self.visit_weeks) - 1

    def arm_mean(self, arm: Arm) -> np.ndarray:
        """Post-baseline mean vector of an arm."""
        m = self.mean_placebo if arm is Arm.PLACEBO else self.mean_reference
        return np.array(m[1:], dtype=float)

    def covariance(self) -> np.ndarray:
        return build_covariance(self.variance, self.lag1_correlation,
                                self.n_post_baseline)


@dataclass(frozen=True)
class IeModel:
    """
    Per-visit logistic event model. ``never=True`` encodes
    ``beta0 = logit(0) = -inf``: no patient ever has the event.
    """
    beta0_per_visit: tuple[float, ...]
    beta1: float = DEFAULT_BETA1
    never: bool = False

    @classmethod
    def from_p0(cls, p0: float, beta1: float = DEFAULT_BETA1,
                n_visits: int = 11) -> "IeModel":
        """Same intercept at every visit, given as ``expit(beta0) = p0``."""
        if not 0.0 <= p0 < 1.0:
            raise ValueError(f"p0 must lie in [0, 1), got {p0}")
        if p0 == 0.0:
            return cls((-math.inf,) * n_visits, beta1, never=True)
        return cls((logit(p0),) * n_visits, beta1)

    def probabilities(self, latent: np.ndarray) -> np.ndarray:
        """Event probability at each post-baseline visit (same shape as latent)."""
        latent = np.asarray(latent, dtype=float)
        if self.never:
            return np.zeros_like(latent)
        b0 = np.asarray(self.beta0_per_visit, dtype=float)
        return expit(b0 + self.beta1 * latent)


@dataclass(frozen=True)
class PatientJourney:
    arm: Arm
    latent: np.ndarray
    ie_visit_index: Optional[int] = None
    observed: Optional[np.ndarray] = None


@dataclass(frozen=True)
class CohortSummary:
    p0: float
    arm: Arm
    n: int
    mean_week68_observed: float
    mean_week68_latent: float
    ie_proportion: float


@dataclass(frozen=True)
class GridResult:
    summaries: list[CohortSummary]
    # rows of (p0, effect_treatment_policy, effect_hypothetical, se_tp)
    effects: list[tuple[float, float, float, float]] = field(default_factory=list)


# -- operations ---------------------------------------------------------------

def build_covariance(variance: float, rho: float, k: int) -> np.ndarray:
    """
    First-order autoregressive covariance ``variance * rho**|i-j|`` over
    ``k`` equally indexed visits.
    """
    if k < 1:
        raise ValueError("need at least one visit")
    if not abs(rho) < 1:
        raise ValueError("|rho| must be < 1")
    if not variance > 0:
        raise ValueError("variance must be positive")
    idx = np.arange(k)
    return variance * rho ** np.abs(idx[:, None] - idx[None, :])


def _block_rng(seed: int, arm: Arm, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(arm.code, stream, block))
    return np.random.Generator(np.random.PCG64(ss))


def _blocks(n: int) -> list[tuple[int, int, int]]:
    return [(b, lo, min(lo + BLOCK_SIZE, n))
            for b, lo in enumerate(range(0, n, BLOCK_SIZE))]


def _run_blocks(fn, n: int, workers: int) -> list:
    blocks = _blocks(n)
    if workers <= 1 or len(blocks) == 1:
        return [fn(*b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), blocks))


def sample_latent(model: TrajectoryModel, arm: Arm, n: int, seed: int,
                  workers: int = 1) -> np.ndarray:
    """
    Draw ``n`` event-free trajectories, shape ``(n, n_post_baseline)``.

    Rows are ``mean + L z`` with ``L`` the lower Cholesky factor of the
    covariance and ``z`` standard normal.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    cov = model.covariance()
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    mean = model.arm_mean(arm)
    k = model.n_post_baseline

    def block(b, lo, hi):
        z = _block_rng(seed, arm, _STREAM_LATENT, b).standard_normal((hi - lo, k))
        return mean + z @ chol.T

    return np.vstack(_run_blocks(block, n, workers))


def ie_uniforms(arm: Arm, n: int, k: int, seed: int, workers: int = 1) -> np.ndarray:
    """Uniform draws driving the per-visit event trials, shape ``(n, k)``."""
    def block(b, lo, hi):
        return _block_rng(seed, arm, _STREAM_IE, b).random((hi - lo, k))
    return np.vstack(_run_blocks(block, n, workers))


def simulate_ie(latent_row: Sequence[float], ie: IeModel,
                rng: np.random.Generator) -> Optional[int]:
    """
    Scan visits in order and return the 1-based index of the first visit at
    which the event occurs, or ``None``.

    One uniform is consumed per visit whenever the model can fire, so the
    stream position does not depend on the outcome.
    """
    latent_row = np.asarray(latent_row, dtype=float)
    if ie.never:
        return None
    u = rng.random(latent_row.shape[0])
    return first_event(u[None, :], ie.probabilities(latent_row)[None, :])[0]


def first_event(u: np.ndarray, p: np.ndarray) -> list[Optional[int]]:
    """Row-wise 1-based index of the first ``u < p``, ``None`` if no success."""
    hit = u < p
    any_hit = hit.any(axis=1)
    idx = hit.argmax(axis=1) + 1
    return [int(i) if h else None for i, h in zip(idx, any_hit)]


def _event_index_array(u: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Vectorised ``first_event``; 0 encodes "no event"."""
    hit = u < p
    return np.where(hit.any(axis=1), hit.argmax(axis=1) + 1, 0)


def apply_post_ie(journey: PatientJourney, model: TrajectoryModel) -> PatientJourney:
    """
    Fill ``observed``: identical to ``latent`` up to and including the event
    visit, afterwards the placebo mean plus the patient's own deviation from
    their arm mean.
    """
    latent = np.asarray(journey.latent, dtype=float)
    observed = latent.copy()
    v = journey.ie_visit_index
    if v is not None:
        shift = model.arm_mean(Arm.PLACEBO) - model.arm_mean(journey.arm)
        observed[v:] = latent[v:] + shift[v:]
    return replace(journey, observed=observed)


def _observed_matrix(latent: np.ndarray, event_idx: np.ndarray,
                     model: TrajectoryModel, arm: Arm) -> np.ndarray:
    if arm is Arm.PLACEBO or not event_idx.any():
        return latent
    shift = model.arm_mean(Arm.PLACEBO) - model.arm_mean(arm)
    cols = np.arange(1, latent.shape[1] + 1)
    after = (event_idx[:, None] > 0) & (cols[None, :] > event_idx[:, None])
    return latent + after * shift[None, :]


def simulate_cohort(model: TrajectoryModel, arm: Arm, ie: IeModel, n: int,
                    seed: int, workers: int = 1) -> list[PatientJourney]:
    """Full per-patient journeys; convenient for small ``n``."""
    latent = sample_latent(model, arm, n, seed, workers)
    u = ie_uniforms(arm, n, model.n_post_baseline, seed, workers)
    idx = (np.zeros(n, dtype=int) if ie.never
           else _event_index_array(u, ie.probabilities(latent)))
    obs = _observed_matrix(latent, idx, model, arm)
    return [PatientJourney(arm, latent[i], int(idx[i]) or None, obs[i])
            for i in range(n)]


def _fmean(x: np.ndarray) -> float:
    return math.fsum(x.tolist()) / x.shape[0]


def run_grid(model: TrajectoryModel = TrajectoryModel(),
             beta1: float = DEFAULT_BETA1,
             p0_grid: Sequence[float] = DEFAULT_P0_GRID,
             n_per_arm: int = DEFAULT_N_PER_ARM,
             seed: int = 42,
             workers: int = 1) -> GridResult:
    """
    Sweep the per-visit event probability and summarise both arms at the
    final visit.

    Latent trajectories and event uniforms are drawn once per arm and reused
    at every grid point, so the hypothetical (latent) means do not depend on
    ``p0`` and event sets are nested as ``p0`` grows.
    """
    if n_per_arm < 1:
        raise ValueError("n_per_arm must be >= 1")
    for p0 in p0_grid:
        if not 0.0 <= p0 < 1.0:
            raise ValueError(f"p0 must lie in [0, 1), got {p0}")

    k = model.n_post_baseline
    draws = {}
    for arm in Arm:
        latent = sample_latent(model, arm, n_per_arm, seed, workers)
        draws[arm] = (latent, ie_uniforms(arm, n_per_arm, k, seed, workers))

    summaries: list[CohortSummary] = []
    effects = []
    for p0 in p0_grid:
        ie = IeModel.from_p0(p0, beta1, k)
        last = {}
        for arm in (Arm.PLACEBO, Arm.REFERENCE):
            latent, u = draws[arm]
            if ie.never:
                idx = np.zeros(n_per_arm, dtype=int)
            else:
                idx = _event_index_array(u, ie.probabilities(latent))
            obs_last = _observed_matrix(latent, idx, model, arm)[:, -1]
            last[arm] = obs_last
            summaries.append(CohortSummary(
                p0=float(p0), arm=arm, n=n_per_arm,
                mean_week68_observed=_fmean(obs_last),
                mean_week68_latent=_fmean(latent[:, -1]),
                ie_proportion=int(np.count_nonzero(idx)) / n_per_arm))
        pl, ref = summaries[-2], summaries[-1]
        se = math.sqrt((np.var(last[Arm.PLACEBO], ddof=1)
                        + np.var(last[Arm.REFERENCE], ddof=1)) / n_per_arm) \
            if n_per_arm > 1 else math.nan
        effects.append((float(p0),
                        ref.mean_week68_observed - pl.mean_week68_observed,
                        ref.mean_week68_latent - pl.mean_week68_latent,
                        se))
    return GridResult(summaries, effects)
