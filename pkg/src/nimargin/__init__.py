"""Estimand-aware derivation of non-inferiority margins."""

__version__ = "0.1.0"

from .estimand import (AnalysisEvidence, Endpoint, Estimand,
                       IntercurrentEventSpec, PopulationTags, Strategy,
                       classify_historical_estimand, compare_estimands)
from .evidence import (SelectionCriteria, TrialRecord, ValidationError,
                       bundled_path, effects_for, ingest, select)
from .meta import (BenefitDirection, HierarchicalModelSpec, MarginResult,
                   ModelError, PosteriorSummary, TrialEffect, derive_m1,
                   derive_m2, fit_hierarchical, leave_one_out, se_from_ci)
from .simulation import (Arm, IeModel, TrajectoryModel, build_covariance,
                         run_grid, sample_latent, simulate_ie)
