"""Event-history models for the first two goals of a soccer match."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    TERMS, BaselineHazard, ContractError, FitResult, GoalEvent, MatchRecord,
    ModelSpec, MonotoneLikelihoodError, ObservationRow, expand_preset,
)
from .ingest import Dataset, DatasetSummary, build_observations, probwin_from_odds, summarize  # noqa: E402
