"""Symmetric correlation and support pruning for many-shot few-shot segmentation."""

from .correlation import (
    AffineMap,
    AttentionMap,
    ContributionReport,
    ScProjector,
    SupportPack,
    contribution_index,
    deviation,
    multi_head_sc,
    sc_logits,
    sc_project,
    standard_attention,
    symmetric_attention,
)
from .estimators import FewShotSegmenter, SupportPruner, SymmetricCorrelation
from .exceptions import (
    ConfigurationError,
    ContractError,
    DegenerateRowError,
    EvaluationError,
    FormatError,
    ShapeError,
    SymCorrError,
    TrainingError,
)
from .pruning import (
    PruneConfig,
    PruneResult,
    PruneScoreTable,
    brute_force_prune,
    greedy_prune,
    jensen_gap_report,
    multilayer_prune,
    score_table,
    theta_term,
    topk_prune,
)

__version__ = "0.1.0"
