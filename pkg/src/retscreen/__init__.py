"""Retinal screening pipeline and evaluation harness.

A decision workflow for diabetic-retinopathy screening photographs (quality
gate, anatomy check, referral and grading) with pluggable model backends,
plus the evaluation side: exact-rational classification metrics, ROC/AUC,
subgroup fairness, cohort aggregation under two referral schemes, synthetic
cohort generation, embedded reference results, an HTTP service, and a CLI.
"""

from .aggregate import (
    SCENARIOS,
    EvalPair,
    ScenarioSpec,
    image_pairs,
    outcome_records,
    pairs_confusion,
    patient_pairs,
    read_pairs,
    resolve_scenario,
    screening_pairs,
    write_pairs,
)
from .backends import (
    AnatomyOutput,
    Backend,
    BackendError,
    BackendUnavailable,
    ClassifierOutput,
    Detection,
    HttpBackend,
    InvalidOutput,
    MissingPrediction,
    ModelId,
    StubBackend,
    ThresholdConfig,
    load_manifest,
    save_manifest,
)
from .cohort import (
    CohortParams,
    FlipRates,
    ImageRecord,
    PredictionRow,
    consensus_grade,
    flip_predictions,
    generate_cohort,
    oracle_predictions,
    read_cohort,
    read_predictions,
    write_cohort,
    write_predictions,
)
from .domain import (
    Disposition,
    Grade,
    Laterality,
    Projection,
    ReferralCategory,
    ReferralScheme,
    Sex,
    UnsupportedGrade,
    referral_category,
)
from .fairness import (
    DEFAULT_DI_BOUNDS,
    EmptyGroup,
    FairnessReport,
    GroupSpec,
    OutcomeRecord,
    disparate_impact,
    equal_opportunity_difference,
    fairness_report,
)
from .fixtures import REFERENCE_BY_NAME, REFERENCE_RESULTS, check_all, replay_fixture
from .metrics import (
    ConfusionMatrix,
    DegenerateLabels,
    EmptyMatrix,
    MetricsReport,
    RocCurve,
    RocPoint,
    auc,
    compute_metrics,
    percent_half_up,
    roc_curve,
)
from .preprocess import (
    FundusRegion,
    InvalidImage,
    NoFundusDetected,
    PreprocessConfig,
    StandardImage,
    detect_fundus_region,
    preprocess,
    standardize,
)
from .report import EmptyInput, EvaluationReport, evaluate_scenario, write_evaluation_outputs
from .service import ServiceConfig, create_app
from .workflow import (
    MdDecision,
    MdProvider,
    PresetMd,
    QualityVerdict,
    ScreeningPolicy,
    ScreeningResult,
    StageRecord,
    disposition_category,
    quality_gate,
    run_screening,
)

__version__ = "1.0.0"

__all__ = [
    "AnatomyOutput",
    "Backend",
    "BackendError",
    "BackendUnavailable",
    "ClassifierOutput",
    "CohortParams",
    "ConfusionMatrix",
    "DEFAULT_DI_BOUNDS",
    "DegenerateLabels",
    "Detection",
    "Disposition",
    "EmptyGroup",
    "EmptyInput",
    "EmptyMatrix",
    "EvalPair",
    "EvaluationReport",
    "FairnessReport",
    "FlipRates",
    "FundusRegion",
    "Grade",
    "GroupSpec",
    "HttpBackend",
    "ImageRecord",
    "InvalidImage",
    "InvalidOutput",
    "Laterality",
    "MdDecision",
    "MdProvider",
    "MetricsReport",
    "MissingPrediction",
    "ModelId",
    "NoFundusDetected",
    "OutcomeRecord",
    "PredictionRow",
    "PreprocessConfig",
    "PresetMd",
    "Projection",
    "QualityVerdict",
    "REFERENCE_BY_NAME",
    "REFERENCE_RESULTS",
    "ReferralCategory",
    "ReferralScheme",
    "RocCurve",
    "RocPoint",
    "SCENARIOS",
    "ScenarioSpec",
    "ScreeningPolicy",
    "ScreeningResult",
    "ServiceConfig",
    "Sex",
    "StageRecord",
    "StandardImage",
    "StubBackend",
    "ThresholdConfig",
    "UnsupportedGrade",
    "auc",
    "check_all",
    "compute_metrics",
    "consensus_grade",
    "create_app",
    "detect_fundus_region",
    "disparate_impact",
    "disposition_category",
    "equal_opportunity_difference",
    "evaluate_scenario",
    "fairness_report",
    "flip_predictions",
    "generate_cohort",
    "image_pairs",
    "load_manifest",
    "oracle_predictions",
    "outcome_records",
    "pairs_confusion",
    "patient_pairs",
    "percent_half_up",
    "preprocess",
    "quality_gate",
    "read_cohort",
    "read_pairs",
    "read_predictions",
    "referral_category",
    "replay_fixture",
    "resolve_scenario",
    "roc_curve",
    "run_screening",
    "save_manifest",
    "screening_pairs",
    "standardize",
    "write_cohort",
    "write_evaluation_outputs",
    "write_pairs",
    "write_predictions",
]
