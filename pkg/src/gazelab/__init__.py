"""Toolkit for multi-annotator film clip annotation studies.

The pipeline, end to end: parse span annotations and clip
delimitations, project and merge timelines onto the clip grid, check
annotator consistency with a chance-corrected agreement score,
summarize the dataset, then probe what pre-extracted clip embeddings
capture: one linear concept axis per annotated concept, an
interpretable classifier on the concept coordinates, a fold harness
with balanced draws and trivial baselines, and a regression that
attributes classification errors to clip factors.
"""

from .agreement import (
    GammaConfig,
    GammaResult,
    GammaSummary,
    expected_disorder,
    gamma,
    gamma_per_film_and_average,
    level_distance,
    observed_disorder,
)
from .cbm import (
    CavCvConfig,
    ConceptScores,
    ConceptVector,
    NegativeMode,
    build_concept_sets,
    concept_presence_f1,
    concept_scores,
    export_tree_report,
    fit_all_cavs,
    fit_cav,
    score_table,
    train_pcbm,
)
from .core import (
    CONCEPTS,
    ClipDelimitation,
    ClipLabel,
    Concept,
    EmbeddingTable,
    FrameTokenMatrix,
    ObjLevel,
    SpanAnnotation,
    dump_embeddings,
    load_embeddings,
    parse_annotations,
    parse_clip_index,
    pool_frames,
    serialize_annotations,
    serialize_clip_index,
)
from .fusion import (
    OverlapBasis,
    ProjectionConfig,
    SweepRow,
    fuse,
    labels_as_spans,
    merge,
    overlap_fraction,
    project,
    sweep_thresholds,
)
from .harness import (
    EvalReport,
    FactorWeights,
    FoldPlan,
    ModelKind,
    MovieSplit,
    TaskConfig,
    balanced_train_sets,
    error_factor_analysis,
    leave_movies_out,
    make_folds,
    make_folds_from_ids,
    run_task,
)
from .models import (
    DecisionTree,
    LinearKind,
    LinearModel,
    Metrics,
    MlpModel,
    f1,
    init_mlp,
    mlp_gradient,
    model_from_json,
    model_to_json,
    train_logreg,
    train_mlp,
    train_svm,
    train_tree,
    trivial_baseline_f1,
)
from .stats import (
    AnnotatorTrend,
    DatasetSummary,
    per_annotator_trend,
    summarize,
    task_class_fractions,
)

__version__ = "0.1.0"
