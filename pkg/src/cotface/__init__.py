"""Cotangent-margin angular losses and a small face-authentication toolkit."""

from .angular import (
    AngularBatch,
    LossConfig,
    SingularityError,
    ZeroVectorError,
    angles_from_features,
    cot_via_identity,
    cot_via_theta,
    elastic_sample,
    l2_normalize,
    l2_normalize_rows,
)
from .losses import (
    ANGULAR_LOSSES,
    LossOutput,
    ScorePair,
    arcface_loss,
    combined_margin_cos_loss,
    combined_margin_cot_loss,
    cosface_loss,
    double_loss,
    dual_cot_cos_loss,
    elastic_cot_loss,
    elasticface_arc_loss,
    elasticface_cos_loss,
    generalized_lmcot_loss,
    lmcot_loss,
    margin_sigmoid_ce,
    norm_softmax_loss,
    softmax_loss,
    sphereface_loss,
)
from .metrics import (
    RankedQuery,
    RankedRetrieval,
    ScoredPairs,
    auc,
    cosine_distance,
    cosine_similarity,
    eer,
    far_frr_sweep,
    gap,
    histogram,
    map_at_100,
    pca2,
)
from .train import (
    GradcheckReport,
    MlpModel,
    SynthSpec,
    TrainReport,
    TrainingDivergedError,
    backward,
    backward_scores,
    forward,
    forward_scores,
    gradcheck,
    init_embedding_model,
    init_score_model,
    load_model,
    save_model,
    sgd_step,
    synth_dataset,
    train_loop,
)

__version__ = "0.1.0"
