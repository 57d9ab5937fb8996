"""failsift: failure mode analysis for fault-injection campaigns.

Traces of message events become feature vectors (raw counts or
spurious/omission anomaly vectors), which are clustered either with
k-medoids or with an autoencoder whose embedding and centroids are
jointly optimized against a KL objective. Evaluation reports purity and
failure-mode distributions against ground truth.
"""

__version__ = "0.1.0"

from . import errors
from .anomaly import (
    AnomalyThresholds,
    AnomalyVector,
    AnomalyVectorizer,
    CommonBackbone,
    VmmModel,
    anomaly_counts,
    build_anomaly_matrix,
    detect_anomalies,
    fold_backbone,
    lcs_align,
    lcs_pair,
    load_anomaly_model,
    save_anomaly_model,
    sequence_probability,
    train_vmm,
)
from .autoencoder import (
    Autoencoder,
    DenseLayer,
    PhaseHistory,
    SgdConfig,
    desk_sgd_config,
    encoder_dims,
    gradient_check,
    init_autoencoder,
    train_autoencoder,
)
from .campaign import (
    KNOWN_FAILURE_LABELS,
    Campaign,
    Trace,
    ValidationReport,
    load_campaign,
    save_campaign,
    truth_labels_for,
    validate_campaign,
)
from .dec import (
    DecConfig,
    DecResult,
    DeepEmbeddedClustering,
    dec_fit,
    init_centroids,
    kl_gradients,
    kl_loss,
    soft_assign,
    target_distribution,
)
from .evaluate import (
    DistributionReport,
    PurityReport,
    distribution_report,
    map_clusters,
    purity,
    write_distribution_svg,
)
from .kmedoids import KMedoids, KMedoidsResult, distance, k_medoids
from .synth import SynthSpec, generate_campaign, mode_label, mode_signature
from .vectorize import (
    EventAlphabet,
    FeatureMatrix,
    TraceCountVectorizer,
    build_alphabet,
    build_feature_matrix,
    read_feature_csv,
    vectorize_trace,
    write_feature_csv,
)

__all__ = [
    "__version__",
    "errors",
    # campaign
    "KNOWN_FAILURE_LABELS",
    "Campaign",
    "Trace",
    "ValidationReport",
    "load_campaign",
    "save_campaign",
    "truth_labels_for",
    "validate_campaign",
    # vectorize
    "EventAlphabet",
    "FeatureMatrix",
    "TraceCountVectorizer",
    "build_alphabet",
    "build_feature_matrix",
    "read_feature_csv",
    "vectorize_trace",
    "write_feature_csv",
    # anomaly
    "AnomalyThresholds",
    "AnomalyVector",
    "AnomalyVectorizer",
    "CommonBackbone",
    "VmmModel",
    "anomaly_counts",
    "build_anomaly_matrix",
    "detect_anomalies",
    "fold_backbone",
    "lcs_align",
    "lcs_pair",
    "load_anomaly_model",
    "save_anomaly_model",
    "sequence_probability",
    "train_vmm",
    # kmedoids
    "KMedoids",
    "KMedoidsResult",
    "distance",
    "k_medoids",
    # autoencoder
    "Autoencoder",
    "DenseLayer",
    "PhaseHistory",
    "SgdConfig",
    "desk_sgd_config",
    "encoder_dims",
    "gradient_check",
    "init_autoencoder",
    "train_autoencoder",
    # dec
    "DecConfig",
    "DecResult",
    "DeepEmbeddedClustering",
    "dec_fit",
    "init_centroids",
    "kl_gradients",
    "kl_loss",
    "soft_assign",
    "target_distribution",
    # evaluate
    "DistributionReport",
    "PurityReport",
    "distribution_report",
    "map_clusters",
    "purity",
    "write_distribution_svg",
    # synth
    "SynthSpec",
    "generate_campaign",
    "mode_label",
    "mode_signature",
]
