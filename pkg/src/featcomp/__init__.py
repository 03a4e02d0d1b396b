"""Feature compression with a discrimination-aware training objective."""

from .codec import (
    Activation,
    CodecConfig,
    CodecParams,
    QuantSpec,
    backward_batch,
    decode,
    encode,
    forward_batch,
    ic_to_bottleneck,
    identity_codec,
    init_codec,
    quantize_code,
)
from .corpus import (
    FeatureCorpus,
    LabeledFeature,
    Profile,
    Role,
    SynthSpec,
    generate_synthetic,
    make_verification_pairs,
    read_checkpoint,
    read_corpus,
    read_text_corpus,
    split_query_gallery,
    write_checkpoint,
    write_corpus,
)
from .errors import (
    DataError,
    DomainError,
    EvaluationError,
    FeatcompError,
    FormatError,
    NumericError,
    ShapeError,
    VersionError,
)
from .evaluator import (
    DiscriminabilityStats,
    RetrievalReport,
    VerificationReport,
    cmc_and_rank1,
    discriminability_stats,
    evaluate_retrieval,
    mean_ap,
    pairwise_distances,
    pca_project_2d,
    verification_accuracy,
)
from .metrics import (
    LossKind,
    LossSpec,
    Triplet,
    combined_loss,
    dis_loss,
    dis_loss_grads,
    mse_distance,
    sim_loss,
    sim_loss_grad,
)
from .numcore import AdamState, Rng, adam_init, adam_step, finite_diff_grad, matmul, seeded_rng
from .training import (
    MinedTriplet,
    PkBatch,
    TrainConfig,
    TrainHistory,
    cosine_lr,
    mine_hardest_triplets,
    sample_pk_batch,
    train,
    train_step,
)

__version__ = "0.1.0"
