"""Deterministic, model-independent explanations for spectrogram classifiers.

The engine perturbs a spectrogram by masking contiguous frequency-band
chunks, keeps the variants the classifier still gets right, and averages
their masks into a per-band evidence map, a filtered matrix, and a chunk
importance histogram.
"""

from .engine import (
    ChiMap,
    EvidenceConfig,
    EvidenceError,
    EvidenceResult,
    ImportanceHistogram,
    ScoreRecord,
    Selection,
    appendix_filter,
    chi_estimate,
    cross_entropy,
    importance_histogram,
    minmax_normalize,
    run_evidence,
    select_survivors,
    weight_of,
)
from .harness import (
    Manifest,
    ManifestItem,
    MetricsReport,
    build_report,
    confusion_metrics,
    load_manifest,
    macro_auc,
    roc_auc,
    run_experiment,
)
from .masking import (
    ChunkGrid,
    ChunkMask,
    RowSelection,
    SplitMix64,
    apply_mask,
    enumerate_masks,
    expand_mask,
    make_grid,
    sample_mask,
)
from .predictor import (
    HandshakeError,
    InvalidProbabilityError,
    PredictorError,
    PredictorInfo,
    PredictTimeoutError,
    ProtocolError,
    SpawnError,
    SubprocessPredictor,
    coerce_probabilities,
    connect_subprocess,
    linear_softmax_predictor,
    planted_rows_predictor,
    uniform_predictor,
)
from .spectra import (
    AudioClip,
    MelParams,
    Spectrogram,
    load_wav,
    mel_filterbank,
    mel_spectrogram,
    pad_or_trim,
    power_to_db,
    read_spectrogram_csv,
    write_spectrogram_csv,
    write_spectrogram_png,
)

__version__ = "0.1.0"
