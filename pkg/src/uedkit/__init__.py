"""uedkit: robustness measurement and robust training for discrete speech units.

The library half measures how stable a quantizer's unit sequences are under
content-preserving signal perturbations (unit edit distance), and trains
quantizers to be stable via pseudo-labeling with an alignment-marginal loss.
The CLI half (`uedkit` / `python -m uedkit`) orchestrates corpora, training,
and evaluation reports.
"""

__version__ = "0.1.0"

from .audio import CANONICAL_RATE, Signal, derive_rng, derive_seed, read_wav, write_wav
from .augment import (
    AugmentationSet,
    AugmentationSpec,
    Identity,
    NoiseInjection,
    PitchShift,
    Reverb,
    RoomConfig,
    TimeStretch,
    add_noise,
    default_augmentation_set,
    pitch_shift,
    reverberate,
    sample_augmentation,
    simulate_rir,
    time_stretch,
)
from .ctc import collapse_path, ctc_brute_force, ctc_grad, ctc_loss, min_frames
from .dataset import (
    DatasetManifest,
    ManifestEntry,
    gen_synth_corpus,
    read_manifest,
    synth_utterance,
    write_manifest,
)
from .encoder import (
    EncoderConfig,
    FrameSequence,
    LogMelEncoder,
    encode,
    frame_count,
    read_features,
    write_features,
)
from .errors import (
    DegenerateSignalError,
    FormatError,
    InfeasibleTargetError,
    TrainingError,
    UedkitError,
    UnsupportedFormatError,
    ValidationError,
)
from .quantizer import (
    KMeansQuantizer,
    MlpQuantizer,
    UnitSequence,
    dedup,
    kmeans_fit,
    load_quantizer,
    quantize,
    quantizer_fingerprint,
    read_units,
    round_to_f32,
    save_quantizer,
    write_units,
)
from .robustness import (
    UedReport,
    levenshtein,
    report_to_csv,
    report_to_json,
    ued_dataset,
    ued_sample,
)
from .training import (
    AdamState,
    TrainConfig,
    TrainLog,
    adam_step,
    mlp_backward,
    read_train_log,
    train_iterative,
    train_robust,
    write_train_log,
)
