"""Morphological transduction laboratory.

Two learners over IPA phoneme strings — a perceptron-trained linear
associator on trigram feature vectors and an attention encoder-decoder
— plus dataset tooling and the evaluation suite (accuracy strata, error
taxonomy, oscillation detection, rank correlation, contingency tests)
used to compare them.
"""

from .checkpoint import load_tensors, save_tensors
from .dataset import (
    TAGS,
    InflectionPair,
    SplitCorpus,
    augment_multitask,
    load_tsv,
    save_tsv,
    split,
    synth_corpus,
    to_examples,
)
from .ed_model import BOS, EOS, PAD, DecodeResult, EDModel, Vocabulary
from .ed_training import EncoderDecoder, build_vocabulary, greedy_decode_batch
from .errors import (
    CheckpointError,
    DegenerateTable,
    DimensionMismatch,
    EmptyCandidates,
    EmptyContext,
    EmptyDataset,
    LengthMismatch,
    MorpholabError,
    NotScalar,
    ParseError,
    ShapeMismatch,
    UnknownSymbol,
)
from .experiments import (
    EvalReport,
    IrregularLexicon,
    UShapeRecord,
    WugItem,
    WugReport,
    accuracy,
    chi_squared_2x2,
    classify_error,
    compile_irregular_lexicon,
    detect_micro_ushape,
    epochs_to_accuracy,
    learning_curves,
    regular_past,
    spearman_rho,
    wug_eval,
)
from .optim import Adadelta, adadelta_step
from .phonology import (
    FeatureTable,
    PhonemeInventory,
    PhonemeString,
    Wickelphone,
    WickelfeatureEncoder,
    default_feature_table,
    default_inventory,
    encode_string,
    phoneme_trigrams,
    tokenize,
    trigram_features,
)
from .rm_model import PatternAssociator, generate_candidates
from .seeding import derive_seed, rng_for
from .tensor import Tape, Tensor, backward

__version__ = "0.1.0"

__all__ = [
    "Adadelta",
    "BOS",
    "CheckpointError",
    "DecodeResult",
    "DegenerateTable",
    "DimensionMismatch",
    "EDModel",
    "EOS",
    "EmptyCandidates",
    "EmptyContext",
    "EmptyDataset",
    "EncoderDecoder",
    "EvalReport",
    "FeatureTable",
    "InflectionPair",
    "IrregularLexicon",
    "LengthMismatch",
    "MorpholabError",
    "NotScalar",
    "PAD",
    "ParseError",
    "PatternAssociator",
    "PhonemeInventory",
    "PhonemeString",
    "ShapeMismatch",
    "SplitCorpus",
    "TAGS",
    "Tape",
    "Tensor",
    "UShapeRecord",
    "UnknownSymbol",
    "Vocabulary",
    "WickelfeatureEncoder",
    "Wickelphone",
    "WugItem",
    "WugReport",
    "accuracy",
    "adadelta_step",
    "augment_multitask",
    "backward",
    "build_vocabulary",
    "chi_squared_2x2",
    "classify_error",
    "compile_irregular_lexicon",
    "default_feature_table",
    "default_inventory",
    "derive_seed",
    "detect_micro_ushape",
    "encode_string",
    "epochs_to_accuracy",
    "generate_candidates",
    "greedy_decode_batch",
    "learning_curves",
    "load_tensors",
    "load_tsv",
    "phoneme_trigrams",
    "regular_past",
    "rng_for",
    "save_tensors",
    "save_tsv",
    "spearman_rho",
    "split",
    "synth_corpus",
    "to_examples",
    "tokenize",
    "trigram_features",
    "wug_eval",
]
