"""SQL-injection test case generation with a seq2seq model, beam-search
diversification, and a closed-loop fuzzing harness over a mock target."""

from .beam import beam_search, translate
from .dataset import TrainingPair, load, pair_corpus, preprocess, save
from .harness import FuzzConfig, FuzzReport, SutSpec, fuzz, load_sut, oracle, submit
from .model import Model, TransformerConfig, load_checkpoint, save_checkpoint
from .mutation import MutationKind, enrich, equivalent, mutate, normalize
from .tokens import TokenSequence, Vocabulary, build_vocab, detokenize, generalize, tokenize
from .training import TrainSettings, train

__version__ = "0.1.0"

__all__ = [
    "Model",
    "TransformerConfig",
    "TrainingPair",
    "TrainSettings",
    "TokenSequence",
    "Vocabulary",
    "FuzzConfig",
    "FuzzReport",
    "SutSpec",
    "MutationKind",
    "beam_search",
    "build_vocab",
    "detokenize",
    "enrich",
    "equivalent",
    "fuzz",
    "generalize",
    "load",
    "load_checkpoint",
    "load_sut",
    "mutate",
    "normalize",
    "oracle",
    "pair_corpus",
    "preprocess",
    "save",
    "save_checkpoint",
    "submit",
    "tokenize",
    "train",
    "translate",
]
