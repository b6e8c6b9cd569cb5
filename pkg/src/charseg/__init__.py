"""Neural word segmentation by character tagging.

Library surface: the corpus pipeline (normalize, split, tag, labeled
files), subword vocabularies and features, the model variants with their
trainer, CRF inference, and the evaluation metrics. The ``charseg``
console script wires the same pieces into prepare / train / segment /
evaluate / inspect subcommands.
"""

from .corpus import (
    DatasetSplit,
    Sentence,
    normalize_text,
    read_labeled,
    segmentation_from_tags,
    split_dataset,
    split_sentences,
    tags_from_segmentation,
    write_labeled,
)
from .model import Model, ModelConfig, build, load_model, save_model, train
from .subword import NgramVocab, build_vocab

__version__ = "0.1.0"

__all__ = [
    "DatasetSplit",
    "Model",
    "ModelConfig",
    "NgramVocab",
    "Sentence",
    "build",
    "build_vocab",
    "load_model",
    "normalize_text",
    "read_labeled",
    "save_model",
    "segmentation_from_tags",
    "split_dataset",
    "split_sentences",
    "tags_from_segmentation",
    "train",
    "write_labeled",
    "__version__",
]
