"""Neural discourse segmenter: BiLSTM-CRF with contextual-representation
mixing and windowed self-attention, built on a minimal reverse-mode
autodiff core with no external ML framework."""

from .config import TrainConfig
from .corpus import Sentence, Vocab, load_corpus, build_vocab
from .evaluator import SegMetrics, prf1
from .model import SegmenterModel

__all__ = [
    "TrainConfig", "Sentence", "Vocab", "load_corpus", "build_vocab",
    "SegMetrics", "prf1", "SegmenterModel",
]

__version__ = "0.1.0"
