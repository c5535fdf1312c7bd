"""Community member retrieval from text, with user embeddings learned by re-identification."""

__version__ = "0.1.0"

from .classifier import CommunityClassifier, probability, score, train_logreg
from .corpus import Corpus, UserDocument, apply_bigrams, load_corpus, save_corpus, tokenize
from .embedding import EmbeddingMatrix, SparseWeights, UserEmbedding, bag_of_words, embed
from .eval import CommunitySpec, EvalReport, fold_auc, leave_one_out, mrr_stats
from .index import RetrievalIndex, build_index, query_topk
from .reid import ReidEmbedder, TrainConfig, train_reid
from .vocab import Vocabulary, VocabularyBuilder, build_vocabulary

__all__ = [
    "CommunityClassifier",
    "CommunitySpec",
    "Corpus",
    "EmbeddingMatrix",
    "EvalReport",
    "ReidEmbedder",
    "RetrievalIndex",
    "SparseWeights",
    "TrainConfig",
    "UserDocument",
    "UserEmbedding",
    "Vocabulary",
    "VocabularyBuilder",
    "apply_bigrams",
    "bag_of_words",
    "build_index",
    "build_vocabulary",
    "embed",
    "fold_auc",
    "leave_one_out",
    "load_corpus",
    "mrr_stats",
    "probability",
    "query_topk",
    "save_corpus",
    "score",
    "tokenize",
    "train_logreg",
    "train_reid",
]
