"""Neural autoregressive topic models with language-model context.

Implements the bag-of-words autoregressive topic model (DocNADE), its
LSTM-contextualized mixtures (ctx-DocNADE, and ctx-DocNADEe with a
frozen pre-trained embedding prior), textTOvec document vectors, and
the usual evaluation protocols: held-out perplexity, sliding-window
NPMI topic coherence, precision-at-fraction retrieval, and logistic
regression categorization.
"""

from .corpus import (
    CorpusSplit,
    Document,
    EmbeddingTable,
    Vocabulary,
    build_split,
    build_vocabulary,
    encode_document,
    load_corpus,
    load_embeddings,
)
from .ctx_lm import (
    BOS,
    CtxModelParams,
    CtxTrainConfig,
    LSTMParams,
    MixtureConfig,
    ctx_doc_gradients,
    ctx_doc_log_likelihood,
    init_ctx_params,
    pretrain_then_train,
    text_to_vec,
)
from .docnade import (
    DocNADEParams,
    TrainConfig,
    doc_gradients,
    doc_log_likelihood,
    doc_representation,
    init_params,
    train,
)
from .evaluation import (
    evaluate_classifier,
    extract_topics,
    npmi_coherence,
    perplexity,
    precision_at_fractions,
    train_classifier,
)

__version__ = "0.1.0"

__all__ = [
    "BOS",
    "CorpusSplit",
    "CtxModelParams",
    "CtxTrainConfig",
    "Document",
    "DocNADEParams",
    "EmbeddingTable",
    "LSTMParams",
    "MixtureConfig",
    "TrainConfig",
    "Vocabulary",
    "build_split",
    "build_vocabulary",
    "ctx_doc_gradients",
    "ctx_doc_log_likelihood",
    "doc_gradients",
    "doc_log_likelihood",
    "doc_representation",
    "encode_document",
    "evaluate_classifier",
    "extract_topics",
    "init_ctx_params",
    "init_params",
    "load_corpus",
    "load_embeddings",
    "npmi_coherence",
    "perplexity",
    "precision_at_fractions",
    "pretrain_then_train",
    "text_to_vec",
    "train",
    "train_classifier",
]
