"""treetex: tree-aware LaTeX sequence decoding at desk scale.

Tokenize LaTeX math, annotate token sequences with expression-tree
parent indices, train a joint sequence + tree-structure model on
synthetic corpora, rerank beam candidates by tree-structure confidence,
and evaluate with exact-match and complexity-bucketed metrics.
"""

from .vocab import (
    EOS_TOKEN,
    PAD_TOKEN,
    SOS_TOKEN,
    STRUCTURAL_TOKENS,
    TokenClass,
    TokenSeq,
    UnknownTokenError,
    Vocab,
    classify,
)
from .tokenizer import detokenize, tokenize_raw, tokenize_spaced
from .treebank import (
    NO_PARENT,
    DanglingScriptError,
    ExprTree,
    ParentAnnotation,
    UnbalancedBracesError,
    brackets_balanced,
    build_tree,
    sequence_complexity,
    structural_complexity,
    to_tuple_text,
    treeify,
    treeify_tokens,
)
from .autodiff import Tape, Tensor, backward
from .gradcheck import GradCheckReport, check_primitives, gradcheck
from .model import (
    Batch,
    JointModel,
    ModelConfig,
    RelationScoreMatrix,
    predict_parents,
    relation_scores,
    seq_loss,
    struct_loss,
    total_loss,
)
from .decoding import Hypothesis, RerankResult, beam_search, rerank, struct_score
from .metrics import EvalReport, evaluate, parent_accuracy, token_edit_distance
from .corpus import (
    CorpusRecord,
    GrammarConfig,
    generate,
    ingest_dir,
    ingest_inkml,
    read_jsonl,
    write_jsonl,
)
from .training import TrainConfig, train_model

__version__ = "0.1.0"
