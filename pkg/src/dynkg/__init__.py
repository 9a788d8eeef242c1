"""dynkg: zero-shot QA by reasoning over dynamically generated knowledge graphs.

Pipeline: a generative knowledge model produces scored commonsense
inferences that form a multi-level graph rooted at the input context;
answer candidates attach as leaves, factor edges score each (inference,
answer) pair, and per-answer totals aggregate all reasoning paths in log
space.
"""

from .aggregate import (
    AggregationConfig,
    AnswerScoreBreakdown,
    answer_scores,
    level_score,
    threshold_decide,
)
from .decoding import DecodeStrategy, Generation, decode, sample_topk
from .errors import BackendError, DataError, DynkgError, UsageError
from .graph import (
    AnswerLeaf,
    InferenceNode,
    ReasoningGraph,
    STORY_RELATIONS,
    TASK_SOCIALIQA,
    TASK_STORYCS,
    attach_answers,
    expand_level,
    graph_stats,
    prune,
)
from .model import (
    ALL_RELATIONS,
    ConditionalQuery,
    KnowledgeModel,
    Relation,
    TableModel,
    detokenize,
    marginal_context,
    tokenize,
)
from .pipeline import Engine, EngineConfig, PredictionResult
from .remote import RemoteModel, TableModelServer
from .scoring import (
    EMOTION_ANSWERS,
    PLUTCHIK_LABELS,
    FactorValue,
    QuestionSpec,
    answer_factor,
    map_question_to_relation,
    prefix_inference,
    story_emotion_factor,
)

__version__ = "0.1.0"
