"""Pacing-controlled hierarchical story outlining.

The public surface: the outline data model, chat/embedding gateway with
record/replay, pairwise concreteness evaluators, the expansion engine, the
training-data pipeline, the evaluation harness, and the story renderer.
"""

from .engine import EngineConfig, TraceWriter, expand_node, run_breadth_first, run_vaguest_first, threshold
from .errors import (
    BackendError,
    ConcoctError,
    ConfigError,
    FormatError,
    ReplayMissError,
    ValidationError,
)
from .evaluator import (
    CachingEvaluator,
    HttpEvaluator,
    JudgeEvaluator,
    ScriptedEvaluator,
    m_avg,
    score_leaves,
    select_vaguest,
)
from .gateway import Cassette, Gateway
from .outline import Outline, OutlineNode, attach_children, deserialize, flatten_leaves, leaves, serialize

__all__ = [
    "BackendError",
    "CachingEvaluator",
    "Cassette",
    "ConcoctError",
    "ConfigError",
    "EngineConfig",
    "FormatError",
    "Gateway",
    "HttpEvaluator",
    "JudgeEvaluator",
    "Outline",
    "OutlineNode",
    "ReplayMissError",
    "ScriptedEvaluator",
    "TraceWriter",
    "ValidationError",
    "attach_children",
    "deserialize",
    "expand_node",
    "flatten_leaves",
    "leaves",
    "m_avg",
    "run_breadth_first",
    "run_vaguest_first",
    "score_leaves",
    "select_vaguest",
    "serialize",
    "threshold",
]

__version__ = "0.1.0"
