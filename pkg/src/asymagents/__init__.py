"""Agents that collaborate across an information-asymmetric social network.

Module map:
- corpus: social graph, message corpus, visibility boundary, dataset files
- memory: per-individual exact + semantic retrieval indexes
- infonav: plan state machine tracking what an agent still needs to learn
- backend: chat/embedding providers (OpenAI-compatible HTTP + replay scripts)
- agents: the observe-think-act communication loop and run orchestration
- benchgen: schedule worlds with deterministic oracles, needle-persona instances
- metrics: scoring, reports, and trajectory analytics
- cli: the `asymagents` command line
"""

__version__ = "0.1.0"

from .agents import Engine, RunConfig  # noqa: F401
from .backend import BackendConfig, ChatBackend, ReplayScript  # noqa: F401
from .corpus import (  # noqa: F401
    Individual,
    Message,
    MessageCorpus,
    SocialNetwork,
    TaskInstance,
    graph_stats,
    load_network,
    visible_messages,
)
from .memory import ClearQuery, FuzzyQuery, HashEmbedder  # noqa: F401
