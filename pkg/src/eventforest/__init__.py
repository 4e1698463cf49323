"""Token-budgeted streaming event memory over embedding vectors."""

from .core import TokenMatrix, cosine_similarity_matrix, merged_timestamp, pool_tokens, tome_merge
from .fstw import EventNode, Window, WindowConfig
from .pemf import MemoryForest, PairScore, PenaltyWeights, Snapshot, snapshot
from .baselines import PolicyKind, make_policy, policy_snapshot, policy_update
from .synth import GroundTruth, StreamSpec, generate

__version__ = "0.1.0"
