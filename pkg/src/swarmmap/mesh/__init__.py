"""Tuple mesh: keys and hashes, the wire format and the per-agent node."""

from .node import MeshNode
from .tuples import MeshTuple, TupleValue, node_id, tuple_hash

__all__ = ["MeshNode", "MeshTuple", "TupleValue", "node_id", "tuple_hash"]
