"""Dissipativity and cyclo-dissipativity on finite abstractions.

Storage functions (available storage, required supply and their ground-state
constrained variants) are computed as shortest-walk values on a transition
graph obtained by gridding the state space.
"""

from .abstraction import (Grid, NodeMask, TransitionGraph, build_graph, controllable_set,
                          default_step, reachable_set, step)
from .model import (CandidateStorage, SupplyRate, SystemModel, eval_output, eval_supply,
                    load_model)
from .registry import ModelRegistryEntry, registry
from .simulate import Trajectory, replay_certificate, simulate
from .storage import (Certificate, Direction, Kind, StorageField, Verdict, available_storage,
                      constrained_available, constrained_required, required_supply,
                      shortest_walks, verdict)

__version__ = "0.1.0"

__all__ = [
    "Grid", "NodeMask", "TransitionGraph", "build_graph", "controllable_set", "default_step",
    "reachable_set", "step", "CandidateStorage", "SupplyRate", "SystemModel", "eval_output",
    "eval_supply", "load_model", "ModelRegistryEntry", "registry", "Trajectory",
    "replay_certificate", "simulate", "Certificate", "Direction", "Kind", "StorageField",
    "Verdict", "available_storage", "constrained_available", "constrained_required",
    "required_supply", "shortest_walks", "verdict",
]
