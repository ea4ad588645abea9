"""Sparse vicious-node adversarial attacks on GNN link prediction."""

from .attack import AttackConfig, AttackResult, run_attack
from .baselines import BaselineConfig, aiga_attack, rand_attack
from .graph import AugmentedGraph, DirectedGraph, augment
from .model import LinkPredictor, TrainConfig, train

__all__ = ["AttackConfig", "AttackResult", "AugmentedGraph", "BaselineConfig", "DirectedGraph",
           "LinkPredictor", "TrainConfig", "aiga_attack", "augment", "rand_attack", "run_attack", "train"]
__version__ = "0.1.0"
