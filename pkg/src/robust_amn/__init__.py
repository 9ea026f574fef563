"""Robust associative Markov networks under structural attacks."""

__version__ = "0.1.0"

from .amn import Inference, Weights, accuracy, hamming_loss, map_inference, score
from .attack import (
    AttackerObjectiveTerms,
    FractionalAttack,
    brute_force_attack,
    build_attacker_lp,
    generate_attack,
    heuristic_attack,
    rround,
    semi_rround,
    solve_attacker_lp,
)
from .graph import (
    AttackBudget,
    AttackPlan,
    FeatureGraph,
    Labeling,
    apply_attack,
    build_knn_graph,
    load_dataset,
    save_dataset,
    split_train_test,
)
from .kernels import BACKEND
from .learn import build_robust_qp, cross_validate, dualize_parametric_lp, theorem2_bound, train

__all__ = [
    "AttackBudget", "AttackPlan", "AttackerObjectiveTerms", "BACKEND", "FeatureGraph", "FractionalAttack",
    "Inference", "Labeling", "Weights", "accuracy", "apply_attack", "brute_force_attack", "build_attacker_lp",
    "build_knn_graph", "build_robust_qp", "cross_validate", "dualize_parametric_lp", "generate_attack",
    "hamming_loss", "heuristic_attack", "load_dataset", "map_inference", "rround", "save_dataset", "score",
    "semi_rround", "solve_attacker_lp", "split_train_test", "theorem2_bound", "train",
]
