"""Tabular MDP solvers, robustness audits, and learning experiments."""

from mdpkit._core import (
    Model,
    arp_identity_max_error,
    assumptions_hold,
    audit_average,
    audit_discounted,
    evaluate_average,
    evaluate_discounted,
    exploration_budget,
    explore_exploit,
    frobenius_number,
    fw_hitting_probability,
    generate_model,
    kernel_ratio_distance,
    kernel_tv_distance,
    mertens_neyman_sweep,
    perturb,
    q_learning,
    reward_tv_distance,
    solve_average,
    solve_discounted,
    tracol_constants,
)
from mdpkit._core import __version__

__all__ = [
    "Model",
    "arp_identity_max_error",
    "assumptions_hold",
    "audit_average",
    "audit_discounted",
    "evaluate_average",
    "evaluate_discounted",
    "exploration_budget",
    "explore_exploit",
    "frobenius_number",
    "fw_hitting_probability",
    "generate_model",
    "kernel_ratio_distance",
    "kernel_tv_distance",
    "mertens_neyman_sweep",
    "perturb",
    "q_learning",
    "reward_tv_distance",
    "solve_average",
    "solve_discounted",
    "tracol_constants",
    "__version__",
]
