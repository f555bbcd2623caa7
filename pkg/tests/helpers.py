"""Small scenario dictionaries shared by simulation, metrics and CLI tests."""

from __future__ import annotations

import copy

BASE = {
    "schema_version": 1,
    "name": "tiny",
    "dt": 0.1,
    "agents": [
        {"id": "a", "start": [0.0, 0.0], "goal": [1.5, 0.0], "radius": 0.3},
    ],
    "predictor": {"kind": "constant_velocity", "cov": [[0.1, 0.0], [0.0, 0.1]]},
    "planner": {"horizon": 10, "n_samples": 64, "n_col": 8},
    "cost": {"w_goal": 0.5, "w_terminal": 2.0},
    "predictability": {"lambdas": [0.0, 1.0], "gamma": 0.6},
    "termination": {"t_max": 80},
    "seeds": [1, 2],
}


def tiny(**changes) -> dict:
    d = copy.deepcopy(BASE)
    d.update(copy.deepcopy(changes))
    return d


def crossing(**changes) -> dict:
    """Two agents swapping along a line; short enough to run in a test."""
    agents = [
        {"id": "left", "start": [-1.5, 0.0], "speed": 0.5, "goal": [1.5, 0.2], "radius": 0.3},
        {"id": "right", "start": [1.5, 0.0], "heading": 3.14159, "speed": 0.5, "goal": [-1.5, -0.2], "radius": 0.3},
    ]
    return tiny(agents=agents, **changes)
