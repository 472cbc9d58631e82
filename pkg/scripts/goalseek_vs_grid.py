#!/usr/bin/env python3
"""How close does seeded Bayesian optimization get to an exhaustive grid?

Sweeps evaluation budgets on a 2-driver linear problem whose 21x21 grid
optimum is known, reporting the worst KPI gap over seeds at each budget.
Run: python scripts/goalseek_vs_grid.py
"""

import math
import time

import numpy as np

from whatif import make_frame, parse_csv, train
from whatif.goalseek import Constraint, GoalSpec, objective_eval, optimize_goal

BUDGETS = (15, 30, 60, 120)
SEEDS = range(8)
GRID_STEPS = 21


def build_problem():
    rng = np.random.default_rng(42)
    X = rng.uniform(0.0, 10.0, size=(300, 2))
    y = 50.0 + 3.0 * X[:, 0] - 2.0 * X[:, 1]
    lines = ["x1,x2,y"] + [
        ",".join(repr(float(v)) for v in row) for row in np.column_stack([X, y])
    ]
    frame = make_frame(parse_csv("\n".join(lines) + "\n"), "y")
    return frame, train(frame, seed=0)


def main() -> None:
    frame, model = build_problem()
    rows = frame.driver_matrix()
    constraints = {
        "x1": Constraint("absolute", -5.0, 5.0),
        "x2": Constraint("absolute", -5.0, 5.0),
    }
    probe = GoalSpec(objective="maximize", constraints=constraints, seed=0)

    grid_best = -math.inf
    for a in np.linspace(-5, 5, GRID_STEPS):
        for b in np.linspace(-5, 5, GRID_STEPS):
            grid_best = max(
                grid_best, objective_eval(model, rows, frame, np.array([a, b]), probe)
            )
    print(f"grid optimum over {GRID_STEPS}x{GRID_STEPS} points: {grid_best:.4f}\n")
    print(f"{'budget':>7} {'worst gap':>10} {'mean gap':>9} {'sec/run':>8}")

    for budget in BUDGETS:
        gaps = []
        elapsed = 0.0
        for seed in SEEDS:
            spec = GoalSpec(
                objective="maximize", constraints=constraints,
                budget=budget, n_init=min(10, budget - 1), seed=seed,
            )
            started = time.time()
            result = optimize_goal(model, rows, frame, spec)
            elapsed += time.time() - started
            gaps.append(grid_best - result.best_kpi)
        print(f"{budget:>7} {max(gaps):>10.4f} {np.mean(gaps):>9.4f} "
              f"{elapsed / len(list(SEEDS)):>8.3f}")


if __name__ == "__main__":
    main()
