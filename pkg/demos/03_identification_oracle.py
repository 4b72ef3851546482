"""Checking the identification result by brute force on small discrete laws.

On a finite law every functional is a finite sum, so the observed-data
formula can be compared with the causal direct effect exactly.
"""

from pathlib import Path

import numpy as np

from natdirect.oracle import (
    cde_average,
    discretize_confounding,
    identified_functional,
    load_law,
    random_law,
    true_nde,
)

rng = np.random.default_rng(0)
law = random_law(rng)
print(f"random law: identified {identified_functional(law):.12f}  causal {true_nde(law):.12f}")
print(f"  same number as an average of controlled effects: {cde_average(law):.12f}")

# give V a direct path to Y and the formula stops matching
bad = random_law(rng, v_to_y=0.5)
print(f"V -> Y law: identified {identified_functional(bad):.5f}  causal {true_nde(bad):.5f}")

# the continuous confounding study on quadrature grids
for gamma in (0.0, 3.0):
    grid_law = discretize_confounding(gamma)
    print(f"discretized study gamma={gamma:g}: NDE {identified_functional(grid_law):.6f}")

path = Path(__file__).with_name("law_example.toml")
example = load_law(path)
print(f"\n{path.name}: identified {identified_functional(example):.6f}, "
      f"causal {true_nde(example):.6f}, V -> Y path: {example.v_to_y}")
