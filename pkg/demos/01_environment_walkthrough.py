"""Walk through the multi-cell slicing environment step by step.

Shows how demand follows the sinusoidal traffic masks, how the simplex
partition action maps to per-slice loads and delays, and how a congested
neighbor drags down a cell's spectral efficiency one step later.
"""

import numpy as np

from slicetl import env
from slicetl.env import baseline_action, equal_partition
from slicetl.scenario import smoke_scenario

scenario = smoke_scenario()
n = scenario.n_slices
print(f"scenario: {scenario.n_cells} cells, {n} slices per cell")
for cell in scenario.cells:
    targets = [(r.throughput_target, r.delay_target) for r in cell.requirements]
    print(f"  cell {cell.cell_id}: targets (Mbit/s, ms) = {targets}")

# --- a few steps under the equal split -----------------------------------
state = env.init_network(scenario, seed=0)
equal = equal_partition(n)
print("\nequal split, first 5 steps (per-cell reward = worst slice):")
for t in range(5):
    state, rewards = env.step(state, [equal] * scenario.n_cells, scenario)
    loads = [round(state.total_load(i), 2) for i in range(scenario.n_cells)]
    print(f"  t={state.step}: rewards {np.round(rewards, 3)}, total loads {loads}")

# --- the traffic-aware proportional baseline ------------------------------
print("\ndemand-proportional baseline over 200 steps:")
state = env.init_network(scenario, seed=0)
totals = np.zeros(scenario.n_cells)
for _ in range(200):
    demands = env.peek_demands(state, scenario)
    actions = [baseline_action(demands[c.cell_id]) for c in scenario.cells]
    state, rewards = env.step(state, actions, scenario)
    totals += rewards
print(f"  mean reward per cell: {np.round(totals / 200, 3)}")

# --- spectral efficiency falls with the neighbors' previous-step load -----
print("\nspectral efficiency of cell 1 vs neighbor load (saturates at 1):")
cell = scenario.cells[0]
for load in (0.0, 0.25, 0.5, 1.0, 2.5):
    e = env.compute_efficiency(cell, [load] * len(cell.neighbor_ids))
    print(f"  both neighbors at total load {load:>4}: "
          f"e = {e:.3f} bit/s/Hz -> cell capacity {cell.bandwidth * e:.1f} Mbit/s")
