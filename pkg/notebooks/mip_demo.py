"""Build a small knapsack MIP, solve it with the embedded solver and export MPS.

Run with ``python notebooks/mip_demo.py``.
"""
from pnn.mip import MipModel, SolverConfig, brute_force_oracle, solve, write_mps

values = [6.0, 5.0, 8.0, 9.0, 6.0, 7.0, 3.0]
weights = [2.0, 3.0, 6.0, 7.0, 5.0, 9.0, 4.0]

m = MipModel("knapsack")
x = [m.add_binary(f"x{i}") for i in range(len(values))]
slack = m.add_continuous("partial", 0.0, 1.0)
m.add_constraint([(w, v) for w, v in zip(weights, x)] + [(4.0, slack)], "L", 15.0, name="capacity")
m.set_objective([(v, xi) for v, xi in zip(values, x)] + [(2.5, slack)], "max")

res = solve(m, SolverConfig(time_limit_s=10))
print("status", res.status.value, "objective", res.objective, "nodes", res.nodes_explored)
print("chosen", [i for i, v in enumerate(res.incumbent[:len(x)]) if v > 0.5])
print("enumeration agrees:", abs(brute_force_oracle(m).objective - res.objective) < 1e-9)
print(write_mps(m))
