"""Transmission-parameter sweeps: Robin vs Order-2 conditions.

The free coefficients of the transmission operators control the
contraction of the waveform iteration.  Sweeping them on the homogeneous
error equation (zero data, seeded random interface guess) counts
iterations to a target residual: the Robin count is not monotone in p
(there is an interior optimum), and the best Order-2 pair beats the best
Robin parameter decisively.
"""

from oswr.analysis import sweep_parameters
from oswr.problem import parse_config

cfg = parse_config("""
[domain]
box = 0 1 0 2
T = 0.5
tolerance = 1e-8
max_iterations = 200
initial_guess = zero
u0 = "0"
f = "0"

[subdomain]
id = 1
box = 0 0.5 0 2
nu = "0.2"
bx = "0.5"
by = "0"
c = "0.5"
nx = 4
ny = 16
nt = 16
degree = 1

[subdomain]
id = 2
box = 0.5 1 0 2
nu = "0.05"
bx = "0.5"
by = "0"
c = "0.5"
nx = 4
ny = 16
nt = 16
degree = 1

[transmission]
from = 1
to = 2
p = 1.0
r = "0"
s = 0.05

[transmission]
from = 2
to = 1
p = 1.0
r = "0"
s = 0.2
""")

print("Robin sweep (q = 0), iterations to residual 1e-6:")
robin = sweep_parameters(cfg, [0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0], [0.0],
                         1e-6, mode="error", seed=0, budget=150)
for i, row in enumerate(robin.rows):
    mark = "  <-- best" if i == robin.best else ""
    print(f"  p = {row['p']:4.1f}: {row['iterations']:3d}"
          f"{'' if row['converged'] else ' (saturated)'}{mark}")

print("\nOrder-2 sweep, iterations to residual 1e-6:")
order2 = sweep_parameters(cfg, [0.5, 1.0, 2.0], [0.02, 0.05, 0.1],
                          1e-6, mode="error", seed=0, budget=150)
for i, row in enumerate(order2.rows):
    mark = "  <-- best" if i == order2.best else ""
    print(f"  p = {row['p']:4.1f}, q = {row['q']:5.2f}: {row['iterations']:3d}"
          f"{'' if row['converged'] else ' (saturated)'}{mark}")

best_r = min(r["iterations"] for r in robin.rows if r["converged"])
best_o = min(r["iterations"] for r in order2.rows if r["converged"])
print(f"\nbest Robin: {best_r} iterations; best Order-2: {best_o} iterations")
