# lqr_oracle.py
#
# Sanity check of the actor-critic on the one problem with a closed form:
# x_dot = a x + b u with cost x^2 + u^2. The optimal value is P x^2 where P
# solves the scalar Riccati equation, and with the single feature x^2 both
# the critic and actor weights should settle on P.

import numpy as np

from bastion import load_preset, run_scenario
from bastion.sim import solve_scalar_are

cfg = load_preset("lqr_oracle.json")
a, b = cfg.plant["a"], cfg.plant["b"]
P = solve_scalar_are(a, b, cfg.Q[0][0], cfg.R[0][0])
print(f"plant x' = {a:g} x + {b:g} u, Riccati value P* = {P:.8f}")

res = run_scenario(cfg)
log = res.log
print("\n   t      Wc          Wa")
for tk in (0.0, 1.0, 2.0, 5.0, 10.0, 15.0, 20.0):
    i = int(np.argmin(np.abs(log.t - tk)))
    print(f"{log.t[i]:5.1f}  {log.column('wc1')[i]:.6f}  {log.column('wa1')[i]:.6f}")

wc, wa = res.summary["Wc_final"][0], res.summary["Wa_final"][0]
print(f"\nrelative error: critic {abs(wc - P) / P:.3%}, actor {abs(wa - P) / P:.3%}")
