"""Parallel-plate capacitor: the one configuration with a closed-form answer.

Between flat plates at distance eps the potential is linear, so the field is
|C1 - C2| / eps everywhere in the gap and the gap energy of v1 is L / eps.
"""
import numpy as np

from narrowgap import build_grid, functionals, preset, solve_dirichlet

for eps in (0.2, 0.1, 0.05, 0.02):
    config = preset("capacitor_strip_2d", eps)
    grid = build_grid(config, eps / 8)
    top = eps / 2 + 0.25 + 0.5
    # slope chosen so the plates settle at a unit potential jump
    slope = (2 * 0.5 / eps + 1) / (2 * top)
    r = functionals(config, grid, {"kind": "affine", "coeffs": [0, 0, slope]}, 1e-12)
    v1 = solve_dirichlet(grid, {"omega": 0.0, "d1": 1.0, "d2": 0.0}, 1e-12)
    y = grid.points()[:, 1]
    gap = np.abs(y) < eps / 2
    err = np.max(np.abs(v1.values[gap] - (0.5 - y[gap] / eps)))
    print(f"eps={eps:<5g} sup|grad u|={r.sup_grad_u:9.4f}  |C1-C2|/eps={abs(r.delta_C) / eps:9.4f}"
          f"  E(v1)={r.energy_v1:9.4f}  1/eps+2={1 / eps + 2:9.4f}  max linear err={err:.1e}")
