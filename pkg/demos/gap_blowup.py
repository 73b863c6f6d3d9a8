"""Gradient blow-up between two disks at distance eps.

Runs a short sweep with the searched boundary data and fits exponents.  The
gap-local rate |C1 - C2| / eps follows eps^(-1/2); the global sup of |grad u|
is still dominated by the boundary data near the outer circle at these eps,
which is why the two slopes differ.  Takes about two minutes on one core.
"""
import sys

from narrowgap import find_boundary_data, fit_exponent, sweep

name = sys.argv[1] if len(sys.argv) > 1 else "two_disks_2d"
eps = [0.2, 0.1, 0.05, 0.02]

bd = find_boundary_data(name, eps[0], m=8, seed=0)
print(f"{name}: searched bump at s={bd.center:.3f}, Q={bd.Q:.4g} ({bd.case})")
table = sweep(name, eps, bd.spec)
for row in table.rows:
    r = row.report
    print(f"eps={row.epsilon:<7g} sup|grad u|={r.sup_grad_u:8.4f}  "
          f"|C1-C2|/eps={abs(r.delta_C) / row.epsilon:8.4f}  E(v1)={r.energy_v1:8.4f}  Q={r.Q_eps:.4g}")
for q in ("sup_grad_u", "energy_v1"):
    print(f"{q:>12} exponent {fit_exponent(table, q).exponent:+.3f}")
eps_arr = table.epsilons
jump = [abs(row.report.delta_C) / row.epsilon for row in table.rows]
print(f"{'|C1-C2|/eps':>12} exponent {fit_exponent((eps_arr, jump), None).exponent:+.3f}")
