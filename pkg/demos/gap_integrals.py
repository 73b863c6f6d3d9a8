"""The three regimes of the model gap integral.

I(eps) = int over [-r, r]^(n-1) of 1 / (eps + sum |x_i|^(2 alpha_i)) behaves
like eps^(gamma - 1), log(1/eps) or O(1) depending on gamma = sum 1/(2 alpha_i).
"""
import numpy as np

from narrowgap.capacity import reduction_sandwich, verify_claim

eps = np.logspace(-8, -2, 7)
for orders, n in [((1,), 2), ((1, 1), 3), ((1, 2), 3), ((2,), 2)]:
    bound = verify_claim(orders, 1.0, n, eps, factor=5.0, tol=1e-10)
    sw = reduction_sandwich(orders, 1.0, n, 1e-6, tol=1e-10)
    print(f"orders {orders} n={n}: gamma={bound.gamma:g} regime {bound.regime.value}")
    for e, ratio in zip(bound.eps, bound.ratios):
        print(f"   eps={e:.0e}  I / predicted = {ratio:.4f}")
    print(f"   window {max(bound.ratios) / min(bound.ratios):.3f}; sandwich at 1e-6 "
          f"{sw.lower:.4g} <= {sw.value:.4g} <= {sw.upper:.4g}")
