"""Gap integrals ``I(eps) = int_{Q_r} dx' / (eps + sum_j x_j**(2 alpha_j))``.

Includes the adaptive evaluation, a Monte Carlo oracle, the one-variable
radial reduction with its angular constant, and the three-regime bounds.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import INFINITY, VanishingOrders, gamma_of
from .quadrature import Budget, QuadratureError, adaptive, geometric_breaks

__all__ = [
    "GapIntegralSpec", "Regime", "RegimeBound", "Sandwich", "QuadratureError",
    "gap_integral", "gap_integral_mc", "radial_integral", "angular_constant",
    "reduction_sandwich", "verify_claim", "regime_of", "predicted_rate",
]


@dataclass(frozen=True)
class GapIntegralSpec:
    orders: VanishingOrders
    r: float
    n: int
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "orders", VanishingOrders(self.orders))
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if len(self.orders) != self.n - 1:
            raise ValueError(f"need {self.n - 1} orders for n={self.n}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def ell(self):
        return len(self.orders.finite)

    @property
    def gamma(self):
        return gamma_of(self.orders)

    @property
    def beta(self):
        return 2 * self.gamma - 1

    @property
    def R0(self):
        return min(self.r ** a for a in self.orders.finite)

    @property
    def R1(self):
        return math.sqrt(self.ell) * max(self.r ** a for a in self.orders.finite)


def _orthant(alphas, eps, r, tol, budget):
    """Integral of 1/(eps + sum x_j^(2 a_j)) over [0, r]^len(alphas)."""
    a0 = alphas[0]
    breaks = geometric_breaks(0.0, r, eps ** (0.5 / a0))
    if len(alphas) == 1:
        def fn(x):
            return 1.0 / (eps + (x * x) ** a0)
        return adaptive(fn, breaks, tol, budget)[0]

    rest = alphas[1:]

    def fn(xs):
        return np.array([_orthant(rest, eps + (x * x) ** a0, r, tol / 10, budget)
                         for x in xs])

    return adaptive(fn, breaks, tol, budget)[0]


# finite orders above this make the near-origin peak too anisotropic for the
# adaptive rule to resolve reliably; use INFINITY for flat directions instead
MAX_ORDER = 64.0


def gap_integral(spec: GapIntegralSpec, tol: float = 1e-8,
                 budget: int = 10_000_000) -> float:
    """Adaptive evaluation of I(eps) to relative tolerance ``tol``.

    Uses the even symmetry of the integrand; directions of infinite order
    contribute a factor ``2r`` each.  Finite orders are capped at
    ``MAX_ORDER``.
    """
    if not 0 < tol <= 1e-2:
        raise ValueError("tol must lie in (0, 1e-2]")
    n, r, eps = spec.n, spec.r, spec.epsilon
    finite = sorted(spec.orders.finite)
    if finite and finite[-1] > MAX_ORDER:
        raise ValueError(f"finite order {finite[-1]:g} exceeds the ceiling {MAX_ORDER:g}; "
                         "use 'inf' for a flat direction")
    if not finite:
        return 2.0 ** (n - 1) * r ** (n - 1) / eps
    scale = 2.0 ** (n - 1) * r ** (n - 1 - len(finite))
    return scale * _orthant(finite, eps, r, tol, Budget(budget))


def gap_integral_mc(spec: GapIntegralSpec, samples: int = 1_000_000,
                    seed: int = 0, chunk: int = 1_000_000):
    """Plain Monte Carlo over Q_r. Returns (estimate, standard error)."""
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    rng = np.random.default_rng(seed)
    m = spec.n - 1
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        x = rng.uniform(-spec.r, spec.r, size=(k, m))
        denom = np.full(k, spec.epsilon)
        for j, a in enumerate(spec.orders):
            if a is not INFINITY:
                denom += (x[:, j] ** 2) ** a
        vals = 1.0 / denom
        total += vals.sum()
        total_sq += (vals * vals).sum()
        done += k
    vol = (2.0 * spec.r) ** m
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    return vol * mean, vol * math.sqrt(var / samples)


def _power_head(beta, a, tol):
    """int_0^a v^beta / (1 + v^2) dv for -1 < beta, via t = v^(beta+1)."""
    if a <= 0:
        return 0.0
    p = beta + 1.0
    top = a ** p
    expo = 2.0 / p

    def fn(t):
        return 1.0 / (1.0 + t ** expo)

    return adaptive(fn, geometric_breaks(0.0, top, top * 1e-3), tol)[0] / p


def radial_integral(gamma: float, epsilon: float, R: float,
                    tol: float = 1e-12, closed_form: bool = True) -> float:
    """``int_0^R rho^(2 gamma - 1) / (epsilon + rho^2) d rho``.

    ``closed_form=False`` forces quadrature at ``gamma = 1`` (an independent
    check of the logarithm).
    """
    if not gamma > 0:
        raise ValueError("radial_integral needs gamma > 0")
    if not (epsilon > 0 and R > 0):
        raise ValueError("epsilon and R must be positive")
    if gamma == 1.0 and closed_form:
        return 0.5 * math.log1p(R * R / epsilon)
    beta = 2.0 * gamma - 1.0
    if gamma < 1.0:
        # rho = sqrt(eps) v
        top = R / math.sqrt(epsilon)
        if top <= 1.0:
            head = _power_head(beta, top, tol)
        else:
            head = (_power_head(beta, 1.0, tol) + _power_head(-beta, 1.0, tol)
                    - _power_head(-beta, 1.0 / top, tol))
        return epsilon ** (gamma - 1.0) * head

    def fn(rho):
        return rho ** beta / (epsilon + rho * rho)

    return adaptive(fn, geometric_breaks(0.0, R, math.sqrt(epsilon)), tol)[0]


def _sin_cos_head(a, b, upper, tol):
    """int_0^upper sin^a(phi) cos^b(phi) d phi with the phi^a endpoint removed."""
    p = a + 1.0
    top = upper ** p

    def fn(t):
        phi = t ** (1.0 / p)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(phi > 0, np.sin(phi) / np.where(phi > 0, phi, 1.0), 1.0)
        return ratio ** a * np.cos(phi) ** b / p

    return adaptive(fn, geometric_breaks(0.0, top, top * 1e-3), tol)[0]


def angular_constant(orders, tol: float = 1e-12) -> float:
    """Product of the beta-type angular integrals for the finite orders."""
    finite = VanishingOrders(orders).finite
    ell = len(finite)
    if ell <= 1:
        return 1.0
    total = 1.0
    for q in range(ell - 1):
        a = -1.0 + sum(1.0 / al for al in finite[q + 1:])
        b = -1.0 + 1.0 / finite[q]
        assert a > -1.0 and b > -1.0, "angular exponent must exceed -1"
        quarter = math.pi / 4
        total *= (_sin_cos_head(a, b, quarter, tol)
                  + _sin_cos_head(b, a, quarter, tol))
    return total


class Sandwich(NamedTuple):
    lower: float
    value: float
    upper: float
    holds: bool


def reduction_sandwich(orders, r, n, epsilon, tol=1e-8) -> Sandwich:
    """Bracket I(eps) between the radial integrals over radii R0 and R1."""
    spec = GapIntegralSpec(orders, r, n, epsilon)
    gamma = spec.gamma
    if not gamma > 0:
        raise ValueError("reduction needs gamma > 0 (at least one finite order)")
    finite = spec.orders.finite
    const = (2.0 ** (n - 1) * r ** (n - 1 - spec.ell) / math.prod(finite)
             * angular_constant(finite))
    lower = const * radial_integral(gamma, epsilon, spec.R0)
    upper = const * radial_integral(gamma, epsilon, spec.R1)
    value = gap_integral(spec, tol)
    slack = 10 * tol
    holds = lower <= value * (1 + slack) and value <= upper * (1 + slack)
    return Sandwich(lower, value, upper, holds)


class Regime(enum.Enum):
    GAMMA_GT_1 = "gamma>1"
    GAMMA_EQ_1 = "gamma=1"
    GAMMA_LT_1 = "gamma<1"


def regime_of(gamma: float) -> Regime:
    if math.isclose(gamma, 1.0, rel_tol=1e-12, abs_tol=1e-12):
        return Regime.GAMMA_EQ_1
    return Regime.GAMMA_GT_1 if gamma > 1 else Regime.GAMMA_LT_1


def predicted_rate(gamma: float, epsilon):
    """1, log(1/eps) or eps^(gamma - 1) according to the regime of gamma."""
    eps = np.asarray(epsilon, dtype=float)
    regime = regime_of(gamma)
    if regime is Regime.GAMMA_GT_1:
        out = np.ones_like(eps)
    elif regime is Regime.GAMMA_EQ_1:
        out = np.log(1.0 / eps)
    else:
        out = eps ** (gamma - 1.0)
    return out if out.ndim else float(out)


@dataclass
class RegimeBound:
    regime: Regime
    gamma: float
    eps: list
    ratios: list
    measured_lo: float
    measured_hi: float
    factor: float = 20.0
    values: list = field(default_factory=list)

    def predicted(self, epsilon):
        return predicted_rate(self.gamma, epsilon)

    @property
    def spread(self):
        return self.measured_hi / self.measured_lo

    @property
    def success(self):
        return 0 < self.measured_lo <= self.measured_hi and self.spread <= self.factor


def verify_claim(orders, r, n, eps_list, factor=20.0, tol=1e-8) -> RegimeBound:
    """Ratios I(eps) / predicted(eps) over a sweep spanning >= 3 decades."""
    eps = sorted(float(e) for e in eps_list)
    if not eps or eps[-1] / eps[0] < 1e3 * (1 - 1e-12):
        raise ValueError("eps_list must span at least three decades")
    if eps[0] <= 0 or eps[-1] >= r * r:
        raise ValueError("every epsilon must lie in (0, r^2)")
    gamma = gamma_of(orders)
    values = [gap_integral(GapIntegralSpec(orders, r, n, e), tol) for e in eps]
    ratios = [v / predicted_rate(gamma, e) for v, e in zip(values, eps)]
    return RegimeBound(regime_of(gamma), gamma, eps, ratios, min(ratios),
                       max(ratios), factor, values)
