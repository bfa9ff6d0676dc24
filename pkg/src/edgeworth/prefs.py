"""Closed-form demand systems for Cobb-Douglas and CES preferences.

Everything here is a pure function of immutable inputs.  The two serialized
families are the log Cobb-Douglas ``u(c) = sum_i a_i ln c_i`` and the CES
``u(c) = (sum_i a_i c_i^s)^(1/s)`` with ``s`` strictly inside (0, 1); both are
attractive and sharp, which the trade and engine modules rely on.

:class:`MultiplicativeCobbDouglas` (``u(c) = prod_i c_i^b_i``) is the
monotone-transform companion of the log family.  It shares the same demand
map and is exposed so monotone-transform invariance of the sharpness and
attractiveness predicates can be exercised; it is not part of the scenario
serialization format.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import NDArray

from .errors import (
    DomainDegeneracyError,
    SpecificationError,
    UnreachableUtilityError,
)

FloatArray = NDArray[np.float64]

# Coordinates below this are treated as numerically degenerate rather than
# silently propagated as subnormals.
POSITIVE_FLOOR = 1e-300

_WEIGHT_SUM_TOL = 1e-12


class Family(str, enum.Enum):
    """Supported utility families."""

    COBB_DOUGLAS_LOG = "cobb_douglas_log"
    CES = "ces"


def _read_only(a: FloatArray) -> FloatArray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class UtilitySpec:
    """A household's preference: family, weight vector, CES elasticity.

    Weights must be strictly positive and sum to one.  ``elasticity`` is the
    CES exponent, required to lie strictly inside (0, 1) and present only for
    the CES family.
    """

    family: Family
    weights: FloatArray
    elasticity: float | None = None

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 2:
            raise SpecificationError("weights must be a vector of length >= 2")
        if not np.all(w > 0.0):
            raise SpecificationError("weights must be strictly positive")
        if abs(float(w.sum()) - 1.0) > _WEIGHT_SUM_TOL:
            raise SpecificationError("weights must sum to 1 within 1e-12")
        object.__setattr__(self, "weights", _read_only(w))
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.CES:
            if self.elasticity is None:
                raise SpecificationError("CES requires an elasticity")
            if not 0.0 < float(self.elasticity) < 1.0:
                raise SpecificationError("CES elasticity must lie strictly in (0, 1)")
            object.__setattr__(self, "elasticity", float(self.elasticity))
        elif self.elasticity is not None:
            raise SpecificationError("elasticity is only valid for the CES family")

    @property
    def dimension(self) -> int:
        return int(self.weights.size)

    @classmethod
    def cobb_douglas_log(cls, weights) -> "UtilitySpec":
        return cls(Family.COBB_DOUGLAS_LOG, np.asarray(weights, dtype=np.float64))

    @classmethod
    def ces(cls, weights, elasticity: float) -> "UtilitySpec":
        return cls(Family.CES, np.asarray(weights, dtype=np.float64), elasticity)

    def to_dict(self) -> dict:
        d: dict = {"family": self.family.value, "weights": self.weights.tolist()}
        if self.family is Family.CES:
            d["sigma"] = self.elasticity
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UtilitySpec":
        known = {"family", "weights", "sigma"}
        unknown = set(d) - known
        if unknown:
            raise SpecificationError(f"unknown utility keys: {sorted(unknown)}")
        try:
            family = Family(d["family"])
        except (KeyError, ValueError) as exc:
            raise SpecificationError(f"bad utility family: {d.get('family')!r}") from exc
        weights = np.asarray(d.get("weights", ()), dtype=np.float64)
        if family is Family.CES:
            if "sigma" not in d:
                raise SpecificationError("CES utility requires 'sigma'")
            return cls(family, weights, float(d["sigma"]))
        if "sigma" in d:
            raise SpecificationError("'sigma' is only valid for the CES family")
        return cls(family, weights)


@dataclass(frozen=True, eq=False)
class MultiplicativeCobbDouglas:
    """``u(c) = prod_i c_i^b_i`` with arbitrary positive exponents ``b``.

    This is ``exp(B * u_log)`` for the log family with weights ``b / B``,
    ``B = sum(b)``: the same preferences, hence the same demand system, under
    a strictly increasing transform of the utility level.
    """

    exponents: FloatArray

    def __post_init__(self) -> None:
        b = np.asarray(self.exponents, dtype=np.float64)
        if b.ndim != 1 or b.size < 2:
            raise SpecificationError("exponents must be a vector of length >= 2")
        if not np.all(b > 0.0):
            raise SpecificationError("exponents must be strictly positive")
        object.__setattr__(self, "exponents", _read_only(b))

    @property
    def dimension(self) -> int:
        return int(self.exponents.size)

    @property
    def weights(self) -> FloatArray:
        """Normalized exponents; the demand system sees only these."""
        return self.exponents / float(self.exponents.sum())

    @classmethod
    def from_log_spec(cls, spec: UtilitySpec) -> "MultiplicativeCobbDouglas":
        if spec.family is not Family.COBB_DOUGLAS_LOG:
            raise SpecificationError("only the log Cobb-Douglas family has a multiplicative twin")
        return cls(np.array(spec.weights))


UtilityLike = Union[UtilitySpec, MultiplicativeCobbDouglas]


def as_bundle(values, dimension: int | None = None) -> FloatArray:
    """Validate a consumption bundle: strictly positive vector of goods."""
    c = np.asarray(values, dtype=np.float64)
    if c.ndim != 1 or c.size < 2:
        raise SpecificationError("a bundle must be a vector of length >= 2")
    if dimension is not None and c.size != dimension:
        raise SpecificationError(f"expected {dimension} goods, got {c.size}")
    if not np.all(np.isfinite(c)):
        raise SpecificationError("bundle coordinates must be finite")
    if not np.all(c > 0.0):
        raise SpecificationError("bundle coordinates must be strictly positive")
    if np.any(c < POSITIVE_FLOOR):
        raise DomainDegeneracyError("bundle coordinate below 1e-300")
    return c


def as_price(values, dimension: int | None = None) -> FloatArray:
    """Validate a wealth-normalized price vector (same constraints as bundles)."""
    try:
        return as_bundle(values, dimension)
    except SpecificationError as exc:
        raise SpecificationError(str(exc).replace("bundle", "price")) from None


def _guard(values: FloatArray, what: str) -> FloatArray:
    if np.any(np.abs(values) < POSITIVE_FLOOR) or not np.all(np.isfinite(values)):
        raise DomainDegeneracyError(f"{what} degenerated below the positive floor")
    return values


def _check_dim(u: UtilityLike, v: FloatArray) -> None:
    if v.size != u.dimension:
        raise SpecificationError(
            f"dimension mismatch: utility has {u.dimension} goods, vector has {v.size}"
        )


def _eta(u: UtilitySpec) -> float:
    return 1.0 / (1.0 - u.elasticity)


def utility(u: UtilityLike, c) -> float:
    """Utility level at bundle ``c`` (may be negative for the log family)."""
    c = as_bundle(c)
    _check_dim(u, c)
    if isinstance(u, MultiplicativeCobbDouglas):
        return float(np.prod(c ** u.exponents))
    if u.family is Family.COBB_DOUGLAS_LOG:
        return float(u.weights @ np.log(c))
    s = float(u.weights @ c**u.elasticity)
    return s ** (1.0 / u.elasticity)


def gradient(u: UtilityLike, c) -> FloatArray:
    """Analytic gradient of the utility; strictly positive coordinatewise."""
    c = as_bundle(c)
    _check_dim(u, c)
    if isinstance(u, MultiplicativeCobbDouglas):
        return _guard(utility(u, c) * u.exponents / c, "gradient")
    if u.family is Family.COBB_DOUGLAS_LOG:
        return _guard(u.weights / c, "gradient")
    sig = u.elasticity
    s = float(u.weights @ c**sig)
    return _guard(s ** (1.0 / sig - 1.0) * u.weights * c ** (sig - 1.0), "gradient")


def hessian(u: UtilityLike, c) -> FloatArray:
    """Analytic Hessian of the utility (symmetric, negative semidefinite)."""
    c = as_bundle(c)
    _check_dim(u, c)
    if isinstance(u, MultiplicativeCobbDouglas):
        b = u.exponents
        lvl = utility(u, c)
        rates = b / c
        return lvl * (np.outer(rates, rates) - np.diag(b / c**2))
    if u.family is Family.COBB_DOUGLAS_LOG:
        return np.diag(-u.weights / c**2)
    sig = u.elasticity
    s = float(u.weights @ c**sig)
    theta = u.weights * c ** (sig - 1.0)
    return (1.0 - sig) * (
        s ** (1.0 / sig - 2.0) * np.outer(theta, theta)
        - s ** (1.0 / sig - 1.0) * np.diag(u.weights * c ** (sig - 2.0))
    )


def normalized_demand(u: UtilityLike, p) -> FloatArray:
    """Walrasian demand at unit wealth; satisfies ``p @ x == 1``."""
    p = as_price(p)
    _check_dim(u, p)
    if isinstance(u, MultiplicativeCobbDouglas):
        return _guard(u.weights / p, "demand")
    if u.family is Family.COBB_DOUGLAS_LOG:
        return _guard(u.weights / p, "demand")
    eta = _eta(u)
    w_eta = u.weights**eta
    g = w_eta * p**-eta
    return _guard(g / float(w_eta @ p ** (1.0 - eta)), "demand")


def normalized_demand_jacobian(u: UtilityLike, p) -> FloatArray:
    """Analytic Jacobian of :func:`normalized_demand` (row i = good i)."""
    p = as_price(p)
    _check_dim(u, p)
    if isinstance(u, MultiplicativeCobbDouglas) or u.family is Family.COBB_DOUGLAS_LOG:
        w = u.weights
        return np.diag(-w / p**2)
    eta = _eta(u)
    x = normalized_demand(u, p)
    return np.diag(-eta * x / p) - (1.0 - eta) * np.outer(x, x)


def inverse_normalized_demand(u: UtilityLike, c) -> FloatArray:
    """Prices leading the consumer to pick ``c`` at unit wealth: grad u / (grad u . c)."""
    c = as_bundle(c)
    g = gradient(u, c)
    return _guard(g / float(g @ c), "inverse demand")


def substitution_rates(u: UtilityLike, c) -> FloatArray:
    """Marginal substitution rates of the first L-1 goods against good L."""
    g = gradient(u, c)
    return _guard(g[:-1] / g[-1], "substitution rates")


def utility_in_range(u: UtilityLike, level: float) -> bool:
    """Whether ``level`` is attainable on the interior consumption set."""
    if isinstance(u, UtilitySpec) and u.family is Family.COBB_DOUGLAS_LOG:
        return bool(np.isfinite(level))
    return bool(np.isfinite(level)) and level > 0.0


def hicksian_demand(u: UtilityLike, p, target_u: float) -> FloatArray:
    """Cheapest bundle reaching utility ``target_u`` at prices ``p``."""
    p = as_price(p)
    _check_dim(u, p)
    if not utility_in_range(u, target_u):
        raise UnreachableUtilityError(f"utility level {target_u!r} is outside the family's range")
    if isinstance(u, MultiplicativeCobbDouglas):
        b = u.exponents
        total = float(b.sum())
        e = target_u ** (1.0 / total) * float(np.prod((total * p / b) ** (b / total)))
        return _guard(e * u.weights / p, "hicksian demand")
    if u.family is Family.COBB_DOUGLAS_LOG:
        w = u.weights
        e = math.exp(target_u - float(w @ np.log(w / p)))
        return _guard(e * w / p, "hicksian demand")
    eta = _eta(u)
    w_eta = u.weights**eta
    a = float(w_eta @ p ** (1.0 - eta))
    e = target_u * a ** (1.0 / (1.0 - eta))
    return _guard(e * w_eta * p**-eta / a, "hicksian demand")


def expenditure(u: UtilityLike, p, target_u: float) -> float:
    """Minimum cost of reaching ``target_u`` at prices ``p``: p . h(p, u)."""
    p = as_price(p)
    return float(p @ hicksian_demand(u, p, target_u))


def indirect_utility_normalized(u: UtilityLike, p) -> float:
    """Utility of the normalized demand, u(x_n(p))."""
    return utility(u, normalized_demand(u, p))


def lambda_n(u: UtilityLike, p) -> float:
    """Marginal utility of wealth at unit wealth: grad u(x_n(p)) . x_n(p)."""
    x = normalized_demand(u, p)
    return float(gradient(u, x) @ x)


def check_sharp(u: UtilityLike, y, p) -> bool:
    """Sharpness at (y, p): overpriced goods are offered, underpriced demanded.

    For each good i, when p_i strictly exceeds every cross-rate-implied price
    ``p_j * MRS_ij(y)`` the trade direction's i-th coordinate must be
    negative; when it falls strictly below all of them, positive.  Vacuously
    true when no antecedent triggers.
    """
    y = as_bundle(y)
    p = as_price(p)
    _check_dim(u, y)
    _check_dim(u, p)
    inv = inverse_normalized_demand(u, y)
    delta = normalized_demand(u, p / float(p @ y)) - y
    n = y.size
    for i in range(n):
        implied = np.delete(p * inv[i] / inv, i)
        if p[i] > implied.max() and not delta[i] < 0.0:
            return False
        if p[i] < implied.min() and not delta[i] > 0.0:
            return False
    return True


def check_attractive(u: UtilityLike, y, p, i: int, j: int, tol: float = 1e-10) -> bool:
    """Attractiveness bilinear form at (y, p) for the goods pair (i, j).

    The form couples the gap between MRS_ij(y) and the price ratio to the
    Hessian action on the trade direction; attractive preferences keep it
    non-positive.  ``tol`` is absolute slack so that vacuous zeros are not
    flipped by rounding.
    """
    y = as_bundle(y)
    p = as_price(p)
    _check_dim(u, y)
    _check_dim(u, p)
    if i == j:
        raise SpecificationError("goods indices must differ")
    inv = inverse_normalized_demand(u, y)
    gap = inv[i] / inv[j] - p[i] / p[j]
    row = np.zeros(y.size)
    row[i] = inv[j]
    row[j] = -inv[i]
    delta = normalized_demand(u, p / float(p @ y)) - y
    form = gap * float(row @ hessian(u, y) @ delta)
    return form <= tol
