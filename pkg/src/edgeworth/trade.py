"""Linear trade paths, speed polytopes, trade-compatible prices, box sets.

An allocation admits trade at common prices ``p`` when some vector of
relative speeds in the unit cube cancels the aggregate of the households'
linear trade directions while moving at least one household.  Membership is
decided by a small dense LP; the box set built from extreme marginal
substitution rates gives the cheap superset used for price draws.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import _hitrun, _simplex, prefs
from .errors import SamplingError, SpecificationError
from .prefs import UtilityLike, as_price

FloatArray = NDArray[np.float64]

#: Relative agreement of substitution rates below which a state counts as
#: Pareto optimal; separates converged states from one-ulp noise.
PARETO_TOL = 1e-8

#: Households whose trade direction is shorter than this are treated as
#: non-trading at the current prices.
DEGENERATE_DIRECTION = 1e-12

_LP_EQ_TOL = 1e-11
_LP_DECISION = 1e-9


class SpeedPrior(str, enum.Enum):
    """Priors over relative trade speeds supported by the engine."""

    UNIFORM_CUBE = "uniform_cube"
    MAX_SPEED = "max_speed"


@dataclass(frozen=True)
class Household:
    spec: UtilityLike
    label: str


@dataclass(frozen=True, eq=False)
class Economy:
    """A pure-exchange economy: two or more households over the same goods."""

    households: tuple[Household, ...]

    def __post_init__(self) -> None:
        if len(self.households) < 2:
            raise SpecificationError("an economy needs at least two households")
        dims = {h.spec.dimension for h in self.households}
        if len(dims) != 1:
            raise SpecificationError("all households must trade the same goods")
        object.__setattr__(self, "households", tuple(self.households))

    @classmethod
    def of(cls, specs, labels=None) -> "Economy":
        if labels is None:
            labels = [f"h{i + 1}" for i in range(len(specs))]
        return cls(tuple(Household(s, l) for s, l in zip(specs, labels)))

    @property
    def size(self) -> int:
        return len(self.households)

    @property
    def n_goods(self) -> int:
        return self.households[0].spec.dimension

    @property
    def specs(self) -> tuple[UtilityLike, ...]:
        return tuple(h.spec for h in self.households)


@dataclass(frozen=True, eq=False)
class Allocation:
    """H strictly positive bundles of L goods; the state of the economy."""

    bundles: FloatArray

    def __post_init__(self) -> None:
        b = np.asarray(self.bundles, dtype=np.float64)
        if b.ndim != 2 or b.shape[0] < 2 or b.shape[1] < 2:
            raise SpecificationError("an allocation is an H x L matrix, H, L >= 2")
        if not (np.all(np.isfinite(b)) and np.all(b > 0.0)):
            raise SpecificationError("allocation coordinates must be strictly positive")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "bundles", b)

    @property
    def aggregate(self) -> FloatArray:
        return self.bundles.sum(axis=0)

    def bundle(self, h: int) -> FloatArray:
        return self.bundles[h]


@dataclass(frozen=True, eq=False)
class SpeedVector:
    """Relative trade speeds, one per household, each in [0, 1]."""

    sigma: FloatArray

    def __post_init__(self) -> None:
        s = np.asarray(self.sigma, dtype=np.float64)
        if s.ndim != 1:
            raise SpecificationError("speeds must form a vector")
        if np.any(s < 0.0) or np.any(s > 1.0):
            raise SpecificationError("speeds must lie in [0, 1]")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)


@dataclass(frozen=True, eq=False)
class BoxSet:
    """Extreme substitution-rate bounds: lower_rates[i, j] = m_ij, upper = M_ij."""

    lower_rates: FloatArray
    upper_rates: FloatArray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower_rates, dtype=np.float64)
        hi = np.asarray(self.upper_rates, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 2 or lo.shape[0] != lo.shape[1]:
            raise SpecificationError("rate bounds must be square matrices of equal shape")
        if np.any(lo > hi * (1.0 + 1e-12)):
            raise SpecificationError("lower rate bound exceeds upper bound")
        if np.max(np.abs(lo * hi.T - 1.0)) > 1e-12:
            raise SpecificationError("rate bounds must satisfy m_ij * M_ji = 1")
        for a in (lo, hi):
            a.setflags(write=False)
        object.__setattr__(self, "lower_rates", lo)
        object.__setattr__(self, "upper_rates", hi)


def _check_state(e: Economy, y: Allocation) -> None:
    if y.bundles.shape != (e.size, e.n_goods):
        raise SpecificationError(
            f"allocation shape {y.bundles.shape} does not match economy "
            f"({e.size} households, {e.n_goods} goods)"
        )


def trade_direction(e: Economy, y: Allocation, p, h: int) -> FloatArray:
    """Derivative at t=0 of household h's linear path: x_n(p / p.y_h) - y_h."""
    _check_state(e, y)
    p = as_price(p, e.n_goods)
    bundle = y.bundle(h)
    return prefs.normalized_demand(e.households[h].spec, p / float(p @ bundle)) - bundle


def all_trade_directions(e: Economy, y: Allocation, p) -> FloatArray:
    """Stacked trade directions, one row per household."""
    _check_state(e, y)
    p = as_price(p, e.n_goods)
    return np.stack(
        [
            prefs.normalized_demand(hh.spec, p / float(p @ b)) - b
            for hh, b in zip(e.households, y.bundles)
        ]
    )


def linear_path_point(e: Economy, y: Allocation, p, h: int, t: float) -> FloatArray:
    """Household h's bundle a fraction ``t`` of the way to its demand."""
    if not 0.0 <= t <= 1.0:
        raise SpecificationError("path parameter must lie in [0, 1]")
    return y.bundle(h) + t * trade_direction(e, y, p, h)


def _direction_scale(norms: FloatArray) -> float:
    return max(1.0, float(norms.max(initial=0.0)))


def speed_contains(e: Economy, y: Allocation, p, sigma: SpeedVector) -> bool:
    """Whether ``sigma`` cancels aggregate trade while moving someone."""
    dirs = all_trade_directions(e, y, p)
    norms = np.linalg.norm(dirs, axis=1)
    s = sigma.sigma
    if s.size != e.size:
        raise SpecificationError("speed vector length must equal the household count")
    residual = float(np.linalg.norm(s @ dirs))
    return residual <= 1e-9 * _direction_scale(norms) and float(s @ norms) > 1e-12


def has_trade(e: Economy, y: Allocation, p) -> bool:
    """LP feasibility of trade at prices p: is the speed polytope nontrivial?

    Maximizes total traded volume subject to aggregate cancellation and the
    unit cube; trade exists iff the optimum clears a small threshold.
    """
    dirs = all_trade_directions(e, y, p)
    norms = np.linalg.norm(dirs, axis=1)
    active = norms >= DEGENERATE_DIRECTION
    if int(active.sum()) < 2:
        return False
    d_act = dirs[active]
    n_act = norms[active]
    scale = _direction_scale(n_act)
    A = d_act.T / scale
    G = np.vstack([A, -A, np.eye(d_act.shape[0])])
    h = np.concatenate(
        [np.full(2 * A.shape[0], _LP_EQ_TOL), np.ones(d_act.shape[0])]
    )
    _, value = _simplex.maximize(n_act, G, h)
    return value > _LP_DECISION


def trade_interval_2x2(
    e: Economy, y: Allocation, tol: float = PARETO_TOL
) -> tuple[float, float] | None:
    """Open interval of trade-compatible price rates for a 2-household,
    2-good economy, or None when the substitution rates already agree."""
    _check_state(e, y)
    if e.size != 2 or e.n_goods != 2:
        raise SpecificationError("trade_interval_2x2 requires H = L = 2")
    r = [
        float(prefs.substitution_rates(hh.spec, b)[0])
        for hh, b in zip(e.households, y.bundles)
    ]
    lo, hi = min(r), max(r)
    if (hi - lo) <= tol * lo:
        return None
    return lo, hi


def msr_extremes(e: Economy, y: Allocation) -> BoxSet:
    """Elementwise min/max of households' substitution-rate ratios."""
    _check_state(e, y)
    inv = np.stack(
        [
            prefs.inverse_normalized_demand(hh.spec, b)
            for hh, b in zip(e.households, y.bundles)
        ]
    )
    ratios = inv[:, :, None] / inv[:, None, :]  # (H, L, L), ratios[h, i, j]
    lower = ratios.min(axis=0)
    upper = ratios.max(axis=0)
    # enforce exact reciprocity against rounding: m_ij = 1 / M_ji
    lower = np.minimum(lower, 1.0 / upper.T)
    upper = 1.0 / lower.T
    return BoxSet(lower, upper)


def box_contains(b: BoxSet, q) -> bool:
    """Whether p = (q, 1) satisfies the min/max rate sandwich for every good."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1 or np.any(q <= 0.0):
        raise SpecificationError("q must be a strictly positive vector")
    n = b.lower_rates.shape[0]
    if q.size != n - 1:
        raise SpecificationError(f"q must have length {n - 1}")
    p = np.append(q, 1.0)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        lo = float(np.min(p[others] * b.lower_rates[i, others]))
        hi = float(np.max(p[others] * b.upper_rates[i, others]))
        # closed sandwich; relative slack so attained extremes survive rounding
        if not lo * (1.0 - 1e-12) <= p[i] <= hi * (1.0 + 1e-12):
            return False
    return True


def sample_speed(
    e: Economy,
    y: Allocation,
    p,
    s_prior: SpeedPrior,
    rng: np.random.Generator,
    max_tries: int = 64,
) -> SpeedVector:
    """Draw relative speeds from the polytope under the given prior.

    Two active traders pin the polytope down to a ray, sampled in closed
    form; more traders go through hit-and-run over the polytope after an
    LP-found interior start.  The prior is read on the polytope's intrinsic
    measure (the ray parameter when H = 2).
    """
    dirs = all_trade_directions(e, y, p)
    norms = np.linalg.norm(dirs, axis=1)
    active = norms >= DEGENERATE_DIRECTION
    if int(active.sum()) < 2:
        raise SamplingError("fewer than two households can trade at these prices")
    s_prior = SpeedPrior(s_prior)
    sigma = np.zeros(e.size)

    if int(active.sum()) == 2:
        i, j = np.nonzero(active)[0]
        cosine = float(dirs[i] @ dirs[j]) / (norms[i] * norms[j])
        if cosine > -1.0 + 1e-9:
            raise SamplingError("two-trader directions are not opposed; no feasible speeds")
        ratio = norms[i] / norms[j]  # sigma_j / sigma_i on the balance ray
        if ratio <= 1.0:
            direction = np.array([1.0, ratio])
        else:
            direction = np.array([1.0 / ratio, 1.0])
        lam = 1.0 if s_prior is SpeedPrior.MAX_SPEED else 1.0 - float(rng.random())
        sigma[[i, j]] = lam * direction
        return SpeedVector(sigma)

    idx = np.nonzero(active)[0]
    for _ in range(max_tries):
        point = _hitrun.sample(dirs[idx], norms[idx], rng)
        if s_prior is SpeedPrior.MAX_SPEED:
            peak = float(point.max())
            if peak < 1e-6:
                continue  # rescaling would amplify the equality residual
            point = point / peak
        if float(point @ norms[idx]) <= 1e-12:
            continue
        sigma[idx] = point
        candidate = SpeedVector(sigma)
        if speed_contains(e, y, p, candidate):
            return candidate
    raise SamplingError(f"no valid speed draw within {max_tries} attempts")


def advance(e: Economy, y: Allocation, p, sigma: SpeedVector) -> Allocation:
    """End state of the joint linear path: household h moves t = sigma_h."""
    dirs = all_trade_directions(e, y, p)
    return Allocation(y.bundles + sigma.sigma[:, None] * dirs)


def mrs_gap(e: Economy, y: Allocation) -> float:
    """Largest relative disagreement of substitution rates across households."""
    _check_state(e, y)
    rates = np.stack(
        [
            prefs.substitution_rates(hh.spec, b)
            for hh, b in zip(e.households, y.bundles)
        ]
    )
    lo = rates.min(axis=0)
    hi = rates.max(axis=0)
    return float(np.max((hi - lo) / lo))


def is_pareto_optimal(e: Economy, y: Allocation, tol: float = PARETO_TOL) -> bool:
    """No common-price trade remains: all substitution rates agree within tol."""
    if tol <= 0.0:
        raise SpecificationError("tolerance must be positive")
    return mrs_gap(e, y) <= tol
