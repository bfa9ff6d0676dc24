"""Randomized numeric falsification suites for the package's core claims.

Each suite hammers one cluster of analytic results with random draws and
reports the worst violation seen: the demand-theory identities, the chart
Jacobians against finite differences, the monotone attraction of
substitution rates along joint trade paths, and the convergence-to-Pareto
statistic together with its trade-interval cross-check.  Suites are
deterministic given (spec, draws, seed) and single-threaded so the draw
order is reproducible.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import engine, geometry, prefs, trade
from .engine import SimConfig, Terminal
from .errors import ConvergenceError, SpecificationError
from .prefs import Family, UtilityLike, UtilitySpec
from .trade import Allocation, Economy, SpeedPrior

FloatArray = NDArray[np.float64]

#: Absolute slack on non-increasing / non-decreasing claims; grid evaluation
#: of analytically monotone functions only accumulates ulp-level rounding.
MONOTONE_SLACK = 1e-9

_IDENTITY_THRESHOLD = 1e-8
_JACOBIAN_RTOL = 1e-5
_TANGENCY_TOL = 1e-6
_PATH_GRID = 100

# random draws span two decades around the demand fixed point
_DRAW_LO, _DRAW_HI = 0.1, 10.0


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one suite: pass iff no draw violated its claim."""

    check_name: str
    draws: int
    failures: int
    worst_violation: float
    seed: int

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{self.check_name:<28s} {status}  draws={self.draws:<6d} "
            f"failures={self.failures:<5d} worst={self.worst_violation:.3e} "
            f"seed={self.seed}"
        )


def _rng(seed: int) -> np.random.Generator:
    return engine.run_rng(seed, 0)


def _draw_points(rng: np.random.Generator, size) -> FloatArray:
    return np.exp(rng.uniform(math.log(_DRAW_LO), math.log(_DRAW_HI), size=size))


def _relative(residual: float, scale: float) -> float:
    return abs(residual) / max(1.0, abs(scale))


def identity_suite(
    spec: UtilityLike, draws: int = 1000, seed: int = 0, demand_scale: float = 1.0
) -> CheckReport:
    """Demand-theory identities plus inverse-demand and flat-chart roundtrips.

    ``demand_scale`` is a fault-injection hook: any value other than 1
    corrupts the demand map seen by the checks, and the suite must then fail
    on every draw (the harness's own sensitivity is part of the contract).
    """
    if draws < 1:
        raise SpecificationError("draws must be at least 1")
    rng = _rng(seed)
    n = spec.dimension
    failures = 0
    worst = 0.0

    def demand(p: FloatArray) -> FloatArray:
        return demand_scale * prefs.normalized_demand(spec, p)

    for _ in range(draws):
        p = _draw_points(rng, n)
        c = _draw_points(rng, n)
        if isinstance(spec, UtilitySpec) and spec.family is Family.COBB_DOUGLAS_LOG:
            u0 = float(rng.uniform(-2.0, 2.0))
        else:
            u0 = float(np.exp(rng.uniform(math.log(0.2), math.log(5.0))))

        x = demand(p)
        x_true = prefs.normalized_demand(spec, p)
        g_true = prefs.gradient(spec, x_true)
        jac = prefs.normalized_demand_jacobian(spec, p)
        lam = float(g_true @ x_true)
        grad_v = g_true @ jac
        v = prefs.utility(spec, x_true)
        hx = prefs.hicksian_demand(spec, p, v)
        h0 = prefs.hicksian_demand(spec, p, u0)
        e0 = float(p @ h0)
        fp = geometry.FlatPoint(_draw_points(rng, n - 1), u0)

        scale_x = float(np.max(np.abs(x)))
        residuals = [
            _relative(float(p @ x) - 1.0, 1.0),
            _relative(float(np.max(np.abs(p @ jac + x))), scale_x),
            _relative(float(np.max(np.abs(grad_v + lam * x))), float(np.max(np.abs(grad_v)))),
            _relative(float(grad_v @ p) + lam, lam),
            _relative(float(np.max(np.abs(hx - x))), scale_x),
            _relative(
                float(np.max(np.abs(h0 - demand(p / e0)))),
                float(np.max(np.abs(h0))),
            ),
            _relative(prefs.expenditure(spec, p, v) - 1.0, 1.0),
            _relative(
                float(np.max(np.abs(demand(prefs.inverse_normalized_demand(spec, c)) - c))),
                float(np.max(np.abs(c))),
            ),
            _relative(
                float(np.max(np.abs(prefs.inverse_normalized_demand(spec, demand(p)) - p))),
                float(np.max(np.abs(p))),
            ),
        ]
        back = geometry.d_inverse(spec, geometry.d_map(spec, fp))
        residuals.append(_relative(float(np.max(np.abs(back.q - fp.q))), float(np.max(fp.q))))
        residuals.append(_relative(back.u - fp.u, fp.u))
        p2 = geometry.d_map(spec, geometry.d_inverse(spec, p))
        residuals.append(_relative(float(np.max(np.abs(p2 - p))), float(np.max(p))))

        bad = max(residuals)
        worst = max(worst, bad)
        if bad > _IDENTITY_THRESHOLD:
            failures += 1
    return CheckReport("identity", draws, failures, worst, seed)


def _fd_jacobian(f, x: FloatArray, rel_step: float = 1e-6) -> FloatArray:
    f0 = f(x)
    out = np.empty((f0.size, x.size))
    for k in range(x.size):
        h = rel_step * x[k]
        hi = x.copy()
        lo = x.copy()
        hi[k] += h
        lo[k] -= h
        out[:, k] = (f(hi) - f(lo)) / (2.0 * h)
    return out


def jacobian_suite(spec: UtilityLike, draws: int = 1000, seed: int = 0) -> CheckReport:
    """Chart Jacobians against central finite differences, plus tangency."""
    if draws < 1:
        raise SpecificationError("draws must be at least 1")
    rng = _rng(seed)
    n = spec.dimension
    failures = 0
    worst = 0.0
    for _ in range(draws):
        anchor = _draw_points(rng, n)
        p = _draw_points(rng, n)
        level = prefs.utility(spec, anchor)

        got_phi = geometry.jacobian_phi(spec, anchor, p)
        want_phi = _fd_jacobian(lambda z: prefs.hicksian_demand(spec, z, level), p)
        err_phi = float(np.max(np.abs(got_phi - want_phi))) / max(
            1.0, float(np.max(np.abs(want_phi)))
        )

        got_psi = geometry.jacobian_psi(spec, anchor, p)
        want_psi = _fd_jacobian(
            lambda z: prefs.normalized_demand(spec, z / float(z @ anchor)), p
        )
        err_psi = float(np.max(np.abs(got_psi - want_psi))) / max(
            1.0, float(np.max(np.abs(want_psi)))
        )

        support = prefs.inverse_normalized_demand(spec, anchor)
        tangency = float(
            np.max(
                np.abs(
                    geometry.jacobian_phi(spec, anchor, support)
                    - geometry.jacobian_psi(spec, anchor, support)
                )
            )
        )

        bad = max(err_phi / _JACOBIAN_RTOL, err_psi / _JACOBIAN_RTOL, tangency / _TANGENCY_TOL)
        worst = max(worst, bad)
        if bad > 1.0:
            failures += 1
    return CheckReport("jacobian", draws, failures, worst, seed)


def weighted_clearing_rates(
    e: Economy, y: Allocation, weights: FloatArray, tol: float = 1e-11, max_iter: int = 200
) -> FloatArray:
    """Rates q with sum_h w_h * direction_h((q,1)) = 0, by damped Newton.

    With unit weights this is a competitive equilibrium of the economy
    re-endowed at ``y``; any positive weights yield a trade-compatible price
    paired with speeds proportional to ``w``.
    """
    rates = np.stack(
        [prefs.substitution_rates(hh.spec, b) for hh, b in zip(e.households, y.bundles)]
    )
    v = np.log((weights @ rates) / float(weights.sum()))

    def excess(logq: FloatArray) -> FloatArray:
        p = np.append(np.exp(logq), 1.0)
        total = np.zeros(e.n_goods)
        for w, hh, b in zip(weights, e.households, y.bundles):
            total += w * (prefs.normalized_demand(hh.spec, p / float(p @ b)) - b)
        return total[:-1]

    f = excess(v)
    for _ in range(max_iter):
        norm = float(np.max(np.abs(f)))
        if norm < tol:
            return np.exp(v)
        jac = _fd_jacobian(lambda z: excess(np.log(z)), np.exp(v)) * np.exp(v)[None, :]
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Jacobian in the clearing solver") from exc
        scale = 1.0
        for _ in range(40):
            trial = v + scale * step
            f_trial = excess(trial)
            if float(np.max(np.abs(f_trial))) < norm:
                v, f = trial, f_trial
                break
            scale *= 0.5
        else:
            raise ConvergenceError("clearing solver stalled")
    raise ConvergenceError("clearing solver exhausted its iteration budget")


def _feasible_price_and_speeds(
    e: Economy, y: Allocation, rng: np.random.Generator
) -> tuple[FloatArray, FloatArray]:
    """A random trade-compatible price with matching feasible speeds."""
    if e.n_goods == 2:
        rates = [
            float(prefs.substitution_rates(hh.spec, b)[0])
            for hh, b in zip(e.households, y.bundles)
        ]
        lo, hi = math.atan(min(rates)), math.atan(max(rates))
        width = hi - lo
        q = np.array([math.tan(lo + width * float(rng.uniform(0.05, 0.95)))])
        sigma = trade.sample_speed(
            e, y, np.append(q, 1.0), SpeedPrior.UNIFORM_CUBE, rng
        ).sigma
        return q, sigma
    weights = rng.uniform(0.2, 1.0, e.size)
    q = weighted_clearing_rates(e, y, weights)
    lam = 1.0 - float(rng.random())
    return q, lam * weights / float(weights.max())


def attraction_suite(e: Economy, draws: int = 1000, seed: int = 0) -> CheckReport:
    """Monotone substitution-rate dynamics along random joint linear paths.

    Checks, on a 100-point grid per path: squared rate gaps to the trading
    ratio never increase; the rate extremes move per their case split; the
    box bounds nest when every below-price set starts nonempty; and for 2x2
    economies the trade interval net is non-increasing.  Requires the
    supported (attractive and sharp) families.
    """
    if draws < 1:
        raise SpecificationError("draws must be at least 1")
    for spec in e.specs:
        if not isinstance(spec, UtilitySpec):
            raise SpecificationError("attraction suite requires the serialized families")
    rng = _rng(seed)
    ts = np.linspace(0.0, 1.0, _PATH_GRID)
    n = e.n_goods
    failures = 0
    worst = 0.0
    done = 0
    while done < draws:
        y = Allocation(_draw_points(rng, (e.size, n)))
        if trade.is_pareto_optimal(e, y):
            continue
        q, sigma = _feasible_price_and_speeds(e, y, rng)
        if rng.random() < 0.5:
            sigma = sigma / sigma.max()  # exercise the full-speed endpoint claim
        p = np.append(q, 1.0)
        dirs = trade.all_trade_directions(e, y, p)

        # household substitution-rate matrices along the path: (T, H, L, L)
        inv = np.empty((_PATH_GRID, e.size, n))
        for h in range(e.size):
            for k, t in enumerate(ts):
                point = y.bundles[h] + sigma[h] * t * dirs[h]
                inv[k, h] = prefs.inverse_normalized_demand(e.households[h].spec, point)
        ratios = inv[:, :, :, None] / inv[:, :, None, :]  # [t, h, i, j]
        price_ratio = p[:, None] / p[None, :]

        violation = 0.0

        # squared gaps to the trading ratio are non-increasing, zero at full speed
        delta = (ratios - price_ratio) ** 2
        increase = np.diff(delta, axis=0)
        violation = max(violation, float(np.max(increase)) - MONOTONE_SLACK)
        full = np.nonzero(np.abs(sigma - 1.0) < 1e-12)[0]
        if full.size:
            violation = max(violation, float(np.max(delta[-1, full])) - MONOTONE_SLACK)

        # extreme-rate case split
        m_path = ratios.min(axis=1)  # (T, L, L)
        big_m_path = ratios.max(axis=1)
        below = ratios[0] <= price_ratio[None, :, :]  # (H, L, L)
        above = ratios[0] >= price_ratio[None, :, :]
        has_below = below.any(axis=0)
        has_above = above.any(axis=0)
        dm = np.diff(m_path, axis=0)
        dbm = np.diff(big_m_path, axis=0)
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                if has_below[i, j]:
                    violation = max(violation, float(np.max(-dm[:, i, j])) - MONOTONE_SLACK)
                else:
                    violation = max(violation, float(np.max(dm[:, i, j])) - MONOTONE_SLACK)
                if has_above[i, j]:
                    violation = max(violation, float(np.max(dbm[:, i, j])) - MONOTONE_SLACK)
                else:
                    violation = max(violation, float(np.max(-dbm[:, i, j])) - MONOTONE_SLACK)

        # nested boxes under the below-price condition; the 2x2 interval net
        off_diag = ~np.eye(n, dtype=bool)
        if has_below[off_diag].all():
            violation = max(violation, float(np.max(-dm[:, off_diag])) - MONOTONE_SLACK)
            violation = max(violation, float(np.max(dbm[:, off_diag])) - MONOTONE_SLACK)
        if n == 2 and e.size == 2:
            violation = max(violation, float(np.max(-dm[:, 0, 1])) - MONOTONE_SLACK)
            violation = max(violation, float(np.max(dbm[:, 0, 1])) - MONOTONE_SLACK)

        worst = max(worst, violation)
        if violation > 0.0:
            failures += 1
        done += 1
    return CheckReport("attraction", draws, failures, worst, seed)


def welfare_suite(cfg: SimConfig, seed: int = 0) -> CheckReport:
    """Convergence-to-Pareto statistic plus the trade-interval cross-check.

    At least 99% of the configured trajectories must push the substitution
    rate gap below 1e-3 within the step budget, and the Pareto predicate
    must agree exactly with trade-interval emptiness on random allocations.
    The violation is the convergence shortfall against the 99% bar.
    """
    if cfg.economy.size != 2 or cfg.economy.n_goods != 2:
        raise SpecificationError("welfare suite is specified for 2x2 economies")
    if cfg.prior.s_prior is not SpeedPrior.MAX_SPEED:
        raise SpecificationError("welfare suite requires the max-speed prior")
    measured = dataclasses.replace(cfg, pareto_tol=1e-3, max_steps=min(cfg.max_steps, 200))
    converged = 0
    for idx in range(cfg.runs):
        if engine.run_trajectory(measured, idx).terminal is Terminal.PARETO_REACHED:
            converged += 1
    fraction = converged / cfg.runs
    shortfall = max(0.0, 0.99 - fraction)
    failures = 1 if shortfall > 0.0 else 0

    rng = _rng(seed)
    for _ in range(1000):
        y = Allocation(_draw_points(rng, (2, 2)))
        empty = trade.trade_interval_2x2(cfg.economy, y) is None
        if trade.is_pareto_optimal(cfg.economy, y) != empty:
            failures += 1
            shortfall = max(shortfall, 1.0)
    return CheckReport("welfare", cfg.runs + 1000, failures, shortfall, seed)


def _bundled_configs() -> dict[str, SimConfig]:
    from .engine import PriorSpec, UniformArc

    cd = UtilitySpec.cobb_douglas_log([0.5, 0.5])
    ces = UtilitySpec.ces([0.5, 0.5], 0.5)
    ces2 = UtilitySpec.ces([0.7, 0.3], 0.5)
    start = Allocation(np.array([[2.0, 1.0], [1.0, 2.0]]))
    prior = PriorSpec(UniformArc(), SpeedPrior.MAX_SPEED)
    return {
        "cobb_douglas": SimConfig(
            Economy.of([cd, cd]), start, prior, master_seed=0, runs=1000, max_steps=200
        ),
        "ces": SimConfig(
            Economy.of([ces, ces2]), start, prior, master_seed=0, runs=1000, max_steps=200
        ),
    }


def run_all(seed: int = 0, name_filter: str | None = None, inject_fault: bool = False) -> list[CheckReport]:
    """All bundled suites, optionally filtered by substring of their name."""
    cd = UtilitySpec.cobb_douglas_log([0.5, 0.5])
    ces = UtilitySpec.ces([0.5, 0.5], 0.5)
    ces3 = UtilitySpec.ces([0.2, 0.5, 0.3], 0.5)
    scale = 1.01 if inject_fault else 1.0
    configs = _bundled_configs()
    jobs = [
        ("identity[cobb_douglas]", lambda: _named(identity_suite(cd, 1000, seed, scale), "identity[cobb_douglas]")),
        ("identity[ces]", lambda: _named(identity_suite(ces, 1000, seed, scale), "identity[ces]")),
        ("jacobian[cobb_douglas]", lambda: _named(jacobian_suite(cd, 1000, seed), "jacobian[cobb_douglas]")),
        ("jacobian[ces]", lambda: _named(jacobian_suite(ces, 1000, seed), "jacobian[ces]")),
        (
            "attraction[2x2_cobb_douglas]",
            lambda: _named(
                attraction_suite(Economy.of([cd, cd]), 1000, seed), "attraction[2x2_cobb_douglas]"
            ),
        ),
        (
            "attraction[3good_ces]",
            lambda: _named(
                attraction_suite(Economy.of([ces3, UtilitySpec.ces([0.4, 0.3, 0.3], 0.5)]), 1000, seed),
                "attraction[3good_ces]",
            ),
        ),
        (
            "welfare[cobb_douglas]",
            lambda: _named(welfare_suite(configs["cobb_douglas"], seed), "welfare[cobb_douglas]"),
        ),
        ("welfare[ces]", lambda: _named(welfare_suite(configs["ces"], seed), "welfare[ces]")),
    ]
    reports = []
    for name, job in jobs:
        if name_filter and name_filter not in name:
            continue
        reports.append(job())
    return reports


def _named(report: CheckReport, name: str) -> CheckReport:
    return dataclasses.replace(report, check_name=name)
