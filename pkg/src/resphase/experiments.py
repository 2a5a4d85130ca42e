"""Numerical experiments: RMSE tables, uniformity of the pseudophase, scaling probes."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .averaging import (
    averaged_crossing, improved_crossings, states_with_invariant, to_improved,
    to_improved_arrays,
)
from .errors import BudgetExceeded, NoCrossing, PreconditionViolation
from .integrate import EventSpec, IntegratorConfig, exact_field, improved_field, integrate, integrate_to_event
from .model import PhaseState, SystemSpec, _vec, check_conditions, resonant_action
from .resonance import (
    TWO_PI, CriticalPoint, PortraitClass, critical_points_of_F, detect_crossings, frac,
    nu_of, pseudophase_theory,
)

SCHEMA_VERSION = 1
DEFAULT_EPSILONS = tuple(0.001 * 0.5**k for k in range(1, 11))
I0_MODES = ("fix-j0", "fix-i0")


def epsilon_grid(k_min: int = 1, k_max: int = 10) -> tuple:
    return tuple(0.001 * 0.5**k for k in range(k_min, k_max + 1))


# ---------------------------------------------------------------------------
# configuration and result types

@dataclass(frozen=True)
class SweepConfig:
    J0: float = 1.0
    phi0_count: int = 250
    epsilon_list: tuple = DEFAULT_EPSILONS
    integrator: IntegratorConfig | None = None
    horizon_tau: float = 10.0
    i0_mode: str = "fix-j0"
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if self.phi0_count < 2:
            raise ValueError("phi0_count must be at least 2")
        if len(self.epsilon_list) == 0 or not all(e > 0 for e in self.epsilon_list):
            raise ValueError("epsilon_list must be non-empty and positive")
        if self.i0_mode not in I0_MODES:
            raise ValueError(f"i0_mode must be one of {I0_MODES}")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")

    def phases(self) -> np.ndarray:
        return np.arange(self.phi0_count) * (TWO_PI / self.phi0_count)


@dataclass(frozen=True)
class TableRow:
    epsilon: float
    rmse: float
    sample_count: int
    mean_signed_error: float
    failed_count: int = 0

    @property
    def flagged(self) -> bool:
        return self.failed_count > 0 or not math.isfinite(self.rmse)


@dataclass
class ExperimentTable:
    rows: list
    fit_slope: float = float("nan")
    fit_intercept: float = float("nan")
    fit_residual: float = float("nan")

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: -r.epsilon)

    @property
    def flagged_rows(self) -> list:
        return [r for r in self.rows if r.flagged]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)


@dataclass(frozen=True)
class SingleRecord:
    epsilon: float
    I0: float
    phi0: float
    J0: float
    xi: float
    xi_theor: float
    diff: float
    tau_e: float
    tau_star: float
    nu: float
    energy_drift: float
    safe: bool
    margin: float


@dataclass(frozen=True)
class UniformityConfig:
    mode: str = "ensemble"
    sample_count: int = 2000
    seed: int = 0
    epsilon: float = 1e-4
    center: tuple = (1.0, 0.0, 0.0, 0.0)
    radius: float = 0.05
    epsilon0: float = 1e-4
    # the sweep draws epsilon from (eps_lower_fraction * epsilon0, epsilon0)
    eps_lower_fraction: float = 0.5
    state: tuple = (1.0, 0.0, 0.0, 0.0)
    alpha: float = 0.2
    beta: float = 0.7
    horizon_tau: float = 10.0
    integrator: IntegratorConfig | None = None

    def __post_init__(self):
        if self.mode not in ("ensemble", "epsilon_sweep"):
            raise ValueError("mode must be 'ensemble' or 'epsilon_sweep'")
        if self.sample_count < 100:
            raise ValueError("sample_count must be at least 100")
        if not (0.0 <= self.alpha < self.beta <= 1.0):
            raise ValueError("need 0 <= alpha < beta <= 1")
        if not (self.epsilon > 0 and self.epsilon0 > 0 and self.radius >= 0):
            raise ValueError("epsilon, epsilon0 must be positive and radius non-negative")
        if not (0.0 < self.eps_lower_fraction < 1.0):
            raise ValueError("eps_lower_fraction must lie in (0, 1)")


@dataclass
class UniformityReport:
    mode: str
    seed: int
    n_requested: int
    n_dropped: int
    epsilons: np.ndarray
    xi_frac: np.ndarray
    ks_statistic: float
    ks_pvalue: float
    alpha: float
    beta: float
    fraction_in_interval: float

    @property
    def n_used(self) -> int:
        return len(self.xi_frac)

    @property
    def expected_fraction(self) -> float:
        return self.beta - self.alpha

    def ecdf(self):
        """Sorted samples and the empirical CDF at each of them."""
        xs = np.sort(self.xi_frac)
        return xs, np.arange(1, len(xs) + 1) / len(xs)


# ---------------------------------------------------------------------------
# fitting

def linear_fit(points):
    """Ordinary least squares through ``(x, y)`` pairs: ``(slope, intercept, rms residual)``."""
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("a line fit needs at least two points")
    x, y = pts[:, 0], pts[:, 1]
    if np.ptp(x) == 0:
        raise ValueError("a line fit needs at least two distinct x values")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))


# ---------------------------------------------------------------------------
# runs

def _initial_actions(sys, mode, J0, phi0, eta0, x0, eps):
    if mode == "fix-j0":
        return states_with_invariant(sys, J0, phi0, eta0, x0, eps)
    return np.full(np.shape(phi0), float(J0)), np.asarray(eta0, dtype=float)


def run_single(sys: SystemSpec, state0: PhaseState, epsilon: float | None = None,
               config: IntegratorConfig | None = None, horizon_tau: float = 10.0,
               c_a: float = 1.0) -> SingleRecord:
    """Crossing of one exact trajectory compared against the asymptotic pseudophase."""
    if epsilon is not None:
        state0 = PhaseState(state0.I, state0.phi, state0.y, state0.x, epsilon)
    eps = state0.epsilon
    cb = detect_crossings(sys, [state0.I], state0.phi, state0.y, state0.x, eps, horizon_tau, config, c_a=c_a)
    status = cb.status[0]
    if status == "budget":
        raise BudgetExceeded("step budget exhausted before resonance")
    if status != "event":
        raise NoCrossing(f"no resonance crossing within tau = {horizon_tau} ({status})")
    J0 = to_improved(sys, state0).J
    xi_theor = pseudophase_theory(sys, state0, horizon_tau, config)
    threshold = c_a * math.sqrt(eps) * abs(math.log(eps))
    margin = float(cb.margin[0])
    xi = float(cb.xi[0])
    return SingleRecord(
        epsilon=eps, I0=state0.I, phi0=state0.phi, J0=float(J0), xi=xi, xi_theor=float(xi_theor),
        diff=xi - float(xi_theor), tau_e=float(eps * cb.t_e[0]), tau_star=float(cb.tau_star[0]),
        nu=float(cb.nu[0]), energy_drift=float(cb.energy_drift[0]), safe=bool(margin > threshold),
        margin=margin,
    )


def pseudophase_errors(sys: SystemSpec, epsilon: float, phi0, J0: float = 1.0, eta0=None, x0=None,
                       i0_mode: str = "fix-j0", config: IntegratorConfig | None = None,
                       horizon_tau: float = 10.0):
    """Signed errors ``Xi - Xi_theor`` over a set of initial phases at one epsilon.

    Returns ``(diff, ok)``; failed members carry NaN.
    """
    n = sys.n
    phi0 = np.asarray(phi0, dtype=float)
    B = len(phi0)
    eta0 = np.zeros((B, n)) if eta0 is None else np.broadcast_to(np.asarray(eta0, dtype=float), (B, n))
    x0 = np.zeros((B, n)) if x0 is None else np.broadcast_to(np.asarray(x0, dtype=float), (B, n))
    I0, y0 = _initial_actions(sys, i0_mode, J0, phi0, eta0, x0, epsilon)
    cb = detect_crossings(sys, I0, phi0, y0, x0, epsilon, horizon_tau, config, track_energy=False)
    J, _, eta, xi = to_improved_arrays(sys, I0, phi0, y0, x0, epsilon)
    _, Phi, _, _, ok_a = improved_crossings(sys, J, eta, xi, epsilon, horizon_tau, config)
    xi_theor = (phi0 + Phi / epsilon) / TWO_PI
    ok = cb.ok & ok_a
    return np.where(ok, cb.xi - xi_theor, np.nan), ok


def run_table1(sys: SystemSpec, sweep: SweepConfig = SweepConfig(), progress=None) -> ExperimentTable:
    """RMSE of ``Xi - Xi_theor`` over the phase grid for every epsilon, plus a log-log fit."""
    phases = sweep.phases()
    rows = []
    for eps in sweep.epsilon_list:
        diff, ok = pseudophase_errors(sys, eps, phases, sweep.J0, i0_mode=sweep.i0_mode,
                                      config=sweep.integrator, horizon_tau=sweep.horizon_tau)
        d = diff[ok]
        if len(d):
            row = TableRow(float(eps), float(np.sqrt(np.mean(d**2))), int(len(d)), float(np.mean(d)),
                           int(np.sum(~ok)))
        else:
            row = TableRow(float(eps), float("nan"), 0, float("nan"), int(len(ok)))
        rows.append(row)
        if progress is not None:
            progress(row)
    table = ExperimentTable(rows)
    good = [(math.log(r.epsilon), math.log(r.rmse)) for r in table.rows if not r.flagged and r.rmse > 0]
    if len(good) >= 2:
        table.fit_slope, table.fit_intercept, table.fit_residual = linear_fit(good)
    return table


def sample_ball(seed: int, count: int, center, radius: float) -> np.ndarray:
    """``count`` points uniform in a Euclidean ball.

    Member ``i`` draws from child stream ``i`` of ``SeedSequence(seed)`` (PCG64),
    so a sample never depends on how many others are drawn.
    """
    center = np.asarray(center, dtype=float)
    d = len(center)
    out = np.empty((count, d))
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(count)):
        rng = np.random.Generator(np.random.PCG64(child))
        v = rng.standard_normal(d)
        out[i] = center + radius * rng.random() ** (1.0 / d) * v / np.linalg.norm(v)
    return out


def sample_epsilons(seed: int, count: int, low: float, high: float) -> np.ndarray:
    """``count`` values uniform in ``(low, high)``, one child stream per member."""
    out = np.empty(count)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(count)):
        u = np.random.Generator(np.random.PCG64(child)).random()
        out[i] = high - (high - low) * u  # u in [0, 1) keeps the value off ``low``
    return out


def run_uniformity(sys: SystemSpec, cfg: UniformityConfig = UniformityConfig()) -> UniformityReport:
    """Empirical distribution of the fractional pseudophase."""
    n, N = sys.n, cfg.sample_count
    if cfg.mode == "ensemble":
        if len(cfg.center) != 2 + 2 * n:
            raise ValueError(f"ball center needs {2 + 2 * n} components")
        pts = sample_ball(cfg.seed, N, cfg.center, cfg.radius)
        eps = np.full(N, cfg.epsilon)
    else:
        if len(cfg.state) != 2 + 2 * n:
            raise ValueError(f"initial state needs {2 + 2 * n} components")
        pts = np.tile(np.asarray(cfg.state, dtype=float), (N, 1))
        eps = sample_epsilons(cfg.seed, N, cfg.eps_lower_fraction * cfg.epsilon0, cfg.epsilon0)
    cb = detect_crossings(sys, pts[:, 0], pts[:, 1], pts[:, 2:2 + n], pts[:, 2 + n:], eps,
                          cfg.horizon_tau, cfg.integrator, track_energy=False)
    ok = cb.ok & np.isfinite(cb.xi)
    xf = np.asarray(frac(cb.xi[ok]), dtype=float)
    if len(xf):
        ks = stats.kstest(xf, "uniform")
        ks_stat, ks_p = float(ks.statistic), float(ks.pvalue)
        inside = (xf >= cfg.alpha) & (xf < cfg.beta) if cfg.beta < 1.0 else xf >= cfg.alpha
        fraction = float(np.mean(inside))
    else:
        ks_stat = ks_p = fraction = float("nan")
    return UniformityReport(cfg.mode, cfg.seed, N, int(np.sum(~ok)), eps[ok], xf, ks_stat, ks_p,
                            cfg.alpha, cfg.beta, fraction)


@dataclass(frozen=True)
class InvariantProbe:
    epsilon: float
    tau_stop: float
    max_J_deviation: float  # max |J(t) - J0|
    max_y_deviation: float  # max |y(t) - eta_a(eps t)|
    samples: int


def adiabatic_probe(sys: SystemSpec, state0: PhaseState, omega_stop: float = 0.5,
                    config: IntegratorConfig | None = None) -> InvariantProbe:
    """Deviation of the exact solution from the improved adiabatic one while ``omega_a >= omega_stop``.

    ``J(t)`` is the improved action of the exact state at each accepted step;
    ``eta_a`` is the improved adiabatic flow started from the transformed initial state.
    """
    n, eps = sys.n, state0.epsilon
    ist = to_improved(sys, state0)
    if not sys.omega0(ist.J, ist.eta, ist.xi) > omega_stop:
        raise PreconditionViolation("omega_a must start above omega_stop")
    ev = EventSpec(lambda t, Y: sys.omega0(ist.J, Y[..., :n], Y[..., n:2 * n]) - omega_stop,
                   direction="decreasing", vectorized=True)
    tau_stop, _, traj_a = integrate_to_event(improved_field(sys, eps, ist.J),
                                             np.concatenate([ist.eta, ist.xi, [0.0]]), 0.0, 10.0, ev, config)
    traj = integrate(exact_field(sys, eps), state0.as_array(), 0.0, tau_stop / eps, config)
    Y = traj.y
    J, _, _, _ = to_improved_arrays(sys, Y[:, 0], Y[:, 1], Y[:, 2:2 + n], Y[:, 2 + n:], eps)
    eta_a = traj_a.query(np.minimum(eps * traj.t, tau_stop))[:, :n]
    return InvariantProbe(
        epsilon=eps, tau_stop=float(tau_stop),
        max_J_deviation=float(np.max(np.abs(J - ist.J))),
        max_y_deviation=float(np.max(np.abs(Y[:, 2:2 + n] - eta_a))),
        samples=len(traj.t),
    )


# ---------------------------------------------------------------------------
# resonance analysis

@dataclass
class AnalysisReport:
    system: str
    tau_star: float
    y_star: np.ndarray
    x_star: np.ndarray
    resonant_action: float
    alpha: float
    b: float
    condition_B: bool
    condition_C: bool
    condition_E: bool
    portrait: PortraitClass
    epsilon: float
    c_a: float
    nu_without_maxima: float | None
    exclusion_bands: list = field(default_factory=list)  # (center, half width) in fractional pseudophase
    notes: tuple = ()


def analyze_point(sys: SystemSpec, y, x, epsilon: float = 1e-3, c_a: float = 1.0,
                  tau_star: float = float("nan")) -> AnalysisReport:
    """Conditions, pendulum portrait and exclusion bands at a point of the resonant surface."""
    y, x = _vec(y), _vec(x)
    rep = check_conditions(sys, y, x)
    portrait = critical_points_of_F(sys, y, x) if rep.condition_E else PortraitClass(
        oscillatory=bool(rep.critical_phases),
        critical_points=tuple(CriticalPoint(float(r), "local_max" if s < 0 else "local_min", float(v), float(s))
                              for r, s, v in zip(rep.critical_phases, rep.second_derivatives,
                                                 rep.critical_values)),
        b=rep.b)
    half = c_a * math.sqrt(epsilon) * abs(math.log(epsilon))
    bands = [(float(c), half) for c in portrait.critical_pseudophases()] if portrait.local_maxima else []
    return AnalysisReport(
        system=sys.name, tau_star=tau_star, y_star=y, x_star=x, resonant_action=resonant_action(sys, y, x),
        alpha=rep.alpha, b=rep.b, condition_B=rep.condition_B, condition_C=rep.condition_C,
        condition_E=rep.condition_E, portrait=portrait, epsilon=epsilon, c_a=c_a,
        nu_without_maxima=nu_of(0.0, portrait, epsilon) if not portrait.local_maxima else None,
        exclusion_bands=bands, notes=rep.witnesses,
    )


def analyze_at_resonance(sys: SystemSpec, I0: float, y0, x0, epsilon: float = 1e-3, c_a: float = 1.0,
                         horizon_tau: float = 10.0) -> AnalysisReport:
    """:func:`analyze_point` at the arrival point of the averaged flow from ``(I0, y0, x0)``."""
    tau, ys, xs = averaged_crossing(sys, I0, y0, x0, horizon_tau)
    return analyze_point(sys, ys, xs, epsilon, c_a, tau_star=tau)


# ---------------------------------------------------------------------------
# output

TABLE_COLUMNS = ("epsilon", "rmse", "sample_count", "mean_signed_error", "failed_count", "flagged")
SINGLE_COLUMNS = ("epsilon", "I0", "phi0", "J0", "xi", "xi_theor", "diff", "tau_e", "tau_star", "nu",
                  "energy_drift", "safe", "margin")
UNIFORMITY_COLUMNS = ("epsilon", "xi_frac")

_NUM = {"type": ["number", "null"]}
TABLE_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "kind", "rows", "fit"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"const": "table"},
        "rows": {"type": "array", "items": {
            "type": "object",
            "required": list(TABLE_COLUMNS),
            "properties": {
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "rmse": {"type": ["number", "null"], "minimum": 0},
                "sample_count": {"type": "integer", "minimum": 0},
                "mean_signed_error": _NUM,
                "failed_count": {"type": "integer", "minimum": 0},
                "flagged": {"type": "boolean"},
            },
        }},
        "fit": {"type": "object", "required": ["slope", "intercept", "residual"],
                "properties": {"slope": _NUM, "intercept": _NUM, "residual": _NUM}},
    },
}
SINGLE_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "kind", "record"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"const": "single"},
        "record": {"type": "object", "required": list(SINGLE_COLUMNS)},
    },
}
UNIFORMITY_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "kind", "mode", "seed", "n_requested", "n_used", "n_dropped",
                 "ks_statistic", "ks_pvalue", "alpha", "beta", "fraction_in_interval", "samples"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"const": "uniformity"},
        "mode": {"enum": ["ensemble", "epsilon_sweep"]},
        "samples": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                               "minItems": 2, "maxItems": 2}},
    },
}


def _num(v):
    """JSON-safe float; non-finite values become null."""
    v = float(v)
    return v if math.isfinite(v) else None


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))  # shortest representation that round-trips exactly


def _rows_of(obj):
    if isinstance(obj, ExperimentTable):
        return TABLE_COLUMNS, [[getattr(r, c) for c in TABLE_COLUMNS] for r in obj.rows]
    if isinstance(obj, SingleRecord):
        return SINGLE_COLUMNS, [[getattr(obj, c) for c in SINGLE_COLUMNS]]
    if isinstance(obj, UniformityReport):
        return UNIFORMITY_COLUMNS, [[e, x] for e, x in zip(obj.epsilons, obj.xi_frac)]
    raise TypeError(f"cannot emit {type(obj).__name__}")


def to_json_dict(obj) -> dict:
    if isinstance(obj, ExperimentTable):
        return {
            "schema_version": SCHEMA_VERSION, "kind": "table",
            "rows": [{"epsilon": r.epsilon, "rmse": _num(r.rmse), "sample_count": r.sample_count,
                      "mean_signed_error": _num(r.mean_signed_error), "failed_count": r.failed_count,
                      "flagged": r.flagged} for r in obj.rows],
            "fit": {"slope": _num(obj.fit_slope), "intercept": _num(obj.fit_intercept),
                    "residual": _num(obj.fit_residual)},
        }
    if isinstance(obj, SingleRecord):
        rec = {c: getattr(obj, c) for c in SINGLE_COLUMNS}
        rec = {k: (v if isinstance(v, bool) else _num(v)) for k, v in rec.items()}
        return {"schema_version": SCHEMA_VERSION, "kind": "single", "record": rec}
    if isinstance(obj, UniformityReport):
        return {
            "schema_version": SCHEMA_VERSION, "kind": "uniformity", "mode": obj.mode, "seed": obj.seed,
            "n_requested": obj.n_requested, "n_used": obj.n_used, "n_dropped": obj.n_dropped,
            "ks_statistic": _num(obj.ks_statistic), "ks_pvalue": _num(obj.ks_pvalue),
            "alpha": obj.alpha, "beta": obj.beta, "fraction_in_interval": _num(obj.fraction_in_interval),
            "samples": [[float(e), float(x)] for e, x in zip(obj.epsilons, obj.xi_frac)],
        }
    raise TypeError(f"cannot emit {type(obj).__name__}")


def plot_data(obj) -> list:
    """Two-column pairs for external plotting: log-log RMSE for tables, the ECDF for uniformity runs."""
    if isinstance(obj, ExperimentTable):
        return [(math.log(r.epsilon), math.log(r.rmse)) for r in obj.rows if not r.flagged and r.rmse > 0]
    if isinstance(obj, UniformityReport):
        xs, F = obj.ecdf()
        return list(zip(xs.tolist(), F.tolist()))
    return []


def companion_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".plot.dat")


def emit(obj, path, format: str = "csv") -> Path:
    """Write a table, record or uniformity report as CSV or JSON, plus a plot-data companion file."""
    path = Path(path)
    try:
        if format == "csv":
            header, rows = _rows_of(obj)
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows([[_cell(v) for v in row] for row in rows])
        elif format == "json":
            with open(path, "w") as fh:
                json.dump(to_json_dict(obj), fh, indent=2, allow_nan=False)
                fh.write("\n")
        else:
            raise ValueError(f"unknown format {format!r}")
        pairs = plot_data(obj)
        if isinstance(obj, (ExperimentTable, UniformityReport)):
            with open(companion_path(path), "w") as fh:
                if isinstance(obj, ExperimentTable):
                    fh.write("# log(epsilon) log(rmse)")
                    if math.isfinite(obj.fit_slope):
                        fh.write(f"  fit: slope {obj.fit_slope!r} intercept {obj.fit_intercept!r}")
                    fh.write("\n")
                else:
                    fh.write("# xi_frac ecdf\n")
                for a, b in pairs:
                    fh.write(f"{a!r} {b!r}\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    return path
