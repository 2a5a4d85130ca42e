"""Command line entry point: ``resphase single|table1|uniformity|analyze``."""
from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .averaging import state_with_invariant
from .errors import ResonanceError
from .experiments import (
    SweepConfig, UniformityConfig, analyze_at_resonance, analyze_point, emit, epsilon_grid, run_single,
    run_table1, run_uniformity,
)
from .integrate import IntegratorConfig
from .model import PhaseState, example_system

EXIT_OK, EXIT_TRAJECTORY, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _format_of(args) -> str:
    if args.format:
        return args.format
    return "json" if args.out and args.out.endswith(".json") else "csv"


def _integrator(args) -> IntegratorConfig | None:
    if args.rtol is None:
        return None
    return IntegratorConfig(rel_tol=args.rtol, abs_tol=args.rtol)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--h1-scale", type=float, default=1.0,
                        help="amplitude factor of the perturbation in the example system (default 1)")
    common.add_argument("--rtol", type=_positive(float), default=None,
                        help="integrator relative and absolute tolerance (default 1e-12)")
    common.add_argument("--horizon-tau", type=_positive(float), default=10.0,
                        help="give up when no crossing happens within this slow time (default 10)")
    common.add_argument("--out", default=None, help="output file")
    common.add_argument("--format", choices=("csv", "json"), default=None,
                        help="output format (default from the --out suffix, else csv)")

    p = argparse.ArgumentParser(prog="resphase", description="Pseudophase of resonance crossings.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("single", parents=[common], help="one trajectory against the asymptotic pseudophase")
    s.add_argument("--epsilon", type=_positive(float), required=True)
    s.add_argument("--j0", type=float, default=1.0)
    s.add_argument("--phi0", type=float, default=0.0)
    s.add_argument("--i0-mode", choices=("fix-j0", "fix-i0"), default="fix-j0",
                   help="fix-j0: the improved action equals J0 at tau = 0; fix-i0: I0 = J0")

    t = sub.add_parser("table1", parents=[common], help="RMSE over the phase grid for eps = 0.001 * 0.5**k")
    t.add_argument("--k-min", type=int, default=1)
    t.add_argument("--k-max", type=int, default=10)
    t.add_argument("--phases", type=int, default=250)
    t.add_argument("--j0", type=float, default=1.0)
    t.add_argument("--i0-mode", choices=("fix-j0", "fix-i0"), default="fix-j0")

    u = sub.add_parser("uniformity", parents=[common], help="distribution of the fractional pseudophase")
    u.add_argument("--mode", choices=("ensemble", "epsilon-sweep"), default="ensemble")
    u.add_argument("--n", type=int, default=2000)
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--epsilon", type=_positive(float), default=1e-4, help="ensemble mode")
    u.add_argument("--epsilon0", type=_positive(float), default=1e-4, help="epsilon-sweep mode")
    u.add_argument("--alpha", type=float, default=0.2)
    u.add_argument("--beta", type=float, default=0.7)
    u.add_argument("--ball-radius", type=float, default=0.05)

    a = sub.add_parser("analyze", parents=[common], help="conditions and pendulum portrait on the resonant surface")
    a.add_argument("--at-resonance", action="store_true",
                   help="analyse where the averaged flow from (I0, y0, x0) reaches resonance")
    a.add_argument("--i0", type=float, default=1.0)
    a.add_argument("--y", type=float, default=0.0, help="y0, or y itself without --at-resonance")
    a.add_argument("--x", type=float, default=0.0, help="x0, or x itself without --at-resonance")
    a.add_argument("--epsilon", type=_positive(float), default=1e-3, help="sets the exclusion band width")
    a.add_argument("--c-a", type=_positive(float), default=1.0)
    return p


def _fmt(v) -> str:
    return f"{v:.12g}" if isinstance(v, float) else str(v)


def cmd_single(args) -> int:
    sys_ = example_system(args.h1_scale)
    if args.i0_mode == "fix-j0":
        st = state_with_invariant(sys_, args.j0, args.phi0, [0.0], [0.0], args.epsilon)
    else:
        st = PhaseState(args.j0, args.phi0, [0.0], [0.0], args.epsilon)
    rec = run_single(sys_, st, config=_integrator(args), horizon_tau=args.horizon_tau)
    for k, v in rec.__dict__.items():
        print(f"{k:>14s}  {_fmt(v)}")
    if args.out:
        emit(rec, args.out, _format_of(args))
    return EXIT_OK


def cmd_table1(args) -> int:
    if not (1 <= args.k_min <= args.k_max):
        raise ConfigError("need 1 <= k-min <= k-max")
    sweep = SweepConfig(J0=args.j0, phi0_count=args.phases, epsilon_list=epsilon_grid(args.k_min, args.k_max),
                        integrator=_integrator(args), horizon_tau=args.horizon_tau,
                        i0_mode=args.i0_mode)
    print(f"{'epsilon':>14s} {'rmse':>14s} {'samples':>8s} {'mean error':>14s}")

    def show(r):
        flag = "  FLAGGED" if r.flagged else ""
        print(f"{r.epsilon:14.9g} {r.rmse:14.7g} {r.sample_count:8d} {r.mean_signed_error:14.6g}{flag}", flush=True)

    table = run_table1(example_system(args.h1_scale), sweep, progress=show)
    if math.isfinite(table.fit_slope):
        print(f"fit: log(rmse) = {table.fit_slope:.7f} log(eps) + {table.fit_intercept:.7f}"
              f"  (rms residual {table.fit_residual:.3g})")
    if args.out:
        emit(table, args.out, _format_of(args))
    return EXIT_TRAJECTORY if table.flagged_rows else EXIT_OK


def cmd_uniformity(args) -> int:
    mode = args.mode.replace("-", "_")
    cfg = UniformityConfig(mode=mode, sample_count=args.n, seed=args.seed, epsilon=args.epsilon,
                           epsilon0=args.epsilon0, radius=args.ball_radius, alpha=args.alpha, beta=args.beta,
                           horizon_tau=args.horizon_tau, integrator=_integrator(args))
    rep = run_uniformity(example_system(args.h1_scale), cfg)
    crit = 1.63 / math.sqrt(rep.n_used) if rep.n_used else float("nan")
    print(f"mode {rep.mode}, seed {rep.seed}: {rep.n_used} samples used, {rep.n_dropped} dropped")
    print(f"KS statistic vs uniform: {rep.ks_statistic:.5f} (5% critical value {crit:.5f}), p = {rep.ks_pvalue:.3g}")
    print(f"fraction in [{rep.alpha:g}, {rep.beta:g}): {rep.fraction_in_interval:.4f} "
          f"(uniform: {rep.expected_fraction:.4f})")
    if args.out:
        emit(rep, args.out, _format_of(args))
    return EXIT_OK if rep.n_used else EXIT_TRAJECTORY


def cmd_analyze(args) -> int:
    sys_ = example_system(args.h1_scale)
    if args.at_resonance:
        rep = analyze_at_resonance(sys_, args.i0, [args.y], [args.x], args.epsilon, args.c_a, args.horizon_tau)
    else:
        rep = analyze_point(sys_, [args.y], [args.x], args.epsilon, args.c_a)
    print(f"system: {rep.system}")
    if args.at_resonance:
        print(f"averaged flow reaches resonance at tau* = {rep.tau_star:.12g}")
    print(f"point: y = {np.array2string(rep.y_star, precision=12)}, x = {np.array2string(rep.x_star, precision=12)},"
          f" resonant action a = {rep.resonant_action:.12g}")
    print(f"condition B: {'pass' if rep.condition_B else 'FAIL'} (alpha = {rep.alpha:.12g})")
    print(f"condition C: {'pass' if rep.condition_C else 'FAIL'} (b = {rep.b:.12g})")
    print(f"condition E: {'pass' if rep.condition_E else 'FAIL'}")
    for note in rep.notes:
        print(f"  {note}")
    pc = rep.portrait
    print(f"portrait: {'with oscillatory domains' if pc.oscillatory else 'no oscillatory domains'}, "
          f"{len(pc.critical_points)} critical points of F")
    for c in pc.critical_points:
        print(f"  phi = {c.phi_c:.12f}  {c.kind:9s}  F = {c.F_value:.12g}  F'' = {c.F_second_derivative:.12g}")
    if rep.nu_without_maxima is not None:
        print(f"nu = {rep.nu_without_maxima:g} (F has no local maxima)")
    else:
        print("nu depends on the arrival phase (distance to the local maxima above)")
    if rep.exclusion_bands:
        print(f"exclusion bands in the fractional pseudophase (eps = {rep.epsilon:g}, c_a = {rep.c_a:g}):")
        for c, w in rep.exclusion_bands:
            print(f"  {c:.12f} +/- {w:.6g}")
    else:
        print("exclusion bands: none")
    return EXIT_OK


COMMANDS = {"single": cmd_single, "table1": cmd_table1, "uniformity": cmd_uniformity, "analyze": cmd_analyze}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResonanceError as exc:
        print(f"trajectory failure: {exc}", file=sys.stderr)
        return EXIT_TRAJECTORY
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
