"""Command line entry point: ``subflow run | verify | study``."""

from __future__ import annotations

import argparse
import csv
import io
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import calculus as C
from .config import ConfigError, RunConfig, load, serialize
from .diagnostics import (
    ExperimentSettings,
    Verdict,
    energies_monotone,
    exp_bochner_ladder,
    exp_christoffel,
    exp_gradient_oracle,
    exp_sasakian_commutator,
    exp_summation_by_parts,
    harmonic_residual,
    image_diameter,
    theorem_experiments,
)
from .flow import FlowParams, delta_continuation, run, suggest_dt
from .grid import MapState, atomic_write_bytes, write_snapshot
from .initial import RNG_FAMILY, constant_map, eigenmode_map, random_map

PRESETS = {
    "acceptance": None,
    "decay": ("6",),
    "hyperbolic": ("7",),
    "sphere": ("8",),
    "identities": ("1", "2", "3", "4", "5", "9"),
}

VERDICT_COLUMNS = ("experiment", "passed", "kind", "label", "value", "reason")


def generate_initial(config: RunConfig) -> MapState:
    spec, chart = config.grid, config.chart()
    center = None if config.center is None else np.asarray(config.center)
    if config.initial == "constant":
        return constant_map(spec, chart, center)
    if config.initial == "eigenmode":
        return eigenmode_map(spec, chart, config.amplitude, center)
    return random_map(spec, chart, config.p, config.target_energy, config.seed,
                      config.mollify_steps, center)


def flow_params(config: RunConfig, state: MapState) -> FlowParams:
    dt0 = config.dt0 if config.dt0 is not None else suggest_dt(state, config.p, config.delta)
    return FlowParams(
        p=config.p, delta=config.delta, dt0=dt0, t_max=config.t_max, dt_min=min(config.dt_min, dt0),
        stop_tol=config.stop_tol, max_rejects=config.max_rejects, epsilon=config.epsilon,
        record_every=config.record_every, adaptive=config.adaptive,
    )


def metadata_lines(extra: dict | None = None) -> list[str]:
    meta = {
        "subflow": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "rng": RNG_FAMILY,
        "j_sign": C.J_SIGN,
    }
    meta.update(extra or {})
    return [f"{k}: {v}" for k, v in meta.items()]


def verdicts_csv(verdicts: list[Verdict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=VERDICT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for v in verdicts:
        writer.writerows(v.rows())
    return buf.getvalue()


def write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class Console:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *args):
        if not self.quiet:
            print(*args, flush=True)


# -- subcommands --------------------------------------------------------------


def cmd_run(config: RunConfig, out: Path, say: Console) -> int:
    state = generate_initial(config)
    params = flow_params(config, state)
    out.mkdir(parents=True, exist_ok=True)
    snap_dir = out / "snapshots"
    if config.snapshot_every:
        snap_dir.mkdir(exist_ok=True)

    def on_record(step, t, st):
        if config.snapshot_every and step % config.snapshot_every == 0:
            write_snapshot(snap_dir / f"step_{step}.snap", st.spec, st.values)

    say(f"run: {config.target} m={config.m} p={config.p:g} delta={config.delta:g} dt0={params.dt0:.3e}")
    t0 = time.perf_counter()
    final, trace = run(state, params, on_record=on_record)
    elapsed = time.perf_counter() - t0
    if config.snapshot_every:
        write_snapshot(snap_dir / f"step_{trace.accepted_steps}.snap", final.spec, final.values)

    monotone = energies_monotone(trace.energies)
    residual = harmonic_residual(final, config.p, config.delta) if final.in_chart() else float("nan")
    verdicts = [
        Verdict("energy_monotone", monotone, [("steps", float(trace.accepted_steps))]),
        Verdict("termination", trace.termination in ("converged", "horizon"),
                [("time", trace.time), ("rejected", float(trace.rejected_steps))], [],
                trace.termination),
        Verdict("final_state", True,
                [("harmonic_residual", residual if np.isfinite(residual) else -1.0),
                 ("image_diameter", image_diameter(final)),
                 ("dissipation", trace.dissipation_integral)]),
    ]
    write_text(out / "trace.csv", trace.to_csv())
    write_text(out / "verdicts.csv", verdicts_csv(verdicts))
    report = metadata_lines({"seed": config.seed, "elapsed_s": f"{elapsed:.2f}"})
    report += ["", "# config", config_text(config), "# verdicts"] + [v.line() for v in verdicts]
    write_text(out / "report.txt", "\n".join(report) + "\n")
    for v in verdicts:
        say(v.line())
    say(f"wrote {out}")
    return 0 if monotone else 1


def config_text(config: RunConfig) -> str:
    return serialize(config)


def cmd_verify(size: int, j_sign: int, ps, out: Path | None, seed: int, say: Console) -> int:
    settings = ExperimentSettings(seed=seed, size=size, j_sign=j_sign)
    sizes = tuple(sorted({8, size}))
    runs = [
        lambda: exp_summation_by_parts(settings, sizes=sizes),
        lambda: exp_gradient_oracle(settings, ps=ps),
        lambda: exp_sasakian_commutator(settings),
        lambda: exp_bochner_ladder(settings),
        lambda: exp_christoffel(settings),
    ]
    verdicts = []
    for fn in runs:
        v = fn()
        say(v.line())
        verdicts.append(v)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_text(out / "verdicts.csv", verdicts_csv(verdicts))
        lines = metadata_lines({"seed": seed, "verify_j_sign": j_sign}) + [""] + [v.line() for v in verdicts]
        write_text(out / "report.txt", "\n".join(lines) + "\n")
    return 0 if all(v.passed for v in verdicts) else 1


def cmd_study(target: str, out: Path, seed: int | None, say: Console) -> int:
    if target in PRESETS:
        settings = ExperimentSettings() if seed is None else ExperimentSettings(seed=seed)
        only = PRESETS[target]
        verdicts = theorem_experiments(settings, only=only, exploratory=target == "acceptance", progress=say)
        header = metadata_lines({"preset": target, "seed": settings.seed})
    else:
        config = load(target)
        if seed is not None:
            config = config.replace(seed=seed)
        verdicts = continuation_study(config, say)
        header = metadata_lines({"config": target, "seed": config.seed}) + ["", "# config", config_text(config)]
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "verdicts.csv", verdicts_csv(verdicts))
    write_text(out / "report.txt", "\n".join(header + ["# verdicts"] + [v.line() for v in verdicts]) + "\n")
    say(f"wrote {out}")
    return 0 if all(v.passed for v in verdicts) else 1


def continuation_study(config: RunConfig, say: Console) -> list[Verdict]:
    """delta-continuation from the configured data over ``delta, delta/10, delta/100``."""
    state = generate_initial(config)
    params = flow_params(config, state)
    deltas = [config.delta / 10**k for k in range(3)]
    if config.dt0 is None and config.p < 2:
        # the weight bound grows as delta shrinks; size the step for the smallest one
        params.dt0 = suggest_dt(state, config.p, deltas[-1])
        params.dt_min = min(params.dt_min, params.dt0)
    cont = delta_continuation(state, params, deltas)
    verdicts = []
    for d, (final, trace) in zip(cont.deltas, cont.runs):
        res = harmonic_residual(final, config.p, d) if final.in_chart() else -1.0
        v = Verdict(f"continuation_delta_{d:g}", trace.termination == "converged" and energies_monotone(trace.energies),
                    [("harmonic_residual", res), ("time", trace.time), ("image_diameter", image_diameter(final))],
                    [("stop_tol", config.stop_tol)], trace.termination)
        say(v.line())
        verdicts.append(v)
    dist = cont.consecutive_distances()
    verdicts.append(Verdict("continuation_distances", True,
                            [(f"d{i}", x) for i, x in enumerate(dist)], [], "no rate is asserted"))
    say(verdicts[-1].line())
    return verdicts


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subflow", description="p-pseudoharmonic map flow on the Heisenberg nilmanifold")
    parser.add_argument("--version", action="version", version=f"subflow {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="override the random seed (unsigned 64-bit)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common], help="run one flow from a config file")
    p_run.add_argument("config", type=Path)

    p_ver = sub.add_parser("verify", parents=[common], help="identity and oracle suites")
    p_ver.add_argument("--size", type=int, default=16, help="grid size for the oracle checks (default 16)")
    p_ver.add_argument("--j-sign", type=int, choices=(-1, 1), default=C.J_SIGN,
                       help="orientation of J used by the Bochner ladder")
    p_ver.add_argument("--p", type=float, action="append", dest="ps",
                       help="restrict the gradient oracle to these exponents (repeatable)")

    p_study = sub.add_parser("study", parents=[common], help="experiment suite: preset name or config file")
    p_study.add_argument("target", help=f"one of {sorted(PRESETS)} or a config path")
    return parser


def _check_seed(seed):
    if seed is not None and not 0 <= seed < 2**64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    say = Console(args.quiet)
    try:
        _check_seed(args.seed)
        if args.command == "run":
            config = load(args.config)
            if args.seed is not None:
                config = config.replace(seed=args.seed)
            out = args.out or Path(config.out)
            return cmd_run(config, out, say)
        if args.command == "verify":
            ps = tuple(args.ps) if args.ps else (1.5, 2.0, 3.0, 4.0)
            return cmd_verify(args.size, args.j_sign, ps, args.out, 7 if args.seed is None else args.seed, say)
        out = args.out or Path("subflow-study")
        return cmd_study(args.target, out, args.seed, say)
    except FileNotFoundError as exc:
        print(f"subflow: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"subflow: I/O error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:  # configuration, chart guard and initial-data errors
        print(f"subflow: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
