"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 convergence failure,
4 truncation overflow.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
from pathlib import Path

import numpy as np
import yaml

from . import CODE_VERSION
from .model import DENSE_MAX_L, SPARSE_MAX_L, CapacityError, ParameterError, params_from_dict

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_TRUNCATION = 0, 2, 3, 4

log = logging.getLogger("dipolar_ladder")


class ConfigError(Exception):
    pass


def _window(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("window must be 'A,B'") from None
    if not b > a:
        raise argparse.ArgumentTypeError("window needs A < B")
    return a, b


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'X,Y'") from None
    return a, b


def _read_yaml(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return data


def _prepare_out(path, resume: bool = False) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not resume:
        raise ConfigError(f"output directory {out} is not empty (use --resume to reuse it)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dmrg_config(args):
    from .dmrg import DmrgConfig

    return DmrgConfig(seed=args.seed, chi_max=args.dmrg_chi, cutoff=args.dmrg_cutoff, max_sweeps=args.max_sweeps)


def _header(args, **extra) -> dict:
    h = {"code_version": CODE_VERSION, "seed": args.seed}
    h.update({k: json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v for k, v in extra.items()})
    return h


def _dump(path: Path, obj) -> None:
    from .sweep import _plain

    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_ground_state(args) -> int:
    from .dmrg import find_ground_state, write_ground_state

    params = params_from_dict(_read_yaml(args.params))
    out = _prepare_out(args.out, args.resume)
    gs = find_ground_state(params, _dmrg_config(args))
    write_ground_state(gs, out, {"code_version": CODE_VERSION})
    with open(out / "profile.csv") as fh:
        body = fh.read()
    head = "".join(f"# {k}: {v}\n" for k, v in sorted(_header(args, params=params.to_file_dict()).items()))
    (out / "profile.csv").write_text(head + body)
    log.info("E0=%.12f converged=%s", gs.energy, gs.converged)
    return EXIT_OK if gs.converged else EXIT_CONVERGENCE


def _quench_params(args):
    data = _read_yaml(args.params)
    if "initial" in data:
        unknown = set(data) - {"initial", "final"}
        if unknown:
            raise ParameterError(f"unknown key {sorted(unknown)[0]!r}")
        initial = params_from_dict(data["initial"])
        final = params_from_dict({**data["initial"], **(data.get("final") or {})})
    else:
        initial = params_from_dict(data)
        final = initial.replace(h_d_default=-initial.h_d_default)
    if args.final_h_d is not None:
        final = final.replace(h_d_default=args.final_h_d)
    return initial, final


def cmd_global_quench(args) -> int:
    from .analysis import fit_damped_cosine
    from .tebd import QuenchSpec, run_global_quench, write_timeseries

    initial, final = _quench_params(args)
    spec = QuenchSpec(initial, final, args.dt or 2e-3, args.t_end or 0.5, args.stride, args.chi, args.cutoff,
                      energy=True)
    out = _prepare_out(args.out, args.resume)
    series, gs = run_global_quench(spec, _dmrg_config(args), return_ground_state=True)
    header = _header(args, initial=initial.to_file_dict(), final=final.to_file_dict(), dt=spec.dt,
                     t_end=spec.t_end, chi_max=spec.chi_max, cutoff=spec.cutoff, status=series.status)
    write_timeseries(series, out / "series.csv", header)
    fit = fit_damped_cosine(series, "dx", args.window)
    _dump(out / "fit.json", {"fit": fit.record(), **header})
    if initial.L <= SPARSE_MAX_L:
        _oracle_reports(initial, final, gs, series, out, header)
    if series.status != "ok":
        return EXIT_TRUNCATION
    return EXIT_OK if gs.converged else EXIT_CONVERGENCE


def _oracle_reports(initial, final, gs, series, out, header):
    from . import ed

    psi0 = gs.psi.to_dense()
    exact = ed.propagate(final, psi0, series.times, ("dx", "sx"))
    dev = {k: float(np.max(np.abs(exact[k] - series.averages[k]))) for k in ("dx", "sx")}
    _dump(out / "ed_deviation.json", {"max_abs_deviation": dev, **header})
    if initial.L <= DENSE_MAX_L:
        rows = ed.spectral_report(ed.diagonalize(final), psi0, n_top=20)
        ed.write_spectral_report(rows, out / "spectral_report.csv")


def cmd_local_quench(args) -> int:
    from .analysis import track_light_cone
    from .tebd import run_local_quench, write_profiles, write_timeseries

    base = params_from_dict(_read_yaml(args.params))
    site = args.flip_site or base.L // 2
    out = _prepare_out(args.out, args.resume)
    series, gs = run_local_quench(base, site, args.prep, _dmrg_config(args), args.dt or 5e-3, args.t_end or 3.0,
                                  args.stride, args.chi, args.cutoff, energy=True, return_ground_state=True)
    header = _header(args, params=base.without_overrides().to_file_dict(), flip_site=site,
                     prep_fields=list(args.prep), dt=series.meta["dt"], t_end=series.meta["t_end"],
                     chi_max=args.chi, cutoff=args.cutoff, status=series.status)
    write_timeseries(series, out / "series.csv", header)
    velocities = {}
    for name in ("dx", "sx"):
        write_profiles(series, name, out / f"profile_{name}.csv", header)
        for side in ("left", "right"):
            velocities[f"{name}_{side}"] = track_light_cone(series.profiles[name], series.times, site, side).record()
    _dump(out / "velocity.json", {"velocity": velocities, **header})
    if series.status != "ok":
        return EXIT_TRUNCATION
    return EXIT_OK if gs.converged else EXIT_CONVERGENCE


def cmd_sweep(args) -> int:
    from .sweep import SweepResultStore, aggregate_phase_table, execute, load_manifest, plan, write_phase_table

    grid = load_manifest(args.manifest)
    out = _prepare_out(args.out, args.resume)
    store = SweepResultStore(out, grid)
    tasks = plan(grid, store)
    log.info("%d of %d tasks to run", len(tasks), grid.size)
    records = execute(tasks, store, args.workers)
    if grid.task_type == "ground_state":
        write_phase_table(aggregate_phase_table(store), out / "phase_table.csv", {"code_version": CODE_VERSION})
    failed = [r for r in records if r["status"] != "completed"]
    for r in failed:
        log.warning("task %s failed: %s", r["task_id"], r.get("error", r.get("series_status", "")))
    return EXIT_OK if not failed else EXIT_CONVERGENCE


def cmd_fit(args) -> int:
    from .analysis import append_results_csv, fit_damped_cosine
    from .tebd import read_timeseries

    series = read_timeseries(args.series)
    fit = fit_damped_cosine(series, args.observable, args.window)
    out = _prepare_out(args.out, True)
    rec = {"fit": fit.record(), "source": str(args.series), "code_version": CODE_VERSION}
    _dump(out / "fit.json", rec)
    append_results_csv(out / "results.csv", Path(args.series).stem, "fit", None, fit.record(), args.window)
    print(json.dumps({k: rec["fit"][k] for k in ("c", "A", "tau", "omega", "status")}, default=str))
    return EXIT_OK if fit.status != "failed" else EXIT_CONVERGENCE


def cmd_velocity(args) -> int:
    from .analysis import append_results_csv, track_light_cone
    from .tebd import read_profiles

    times, prof, name = read_profiles(args.profile)
    out = _prepare_out(args.out, True)
    recs = {side: track_light_cone(prof, times, args.origin, side).record() for side in ("left", "right")}
    _dump(out / "velocity.json", {"velocity": recs, "observable": name, "source": str(args.profile),
                                  "code_version": CODE_VERSION})
    for side, r in recs.items():
        append_results_csv(out / "results.csv", f"{Path(args.profile).stem}_{side}", "velocity", None, r)
        print(f"{name} {side}: v={r['velocity']:.4f} +- {r['stderr']:.4f} ({r['status']})")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dipolar-ladder", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, params=True):
        if params:
            sp.add_argument("--params", required=True, help="parameter file (YAML or JSON)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=1234)
        sp.add_argument("--resume", action="store_true", help="allow a non-empty output directory")
        sp.add_argument("--dmrg-chi", type=int, default=128)
        sp.add_argument("--dmrg-cutoff", type=float, default=1e-10)
        sp.add_argument("--max-sweeps", type=int, default=30)

    def evolution(sp):
        sp.add_argument("--chi", type=int, default=128, help="TEBD bond dimension cap")
        sp.add_argument("--cutoff", type=float, default=1e-10)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--t-end", type=float)
        sp.add_argument("--stride", type=int, default=10)

    sp = sub.add_parser("ground-state", help="DMRG ground state")
    common(sp)
    sp.set_defaults(func=cmd_ground_state)

    sp = sub.add_parser("global-quench", help="uniform field quench with damped-cosine fit")
    common(sp)
    evolution(sp)
    sp.add_argument("--window", type=_window, default=(0.0, 0.3))
    sp.add_argument("--final-h-d", type=float, help="post-quench h_d (default: reversed sign)")
    sp.set_defaults(func=cmd_global_quench)

    sp = sub.add_parser("local-quench", help="single-site field switch with light-cone tracking")
    common(sp)
    evolution(sp)
    sp.add_argument("--flip-site", type=int, help="1-based site (default L//2)")
    sp.add_argument("--prep", type=_pair, default=(-5.0, 30.0), help="h_s,h_d at the flip site before t=0")
    sp.set_defaults(func=cmd_local_quench)

    sp = sub.add_parser("sweep", help="parameter grid from a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--resume", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("fit", help="re-fit an existing series CSV")
    sp.add_argument("series")
    sp.add_argument("--out", required=True)
    sp.add_argument("--window", type=_window, default=(0.0, 0.3))
    sp.add_argument("--observable", default="dx", choices=["sx", "dx", "sz", "dz"])
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("velocity", help="re-track an existing wide profile CSV")
    sp.add_argument("profile")
    sp.add_argument("--origin", type=int, required=True, help="1-based quench site")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_velocity)
    return p


def _interrupt(signum, frame):
    raise KeyboardInterrupt


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    signal.signal(signal.SIGTERM, _interrupt)
    try:
        return args.func(args)
    except (ConfigError, ParameterError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
