"""Command line interface: ``vesicleflow {simulate,minimize,stability,criteria,report}``.

Any failure prints one line ``ERROR <ExceptionClass>: <message>`` on stderr
and exits with a non-zero status (2 for bad input, 3 for a diverged run,
1 otherwise).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import diagnostics as dg
from .config import ConfigError, RunConfig, load_config, parse_config, parse_criterion
from .dynamics import SimState, SimulationDiverged, initial_state, stationary_solve, step_coupled
from .experiments import exp_stability
from .persistence import (
    CheckpointError,
    CSVFormatError,
    DiagnosticsWriter,
    load_checkpoint,
    read_csv_columns,
    save_checkpoint,
    write_columns,
)

logger = logging.getLogger("vesicleflow")

EXIT_INPUT = 2
EXIT_DIVERGED = 3


# library entry points --------------------------------------------------------


def _prepare_output(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.dump())
    return out


def _checkpoint_name(step: int) -> str:
    return f"checkpoint_{step:08d}.bin"


def simulate(cfg: RunConfig, resume: Optional[str] = None) -> dict:
    """Coupled run from the configured (or checkpointed) state to ``cfg.t_end``.

    Writes ``diagnostics.csv`` (appended to when resuming), ``final.bin`` and,
    if ``checkpoint_every`` is set, periodic checkpoints into ``cfg.output_dir``.
    """
    out = _prepare_output(cfg)
    grid, p, step_cfg = cfg.grid, cfg.model, cfg.step
    if resume is not None:
        state, header = load_checkpoint(resume, params=p, on_mismatch=cfg.on_hash_mismatch, with_header=True)
        if header.grid != grid:
            raise ConfigError(f"--resume: checkpoint grid {header.grid} differs from configured grid {grid}")
        if state.prev is not None and step_cfg.scheme != "imex_bdf2":
            state.prev = None
    else:
        state = initial_state(grid, cfg.initial_phi(), cfg.initial_u())
    nsteps = int(round((cfg.t_end - state.t) / step_cfg.dt))
    if nsteps < 1:
        raise ConfigError(f"t_end: {cfg.t_end} is not after the start time {state.t}")
    monitor = dg.Monitor(grid, p, criteria=cfg.criteria, dealias=step_cfg.dealias)
    csv_path = out / "diagnostics.csv"
    checkpoints = []
    logger.info("simulate: %d steps of %s, dt=%g, from t=%g", nsteps, step_cfg.scheme, step_cfg.dt, state.t)
    # a resumed run continues the existing record instead of restarting it
    append = resume is not None and csv_path.exists()
    with DiagnosticsWriter(csv_path, append=append) as writer:
        if not append:
            writer(monitor.record(state))
        for i in range(1, nsteps + 1):
            try:
                state = step_coupled(grid, state, p, step_cfg)
            except SimulationDiverged as exc:
                save_checkpoint(exc.state, out / "diverged.bin", grid, p)
                exc.step = state.step + 1
                raise
            if i % cfg.record_every == 0 or i == nsteps:
                writer(monitor.record(state))
            if cfg.checkpoint_every and i % cfg.checkpoint_every == 0 and i != nsteps:
                checkpoints.append(save_checkpoint(state, out / _checkpoint_name(state.step), grid, p))
    final = save_checkpoint(state, out / "final.bin", grid, p)
    return {"csv": csv_path, "final": final, "checkpoints": checkpoints, "state": state}


def minimize(cfg: RunConfig) -> dict:
    out = _prepare_output(cfg)
    res = stationary_solve(cfg.grid, cfg.initial_phi(), cfg.model, tol=cfg.minimize["tol"],
                           max_steps=cfg.minimize["max_steps"])
    t = np.concatenate([[0.0], np.cumsum(res.dts)])
    write_columns(out / "minimize.csv", {"t": t, "energy": res.energies, "residual": res.residuals})
    state = initial_state(cfg.grid, res.phi)
    path = save_checkpoint(state, out / "phi_star.bin", cfg.grid, cfg.model)
    lines = [f"converged {res.converged}", f"steps {res.steps}", f"residual {res.residual:.17g}",
             f"energy {res.energy:.17g}", f"initial_energy {res.energies[0]:.17g}"]
    (out / "minimize.txt").write_text("\n".join(lines) + "\n")
    if not res.converged:
        raise RuntimeError(f"stationary solve stopped at residual {res.residual:.3e} > {cfg.minimize['tol']:g}")
    return {"result": res, "checkpoint": path, "summary": lines}


def stability(cfg: RunConfig, phi_star_path: Optional[str] = None):
    if phi_star_path is None:
        phi_star = minimize(cfg)["result"].phi
    else:
        phi_star = load_checkpoint(phi_star_path, params=cfg.model, on_mismatch=cfg.on_hash_mismatch).phi
    sb = cfg.stability
    rep = exp_stability(phi_star, sb["sigmas"], sb["t_end"], p=cfg.model, grid=cfg.grid, dt=sb["dt"],
                        seed=sb["seed"], residual_tol=cfg.minimize["tol"], record_every=cfg.record_every)
    rep.write(Path(cfg.output_dir) / "stability")
    return rep


def criteria(csv_path, specs: Sequence) -> list:
    """``[(spec, integral)]`` for each criterion over a stored diagnostics CSV."""
    _, cols = read_csv_columns(csv_path)
    out = []
    for spec in specs:
        key = dg.norm_key(spec.quantity, spec.p)
        if key not in cols:
            raise CSVFormatError(f"{csv_path}: no column {key}")
        logs = cols[dg.norm_key("u", math.inf)] if spec.kind == "log_velocity" else None
        out.append((spec, dg.criterion_integral_series(cols["t"], cols[key], spec, logs)))
    return out


def report(csv_path, out_dir) -> list:
    """Plain-text summary and a plot-ready CSV recomputed from a diagnostics CSV."""
    _, c = read_csv_columns(csv_path)
    t = c["t"]
    mean_cols = sorted(k for k in c if k.startswith("mean_u"))
    drift = np.max(np.abs(np.stack([c[k] - c[k][0] for k in mean_cols])), axis=0)
    total = c["total"]
    lines = [
        f"records {len(t)}",
        f"t_start {t[0]:.17g}",
        f"t_end {t[-1]:.17g}",
        f"E(0) {total[0]:.17g}",
        f"E(t_end) {total[-1]:.17g}",
        f"elastic_energy(0) {c['energy_total'][0]:.17g}",
        f"elastic_energy(t_end) {c['energy_total'][-1]:.17g}",
        f"max_energy_increase {float(np.max(np.diff(total), initial=0.0)):.17g}",
        f"sup_higher_order {float(np.max(c['higher_order'])):.17g}",
        f"mean_velocity_drift {float(np.max(drift)):.17g}",
        f"max_div_u {float(np.max(c['div_u_l2'])):.17g}",
    ]
    if len(t) >= 3 and np.allclose(np.diff(t), np.diff(t)[0], rtol=1e-9, atol=0):
        recs = [_TotalOnly(a, b, v, w) for a, b, v, w in
                zip(t, total, c["visc_dissipation"], c["phase_dissipation"])]
        r = dg.energy_law_residual(recs)
        lines.append(f"max_energy_law_residual {float(np.max(np.abs(r))):.17g}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    write_columns(out / "report_series.csv", {
        "t": t, "total": total, "kinetic": c["kinetic"], "elastic": c["energy_total"],
        "higher_order": c["higher_order"], "grad_u_l2": c["grad_u_l2"], "var_deriv_l2": c["var_deriv_l2"],
        "mean_velocity_drift": drift,
    })
    return lines


class _TotalOnly:
    """Just the fields :func:`energy_law_residual` reads."""

    def __init__(self, t, total, visc, phase):
        self.t, self.total, self.visc_dissipation, self.phase_dissipation = t, total, visc, phase


# argument handling -----------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vesicleflow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, run_flags=True):
        p.add_argument("--config", metavar="PATH", help="YAML run configuration")
        p.add_argument("--output", metavar="DIR", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, metavar="N", help="seed for every random input")
        p.add_argument("-v", "--verbose", action="store_true")
        if run_flags:
            p.add_argument("--resume", metavar="PATH", help="checkpoint to continue from")
            p.add_argument("--t-end", type=float, metavar="R")
            p.add_argument("--dt", type=float, metavar="R")
            p.add_argument("--record-every", type=int, metavar="N")

    common(sub.add_parser("simulate", help="run the coupled system"))
    common(sub.add_parser("minimize", help="relax to a stationary state"), run_flags=False)
    st = sub.add_parser("stability", help="perturb a minimizer and track the H2 distance")
    common(st)
    cr = sub.add_parser("criteria", help="regularity-criterion integrals over a diagnostics CSV")
    common(cr, run_flags=False)
    cr.add_argument("--csv", metavar="PATH", help="diagnostics CSV (default <output>/diagnostics.csv)")
    cr.add_argument("--criterion", action="append", default=[], metavar="KIND:P:S")
    rp = sub.add_parser("report", help="summarize a diagnostics CSV")
    common(rp, run_flags=False)
    rp.add_argument("--csv", metavar="PATH", help="diagnostics CSV (default <output>/diagnostics.csv)")
    return ap


def _load(args) -> RunConfig:
    overrides = {}
    if getattr(args, "t_end", None) is not None:
        overrides["t_end"] = args.t_end
    if getattr(args, "dt", None) is not None:
        overrides["step"] = {"dt": args.dt}
    if getattr(args, "record_every", None) is not None:
        overrides["record_every"] = args.record_every
    if args.output is not None:
        overrides["output_dir"] = str(Path(args.output).resolve())
    if args.config:
        return load_config(args.config, overrides=overrides, seed=args.seed)
    return parse_config("", overrides=overrides, seed=args.seed)


def _setup_logging(out_dir: Optional[Path], verbose: bool) -> None:
    logger.handlers.clear()
    logger.setLevel(logging.INFO)
    logger.propagate = False
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if verbose else logging.WARNING)
    console.setFormatter(fmt)
    logger.addHandler(console)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(out_dir / "run.log")
        fh.setFormatter(fmt)
        logger.addHandler(fh)


def _dispatch(args) -> int:
    # parse once quietly to find the output directory, then again with the run log attached
    cfg = _load(args)
    _setup_logging(Path(cfg.output_dir), args.verbose)
    cfg = _load(args)
    for k in cfg.auto_targets if args.command in ("simulate", "minimize", "stability") else ():
        print(f"{k} = {getattr(cfg.model, k):.17g} (from the initial field)")
    if args.command == "simulate":
        res = simulate(cfg, args.resume)
        s: SimState = res["state"]
        print(f"t = {s.t:.17g} after {s.step} steps; diagnostics in {res['csv']}")
    elif args.command == "minimize":
        res = minimize(cfg)
        print("\n".join(res["summary"]))
    elif args.command == "stability":
        rep = stability(cfg, args.resume)
        print(rep.summary_line())
        for k in sorted(rep.metrics):
            print(f"{k} {rep.metrics[k]:.17g}")
        return 0 if rep.passed else 1
    elif args.command == "criteria":
        csv_path = args.csv or Path(cfg.output_dir) / "diagnostics.csv"
        specs = [parse_criterion(c) for c in args.criterion] or cfg.criteria
        if not specs:
            raise ConfigError("criteria: give --criterion KIND:P:S or a criteria list in the config")
        rows = criteria(csv_path, specs)
        for spec, val in rows:
            print(f"{spec.id} {val:.17g}")
        write_columns(Path(cfg.output_dir) / "criteria.csv",
                      {"criterion": [s.id for s, _ in rows], "integral": [v for _, v in rows]})
    elif args.command == "report":
        csv_path = args.csv or Path(cfg.output_dir) / "diagnostics.csv"
        print("\n".join(report(csv_path, cfg.output_dir)))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, CheckpointError, CSVFormatError, dg.InvalidCriterion, FileNotFoundError) as exc:
        code = EXIT_INPUT
        err = exc
    except SimulationDiverged as exc:
        code = EXIT_DIVERGED
        err = exc
    except Exception as exc:  # noqa: BLE001 - every failure becomes one parsable line
        code = 1
        err = exc
    msg = " ".join(str(err).split())
    print(f"ERROR {type(err).__name__}: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
