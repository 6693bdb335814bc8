"""Command-line front end: experiment orchestration and CSV emission.

Subcommands: steady, prc, ppv, adjoint, compare, lock, phasesim, pipeline.
Every run writes its declared CSVs plus a manifest (config echo, versions,
wall clock per stage) into the configured output directory.  CSV content is
deterministic: re-running a command with the same config reproduces the
files byte for byte.  PHASEKIT_THREADS caps sweep parallelism.
"""
from __future__ import annotations

import argparse
import math
import sys as _sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import (ExperimentConfig, LockConfig, PhasesimConfig,
                     build_system, load_config)
from .dynsys import OdeSystem
from .errors import ConfigError, PhasekitError
from .limit_cycle import LimitCycle, _settle, find_period
from .models import InjectionPort
from .phase_sim import (Coupling, Injection, LinearKernel, PhaseNetwork,
                        PhaseOscillator, adler_lock_range, injection_lock,
                        simulate_network)
from .ppv import PpvCurve, adjoint_ppv, compare_ppv, fit_fourier, ppv_from_prc
from .prc import ImpulseSpec, PrcCurve, pick_weak_charge, sweep_prc

_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# deterministic CSV helpers (17 significant digits round-trips doubles)

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header: list[str], columns: list) -> None:
    rows = len(columns[0]) if columns else 0
    lines = [",".join(header)]
    for r in range(rows):
        cells = []
        for col in columns:
            v = col[r]
            cells.append(v if isinstance(v, str) else _fmt(v))
        lines.append(",".join(cells))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ConfigError(f"{path}: empty CSV")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


# ---------------------------------------------------------------------------
# orchestration stages

class _Manifest:
    def __init__(self, cfg: ExperimentConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.stages: list[tuple[str, float]] = []
        self.notes: list[str] = []

    def stage(self, name: str, seconds: float) -> None:
        self.stages.append((name, seconds))

    def note(self, text: str) -> None:
        self.notes.append(text)

    def write(self, out_dir: Path) -> None:
        lines = [
            f"phasekit {__version__} :: {self.command}",
            f"python {_sys.version.split()[0]}, numpy {np.__version__}",
            "",
            "[config]",
        ]
        echo = yaml.safe_dump(_config_echo(self.cfg), sort_keys=True).rstrip()
        lines.extend("  " + ln for ln in echo.splitlines())
        lines.append("")
        lines.append("[stages]")
        for name, secs in self.stages:
            lines.append(f"  {name}: {secs:.3f} s")
        if self.notes:
            lines.append("")
            lines.append("[results]")
            lines.extend("  " + n for n in self.notes)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "manifest.txt", "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def _config_echo(cfg: ExperimentConfig) -> dict:
    def plain(obj):
        if hasattr(obj, "__dataclass_fields__"):
            return {k: plain(getattr(obj, k)) for k in obj.__dataclass_fields__}
        if isinstance(obj, Path):
            return str(obj)
        if isinstance(obj, tuple):
            return list(obj)
        if isinstance(obj, dict):
            return {k: plain(v) for k, v in obj.items()}
        return obj
    return plain(cfg)


def _prepare_cycle(cfg: ExperimentConfig, manifest: _Manifest
                   ) -> tuple[OdeSystem, InjectionPort, LimitCycle, float]:
    """Settle, pick the working step, and extract the limit cycle."""
    sys_, port, x0 = build_system(cfg.model)
    integ = cfg.integration
    t0 = time.perf_counter()
    state, rough = _settle(sys_, np.asarray(x0), integ.settle_periods,
                           integ.bootstrap_step, integ.settle_tol,
                           integ.max_settle_periods, integ.method)
    if integ.step_policy == "auto":
        step = rough / integ.step_divisor
    else:
        step = float(integ.step_policy)
    if abs(step - integ.bootstrap_step) > 1e-3 * integ.bootstrap_step:
        state, rough = _settle(sys_, state, 3, step, integ.settle_tol,
                               integ.max_settle_periods, integ.method)
    manifest.stage("settle", time.perf_counter() - t0)
    t0 = time.perf_counter()
    lc = find_period(sys_, state, step, integ.crossings, integ.grid_size,
                     integ.period_tol, integ.method)
    manifest.stage("find_period", time.perf_counter() - t0)
    manifest.note(f"T0_seconds = {_fmt(lc.T0)}")
    manifest.note(f"omega0_rad_per_s = {_fmt(lc.omega0)}")
    manifest.note(f"step_seconds = {_fmt(step)}")
    return sys_, port, lc, step


def _write_steady(out: Path, sys_: OdeSystem, lc: LimitCycle) -> None:
    header = ["phase_rad"] + list(sys_.state_names)
    cols = [lc.phases] + [lc.orbit[:, j] for j in range(sys_.dim)]
    _write_csv(out / "steady.csv", header, cols)


def _make_impulse(cfg: ExperimentConfig, sys_: OdeSystem,
                  port: InjectionPort, lc: LimitCycle, step: float,
                  manifest: _Manifest) -> ImpulseSpec:
    h = cfg.prc.pulse_width if cfg.prc.pulse_width is not None else lc.T0 / 1000.0
    if cfg.prc.charge == "auto":
        t0 = time.perf_counter()
        q = pick_weak_charge(sys_, lc, port, cfg.prc.target_prc_rad,
                             step=step, discard_periods=cfg.integration.discard_periods,
                             n_crossings=cfg.integration.crossings,
                             method=cfg.integration.method)
        manifest.stage("pick_weak_charge", time.perf_counter() - t0)
    else:
        q = float(cfg.prc.charge)
    manifest.note(f"charge_coulombs = {_fmt(q)}")
    return ImpulseSpec(h=h, b=q / h, port=port, mode=cfg.prc.mode)


def _run_sweep(cfg: ExperimentConfig, sys_: OdeSystem, lc: LimitCycle,
               impulse: ImpulseSpec, step: float, n_points: int,
               manifest: _Manifest) -> PrcCurve:
    t0 = time.perf_counter()
    curve = sweep_prc(sys_, lc, impulse, n_points=n_points, step=step,
                      discard_periods=cfg.integration.discard_periods,
                      n_crossings=cfg.integration.crossings,
                      period_tol=cfg.integration.period_tol,
                      method=cfg.integration.method)
    manifest.stage(f"prc_sweep[{n_points}]", time.perf_counter() - t0)
    return curve


def _write_prc(out: Path, curve: PrcCurve) -> None:
    _write_csv(out / "prc.csv", ["t1_seconds", "theta1_rad", "prc_rad"],
               [curve.t1, curve.theta1, curve.prc])


def _write_ppv(out: Path, curves: list[PpvCurve]) -> None:
    theta = np.concatenate([c.theta for c in curves])
    gamma = np.concatenate([c.gamma for c in curves])
    gphase = np.concatenate([c.gamma_phase for c in curves])
    source = sum(([c.source] * len(c.theta) for c in curves), [])
    _write_csv(out / "ppv.csv",
               ["theta_rad", "gamma_s_per_C", "gamma_phase_rad_per_C", "source"],
               [theta, gamma, gphase, source])


def _run_adjoint(cfg: ExperimentConfig, sys_: OdeSystem, lc: LimitCycle,
                 port: InjectionPort, manifest: _Manifest) -> PpvCurve:
    t0 = time.perf_counter()
    curve = adjoint_ppv(sys_, lc, port, periods=cfg.ppv.adjoint_periods,
                        tol=cfg.ppv.adjoint_tol,
                        steps_per_period=cfg.ppv.steps_per_period,
                        harmonics=cfg.ppv.harmonics,
                        norm_tol=cfg.ppv.norm_tol,
                        method=cfg.integration.method)
    manifest.stage("adjoint", time.perf_counter() - t0)
    return curve


def _write_compare(out: Path, a: PpvCurve, b: PpvCurve) -> str:
    rep = compare_ppv(a, b)
    text = "\n".join([
        f"rms_rel = {_fmt(rep.rms_rel)}",
        f"max_rel = {_fmt(rep.max_rel)}",
        f"phase_lag_rad = {_fmt(rep.phase_lag_rad)}",
        f"t0_seconds = {_fmt(a.lc.T0)}",
    ]) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "compare.txt", "w", newline="\n") as fh:
        fh.write(text)
    return text


# ---------------------------------------------------------------------------
# network description files

def _load_ppv_csv(path: Path, source: str | None) -> tuple[np.ndarray, np.ndarray, float]:
    header, rows = _read_csv(path)
    expected = ["theta_rad", "gamma_s_per_C", "gamma_phase_rad_per_C", "source"]
    if header != expected:
        raise ConfigError(f"{path}: expected columns {expected}, got {header}")
    sources = [r[3] for r in rows]
    if source is None:
        source = "adjoint" if "adjoint" in sources else sources[0]
    keep = [r for r in rows if r[3] == source]
    if not keep:
        raise ConfigError(f"{path}: no rows with source={source!r}")
    theta = np.array([float(r[0]) for r in keep])
    gamma = np.array([float(r[1]) for r in keep])
    gphase = np.array([float(r[2]) for r in keep])
    k = int(np.argmax(np.abs(gamma)))
    if gamma[k] == 0.0:
        raise ConfigError(f"{path}: gamma is identically zero; cannot recover omega0")
    omega0 = float(gphase[k] / gamma[k])
    if not omega0 > 0.0:
        raise ConfigError(f"{path}: inconsistent gamma/gamma_phase columns")
    return theta, gamma, omega0


def _load_steady_csv(path: Path) -> np.ndarray:
    header, rows = _read_csv(path)
    if not header or header[0] != "phase_rad":
        raise ConfigError(f"{path}: first column must be phase_rad")
    return np.array([[float(v) for v in r[1:]] for r in rows])


def _load_network(path: Path, harmonics: int = 16) -> PhaseNetwork:
    base = path.parent
    try:
        with open(path, "r") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: cannot parse network file: {exc}") from exc
    if not isinstance(raw, dict) or "oscillators" not in raw:
        raise ConfigError(f"{path}: expected a mapping with an 'oscillators' list")
    unknown = sorted(set(raw) - {"oscillators", "couplings", "injections"})
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}")

    oscillators = []
    for i, entry in enumerate(raw["oscillators"] or []):
        name = f"oscillators[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{path}: {name}: expected a mapping")
        bad = sorted(set(entry) - {"ppv", "steady", "source", "initial_phase_rad"})
        if bad:
            raise ConfigError(f"{path}: {name}: unknown key(s) {bad}")
        for key in ("ppv", "steady"):
            if key not in entry or not isinstance(entry[key], str):
                raise ConfigError(f"{path}: {name}.{key}: required path missing")
        ppv_path = (base / entry["ppv"]).resolve()
        steady_path = (base / entry["steady"]).resolve()
        for p in (ppv_path, steady_path):
            if not p.is_file():
                raise ConfigError(f"{path}: {name}: file not found: {p}")
        theta, gamma, omega0 = _load_ppv_csv(ppv_path, entry.get("source"))
        orbit = _load_steady_csv(steady_path)
        mean_out = float(orbit[:, 0].mean())
        lc = LimitCycle(T0=_TWO_PI / omega0, omega0=omega0,
                        grid_size=orbit.shape[0], orbit=orbit,
                        ref_state_index=0, ref_level=mean_out,
                        mean_output=mean_out)
        n_harm = min(harmonics, (len(theta) - 1) // 2)
        curve = PpvCurve(lc=lc, theta=theta, gamma=gamma,
                         fourier=fit_fourier(theta, gamma, n_harm),
                         source=entry.get("source") or "adjoint")
        phi0 = float(entry.get("initial_phase_rad", 0.0))
        oscillators.append(PhaseOscillator(omega0=omega0, gamma=curve,
                                           alpha=phi0 / omega0))

    couplings = []
    for i, entry in enumerate(raw.get("couplings") or []):
        name = f"couplings[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{path}: {name}: expected a mapping")
        bad = sorted(set(entry) - {"from", "to", "gain"})
        if bad:
            raise ConfigError(f"{path}: {name}: unknown key(s) {bad}")
        try:
            couplings.append(Coupling(source=int(entry["from"]),
                                      target=int(entry["to"]),
                                      kernel=LinearKernel(float(entry["gain"]))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {name}: needs integer 'from'/'to' "
                              f"and numeric 'gain' ({exc})") from exc

    injections = []
    for i, entry in enumerate(raw.get("injections") or []):
        name = f"injections[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{path}: {name}: expected a mapping")
        bad = sorted(set(entry) - {"target", "amp", "freq_rad_per_s", "phase_rad"})
        if bad:
            raise ConfigError(f"{path}: {name}: unknown key(s) {bad}")
        try:
            target = int(entry["target"])
            amp = float(entry["amp"])
            freq = float(entry["freq_rad_per_s"])
            phase = float(entry.get("phase_rad", 0.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {name}: needs target/amp/freq_rad_per_s "
                              f"({exc})") from exc
        injections.append(Injection(
            target=target,
            waveform=_cosine_wave(amp, freq, phase)))

    try:
        return PhaseNetwork(oscillators=oscillators, injections=injections,
                            couplings=couplings)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _cosine_wave(amp: float, freq: float, phase: float):
    def wave(t: float) -> float:
        return amp * math.cos(freq * t + phase)
    return wave


# ---------------------------------------------------------------------------
# subcommand implementations

def _cmd_steady(cfg: ExperimentConfig) -> int:
    manifest = _Manifest(cfg, "steady")
    sys_, _, lc, _ = _prepare_cycle(cfg, manifest)
    _write_steady(cfg.output_dir, sys_, lc)
    manifest.write(cfg.output_dir)
    print(f"T0 = {lc.T0:.9g} s, omega0 = {lc.omega0:.9g} rad/s "
          f"-> {cfg.output_dir / 'steady.csv'}")
    return 0


def _cmd_prc(cfg: ExperimentConfig, n_points: int | None) -> int:
    manifest = _Manifest(cfg, "prc")
    sys_, port, lc, step = _prepare_cycle(cfg, manifest)
    _write_steady(cfg.output_dir, sys_, lc)
    impulse = _make_impulse(cfg, sys_, port, lc, step, manifest)
    curve = _run_sweep(cfg, sys_, lc, impulse, step,
                       n_points or cfg.prc.n_points, manifest)
    _write_prc(cfg.output_dir, curve)
    manifest.write(cfg.output_dir)
    print(f"{len(curve.t1)} PRC points -> {cfg.output_dir / 'prc.csv'}")
    return 0


def _cmd_ppv(cfg: ExperimentConfig, n_points: int | None, compare: bool) -> int:
    do_compare = compare or cfg.ppv.compare
    manifest = _Manifest(cfg, "compare" if do_compare else "ppv")
    sys_, port, lc, step = _prepare_cycle(cfg, manifest)
    _write_steady(cfg.output_dir, sys_, lc)
    impulse = _make_impulse(cfg, sys_, port, lc, step, manifest)
    curve = _run_sweep(cfg, sys_, lc, impulse, step,
                       n_points or cfg.prc.n_points, manifest)
    _write_prc(cfg.output_dir, curve)
    converted = ppv_from_prc(curve, cfg.ppv.harmonics)
    curves = [converted]
    if do_compare:
        adj = _run_adjoint(cfg, sys_, lc, port, manifest)
        curves.append(adj)
        text = _write_compare(cfg.output_dir, converted, adj)
        print(text, end="")
    _write_ppv(cfg.output_dir, curves)
    manifest.write(cfg.output_dir)
    print(f"PPV ({', '.join(c.source for c in curves)}) -> "
          f"{cfg.output_dir / 'ppv.csv'}")
    return 0


def _cmd_adjoint(cfg: ExperimentConfig) -> int:
    manifest = _Manifest(cfg, "adjoint")
    sys_, port, lc, _ = _prepare_cycle(cfg, manifest)
    _write_steady(cfg.output_dir, sys_, lc)
    adj = _run_adjoint(cfg, sys_, lc, port, manifest)
    _write_ppv(cfg.output_dir, [adj])
    manifest.write(cfg.output_dir)
    print(f"adjoint PPV -> {cfg.output_dir / 'ppv.csv'}")
    return 0


def _cmd_lock(cfg: ExperimentConfig) -> int:
    if cfg.lock is None:
        raise ConfigError("lock: section missing from the config file")
    manifest = _Manifest(cfg, "lock")
    sys_, port, lc, step = _prepare_cycle(cfg, manifest)
    if cfg.lock.source == "adjoint":
        gamma = _run_adjoint(cfg, sys_, lc, port, manifest)
    else:
        impulse = _make_impulse(cfg, sys_, port, lc, step, manifest)
        curve = _run_sweep(cfg, sys_, lc, impulse, step, cfg.prc.n_points,
                           manifest)
        gamma = ppv_from_prc(curve, cfg.ppv.harmonics)
    osc = PhaseOscillator(omega0=lc.omega0, gamma=gamma)
    w_inj = lc.omega0 * (1.0 + cfg.lock.detuning_rel)
    t0 = time.perf_counter()
    rep = injection_lock(osc, cfg.lock.amp, w_inj, cfg.lock.horizon_periods)
    manifest.stage("injection_lock", time.perf_counter() - t0)
    adler = adler_lock_range(gamma, cfg.lock.amp)
    lines = [
        f"locked = {str(rep.locked).lower()}",
        f"w_inj_rad_per_s = {_fmt(w_inj)}",
        f"detuning_rad_per_s = {_fmt(w_inj - lc.omega0)}",
        f"adler_range_rad_per_s = {_fmt(adler)}",
        "steady_phase_deg = " + (_fmt(rep.steady_phase_deg)
                                 if rep.steady_phase_deg is not None else "none"),
        "beat_freq_rad_per_s = " + (_fmt(rep.beat_freq)
                                    if rep.beat_freq is not None else "none"),
    ]
    text = "\n".join(lines) + "\n"
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.output_dir / "lock.txt", "w", newline="\n") as fh:
        fh.write(text)
    manifest.write(cfg.output_dir)
    print(text, end="")
    return 0


def _cmd_phasesim(cfg: ExperimentConfig) -> int:
    if cfg.phasesim is None:
        raise ConfigError("phasesim: section missing from the config file")
    manifest = _Manifest(cfg, "phasesim")
    net = _load_network(cfg.phasesim.network, cfg.ppv.harmonics)
    t0 = time.perf_counter()
    trace = simulate_network(net, cfg.phasesim.t_end, cfg.phasesim.dt)
    manifest.stage("simulate_network", time.perf_counter() - t0)
    header = ["t_seconds"]
    cols: list = [trace.times]
    for i in range(len(net.oscillators)):
        header += [f"alpha_{i}_seconds", f"phase_{i}_rad"]
        cols += [trace.alphas[:, i], trace.phases[:, i]]
    _write_csv(cfg.output_dir / "trace.csv", header, cols)
    manifest.write(cfg.output_dir)
    print(f"{len(trace.times)} trace rows ({len(net.oscillators)} oscillators) "
          f"-> {cfg.output_dir / 'trace.csv'}")
    return 0


def _cmd_pipeline(cfg: ExperimentConfig, n_points: int | None) -> int:
    return _cmd_ppv(cfg, n_points, compare=True)


def run_command(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="phasekit",
        description="Phase response extraction and phase-domain macromodeling "
                    "for limit-cycle oscillators.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="experiment config file")
        return p

    add("steady", "settle to the limit cycle and emit steady.csv")
    p = add("prc", "impulse-sweep phase response curve -> prc.csv")
    p.add_argument("--points", type=int, help="override prc.n_points")
    p = add("ppv", "PRC sweep converted to gamma -> ppv.csv")
    p.add_argument("--points", type=int, help="override prc.n_points")
    p.add_argument("--compare", action="store_true",
                   help="also run the adjoint route and emit compare.txt")
    add("adjoint", "adjoint-method gamma only -> ppv.csv")
    add("compare", "run both gamma routes and emit compare.txt")
    add("lock", "injection-locking report from the [lock] config section")
    add("phasesim", "phase-domain network simulation -> trace.csv")
    p = add("pipeline", "steady -> prc -> ppv -> compare")
    p.add_argument("--points", type=int, help="override prc.n_points")

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "steady":
            return _cmd_steady(cfg)
        if args.command == "prc":
            return _cmd_prc(cfg, args.points)
        if args.command == "ppv":
            return _cmd_ppv(cfg, args.points, args.compare)
        if args.command == "adjoint":
            return _cmd_adjoint(cfg)
        if args.command == "compare":
            return _cmd_ppv(cfg, None, compare=True)
        if args.command == "lock":
            return _cmd_lock(cfg)
        if args.command == "phasesim":
            return _cmd_phasesim(cfg)
        if args.command == "pipeline":
            return _cmd_pipeline(cfg, args.points)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    except ValueError as exc:
        print(f"argument error: {exc}", file=_sys.stderr)
        return 2
    except PhasekitError as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return 3


def main() -> None:
    _sys.exit(run_command(_sys.argv[1:]))


if __name__ == "__main__":
    main()
