"""Command-line driver: ``floqsens <experiment> --config run.json [--threads N] [--out DIR]``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

from . import __version__

EXPERIMENTS = (
    "bands",
    "power",
    "evolve",
    "qfi",
    "parity",
    "scaling",
    "loss",
    "bayes",
    "noise",
    "detune",
    "optimize",
    "validate",
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

_NUM = {"type": "number"}
_NUM_LIST = {"type": "array", "items": _NUM, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment", "model"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"type": "string"},
                # energies in units of omega0
                "params": {"type": "object", "additionalProperties": _NUM},
            },
        },
        "input": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["fock", "coherent"]},
                "n_c": {"type": "number", "exclusiveMinimum": 0},
                "phi10": _NUM,
                "phi20": _NUM,
            },
        },
        "grid": {"type": "integer", "minimum": 4},
        "steps_per_tcom": {"type": "integer", "minimum": 100},
        "times": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "truncation": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "drive": {"enum": [1, 2]},
        "theta": {"type": ["number", "null"]},
        "theta_points": {"type": "integer", "minimum": 8},
        "dynamics": {"enum": ["lattice", "fock"]},
        "state": {"enum": ["pes", "noon", "twin_fock"]},
        "total_photons": {"type": "integer", "minimum": 1},
        "etas": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
        "prior_widths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "quadrature_nodes": {"type": "integer", "minimum": 8},
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "strengths"],
            "properties": {
                "kind": {"enum": ["dephasing", "frequency"]},
                "strengths": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "trajectories": {"type": "integer", "minimum": 50},
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "tau": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-3},
                "drive": {"enum": [1, 2]},
            },
        },
        "detunings": {"type": "array", "items": _NUM, "minItems": 1},
        "n_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "points": {"type": "integer", "minimum": 2},
        "description": {"type": "string"},
    },
}


class ConfigError(Exception):
    pass


class NumericalBreach(Exception):
    pass


# ----------------------------------------------------------------- helpers


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool,)):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


def write_table(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def load_config(path: str) -> tuple[dict, str]:
    import jsonschema

    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc
    return cfg, hashlib.sha256(raw).hexdigest()


def _model(cfg):
    from .floquet import model_library

    try:
        return model_library(cfg["model"]["name"], cfg["model"].get("params"))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _grid(cfg, default=128):
    from .opspace import PhaseGrid

    try:
        return PhaseGrid(int(cfg.get("grid", default)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _input(cfg):
    inp = cfg.get("input", {})
    return inp.get("kind", "fock"), float(inp.get("n_c", 30)), float(inp.get("phi10", 0.0)), float(inp.get("phi20", 0.0))


def _field(cfg, grid):
    from .lattice import FieldDistribution

    kind, n_c, p1, p2 = _input(cfg)
    if kind == "fock":
        return FieldDistribution.fock_uniform(grid, n_c)
    return FieldDistribution.coherent(grid, n_c, p1, p2)


def _spectrum(cfg, model, grid):
    from .floquet import quasienergies

    return quasienergies(model, grid, int(cfg.get("steps_per_tcom", 2000)))


def _ancilla(cfg, spectrum, field_dist):
    from .lattice import ancilla_state, functional_power, zero_power_fallback

    drive = int(cfg.get("drive", 2 if spectrum.model.dim == 3 else 1))
    power = functional_power(spectrum, field_dist, drive)
    return ancilla_state(power, fallback=zero_power_fallback(spectrum.model.h0)), power


def _times(cfg, default=(1, 2, 4, 8, 16)):
    return [float(t) for t in cfg.get("times", default)]


def _periods(cfg, default=(1, 2, 4, 8, 16)):
    out = []
    for t in _times(cfg, default):
        if abs(t - round(t)) > 1e-9:
            raise ConfigError("lattice times must be whole numbers of T_com")
        out.append(int(round(t)))
    return out


def _offsets(cfg):
    _, n_c, _, _ = _input(cfg)
    return (int(round(n_c)), int(round(n_c)))


# ------------------------------------------------------------- experiments


def run_bands(cfg, out: Path) -> list[str]:
    model = _model(cfg)
    sp = _spectrum(cfg, model, _grid(cfg, 64))
    sp.to_csv(out / "bands.csv")
    return ["bands.csv"]


def run_power(cfg, out: Path) -> list[str]:
    from .lattice import functional_power
    from .metrology import functional_q

    model = _model(cfg)
    grid = _grid(cfg, 64)
    sp = _spectrum(cfg, model, grid)
    f = _field(cfg, grid)
    s, _ = _ancilla(cfg, sp, f)
    rows = []
    for j in (1, 2):
        p = functional_power(sp, f, j)
        p2 = float(sum(v**2 for v in p.eigenvalues)) / model.dim
        q = functional_q(sp, f) if model.dim == 2 else float("nan")
        for n, val in enumerate(p.eigenvalues):
            rows.append([j, n, val, p2, q])
    write_table(out / "power.csv", ["drive", "index", "eigenvalue", "mean_square", "q_functional"], rows)
    write_table(out / "ancilla.csv", ["level", "re", "im"], [[i, z.real, z.imag] for i, z in enumerate(s)])
    return ["power.csv", "ancilla.csv"]


def run_evolve(cfg, out: Path) -> list[str]:
    from .lattice import evolve_lattice, profile_rows

    model = _model(cfg)
    grid = _grid(cfg)
    sp = _spectrum(cfg, model, grid)
    f = _field(cfg, grid)
    s, _ = _ancilla(cfg, sp, f)
    states = [evolve_lattice(sp, f, s, k, _offsets(cfg)) for k in _periods(cfg)]
    write_table(out / "profile.csv", ["t_com", "n2", "probability"], profile_rows(states))
    return ["profile.csv"]


def run_qfi(cfg, out: Path) -> list[str]:
    from .metrology import sensing_report

    model = _model(cfg)
    grid = _grid(cfg)
    sp = _spectrum(cfg, model, grid)
    f = _field(cfg, grid)
    s, _ = _ancilla(cfg, sp, f)
    rep = sensing_report(sp, f, s, _periods(cfg), {"model": model.name})
    rep.to_csv(out / "qfi.csv")
    return ["qfi.csv"]


def _pes_series(cfg):
    from .metrology import lattice_pes

    model = _model(cfg)
    grid = _grid(cfg)
    sp = _spectrum(cfg, model, grid)
    f = _field(cfg, grid)
    s, _ = _ancilla(cfg, sp, f)
    ks = _periods(cfg)
    return model, sp, f, ks, [lattice_pes(sp.propagator_power(k), f, s, _offsets(cfg))[0] for k in ks]


def run_parity(cfg, out: Path) -> list[str]:
    from .readout import default_theta_grid, parity_curve

    _, _, _, ks, states = _pes_series(cfg)
    grid = default_theta_grid(int(cfg.get("theta_points", 512)))
    rows = []
    for k, st in zip(ks, states):
        cv = parity_curve(st, grid)
        for i in range(len(grid)):
            rows.append(
                [k, cv.theta[i], cv.parity[i].real, cv.parity[i].imag, cv.dparity[i], cv.fisher[i], cv.delta_theta[i], int(cv.flagged[i])]
            )
    write_table(
        out / "parity.csv",
        ["t_com", "theta_tilde", "parity_re", "parity_im", "dparity", "fisher", "delta_theta", "flag"],
        rows,
    )
    return ["parity.csv"]


def run_scaling(cfg, out: Path) -> list[str]:
    from .readout import EXPONENT_CLASS, best_verdict, classify_critical_points, default_theta_grid, sensitivity_scaling

    model, sp, f, ks, states = _pes_series(cfg)
    theta = cfg.get("theta")
    grid = default_theta_grid(int(cfg.get("theta_points", 512)))
    fit = sensitivity_scaling(states, [k * model.t_com for k in ks], theta, grid)
    horizon = max(ks) * model.t_com
    prof = (
        classify_critical_points(sp, float(theta), f, horizon=horizon)
        if theta is not None
        else best_verdict(sp, f, horizon=horizon)
    )
    write_table(
        out / "scaling.csv",
        ["t_com", "theta_tilde", "delta_theta"],
        [[k, th, dt] for k, th, dt in zip(ks, fit.theta, fit.delta_theta)],
    )
    summary = {
        "exponent": fit.exponent,
        "r_squared": fit.r_squared,
        "excluded": fit.excluded,
        "verdict": prof.verdict,
        "verdict_theta": prof.theta,
        "exponent_class": EXPONENT_CLASS[prof.verdict],
    }
    (out / "scaling.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=_fmt) + "\n")
    return ["scaling.csv", "scaling.json"]


def _reference_state(cfg):
    """Probe state for loss and Bayesian runs."""
    from .opspace import noon_state, twin_fock_state

    kind = cfg.get("state", "pes")
    n_tot = int(cfg.get("total_photons", 12))
    if kind == "noon":
        return noon_state(n_tot), n_tot
    if kind == "twin_fock":
        return twin_fock_state(n_tot), n_tot
    from .fock import coherent_or_fock_input, evolve_fock, pes_fock, quantize

    model = _model(cfg)
    grid = _grid(cfg, 64)
    sp = _spectrum(cfg, model, grid)
    f = _field(cfg, grid)
    s, _ = _ancilla(cfg, sp, f)
    kind_in, n_c, p1, p2 = _input(cfg)
    qm = quantize(model, n_c, n_c, cfg.get("truncation"))
    st = coherent_or_fock_input(kind_in, n_c, qm.n_max, s, p1, p2)
    t = _times(cfg, (8,))[-1] * model.t_com
    pes, _ = pes_fock(evolve_fock(qm, st, t), s)
    return pes, qm.n_max


def run_loss(cfg, out: Path) -> list[str]:
    from .channels import loss_sweep, write_loss_csv

    state, n_max = _reference_state(cfg)
    etas = cfg.get("etas", [1.0, 0.95, 0.9, 0.8, 0.7, 0.5])
    write_loss_csv(out / "loss.csv", loss_sweep(state, etas, n_max))
    return ["loss.csv"]


def run_bayes(cfg, out: Path) -> list[str]:
    from .channels import PriorModel, bayesian_improvement

    state, n_max = _reference_state(cfg)
    nodes = int(cfg.get("quadrature_nodes", 64))
    rows = []
    for w in cfg.get("prior_widths", [0.01, 0.02, 0.05, 0.1, 0.2, 0.3]):
        r = bayesian_improvement(state, PriorModel.gaussian(float(w), nodes), n_max)
        rows.append([w, r.posterior_variance, r.delta_theta_m])
    write_table(out / "bayes.csv", ["delta_theta_prior", "posterior_variance", "delta_theta_m"], rows)
    return ["bayes.csv"]


def run_noise(cfg, out: Path) -> list[str]:
    from .channels import NoiseSpec, noisy_energy_transfer
    from .floquet import qubit_power_states
    from .lattice import FieldDistribution, functional_power

    model = _model(cfg)
    _, _, p1, p2 = _input(cfg)
    grid = _grid(cfg, 16)
    nz = cfg.get("noise")
    if nz is None:
        raise ConfigError("noise experiment needs a 'noise' block")
    sp = _spectrum(cfg, model, grid)
    delta = FieldDistribution.coherent_delta(grid, p1, p2)
    drive = int(cfg.get("drive", 2))
    pw = functional_power(sp, delta, drive)
    if model.dim != 2 or pw.is_zero:
        raise ConfigError("noise runs need a qubit model with nonzero power at the chosen phases")
    psi, _ = qubit_power_states(pw.matrix)
    phases = (grid.axis[grid.index_of(p1)], grid.axis[grid.index_of(p2)])
    rows, summary = [], []
    seed = int(cfg.get("seed", 0))
    for s in nz["strengths"]:
        spec = NoiseSpec(nz["kind"], float(s), float(nz.get("tau", 1e-3)), seed=seed, drive=int(nz.get("drive", 2)))
        res = noisy_energy_transfer(
            model, phases, psi, spec, int(nz.get("trajectories", 50)), float(nz.get("horizon", 40.0)), record_every=100
        )
        for row in zip(res.times, res.mean1, res.err1, res.mean2, res.err2):
            rows.append([s, row[0] / model.t_com, *row[1:]])
        summary.append([s, res.stop_time(drive) / model.t_com])
    write_table(out / "noise.csv", ["strength", "t_com", "E1_mean", "E1_err", "E2_mean", "E2_err"], rows)
    write_table(out / "noise_stop.csv", ["strength", "stop_t_com"], summary)
    return ["noise.csv", "noise_stop.csv"]


def run_detune(cfg, out: Path) -> list[str]:
    from .channels import detuned_parity

    model = _model(cfg)
    grid = _grid(cfg)
    sp = _spectrum(cfg, model, grid)
    f = _field(cfg, grid)
    s, _ = _ancilla(cfg, sp, f)
    ks = _periods(cfg)
    theta = cfg.get("theta")
    steps = int(cfg.get("steps_per_tcom", 1024))
    base = detuned_parity(model, 0.0, f, s, ks, theta, _offsets(cfg), steps)
    rows, onset = [], []
    for dw in cfg.get("detunings", [0.01, 0.02, 0.04, 0.06]):
        ser = base if dw == 0 else detuned_parity(model, float(dw), f, s, ks, theta, _offsets(cfg), steps)
        for k, b, v in zip(ks, base.delta_theta, ser.delta_theta):
            rows.append([dw, k, b, v])
        onset.append([dw, ser.onset(base)])
    write_table(out / "detune.csv", ["delta_omega", "t_com", "delta_theta_tuned", "delta_theta_detuned"], rows)
    write_table(out / "detune_onset.csv", ["delta_omega", "onset_t_com"], onset)
    return ["detune.csv", "detune_onset.csv"]


def run_optimize(cfg, out: Path) -> list[str]:
    import itertools

    from .metrology import fock_phase_landscape, optimize_ancilla_phases

    model = _model(cfg)
    grid = _grid(cfg, 64)
    sp = _spectrum(cfg, model, grid)
    f = _field(cfg, grid)
    _, power = _ancilla(cfg, sp, f)
    k = _times(cfg, (10,))[-1]
    points = int(cfg.get("points", 16))
    if cfg.get("dynamics", "lattice") == "fock":
        from .fock import quantize

        kind, n_c, p1, p2 = _input(cfg)
        qm = quantize(model, n_c, n_c, cfg.get("truncation"))
        res = fock_phase_landscape(qm, power, kind, k, points, p1, p2)
    else:
        res = optimize_ancilla_phases(sp, f, int(round(k)), power.drive, points, power=power)
    tc2 = model.t_com**2
    rows = []
    for idx in itertools.product(range(points), repeat=res.landscape.ndim):
        rows.append([*[res.axes[i][j] for i, j in enumerate(idx)], res.landscape[idx], res.landscape[idx] * tc2])
    head = [f"beta{i + 1}" for i in range(res.landscape.ndim)] + ["fq_over_t2", "fq_over_t2_tcom_units"]
    write_table(out / "optimize.csv", head, rows)
    write_table(out / "optimize_summary.csv", ["best_rate", "spread_ratio"], [[res.best_rate, res.spread_ratio]])
    return ["optimize.csv", "optimize_summary.csv"]


def run_validate(cfg, out: Path) -> list[str]:
    from .fock import coherent_or_fock_input, evolve_fock, pes_fock, quantize
    from .metrology import lattice_pes, qfi_pure

    model = _model(cfg)
    grid = _grid(cfg, 256)
    sp = _spectrum(cfg, model, grid)
    f = _field(cfg, grid)
    s, _ = _ancilla(cfg, sp, f)
    kind, _, p1, p2 = _input(cfg)
    ks = _periods(cfg, (1, 2, 4, 6, 8))
    rows = []
    for n_c in cfg.get("n_values", [10]):
        qm = quantize(model, n_c, n_c, cfg.get("truncation"))
        st = coherent_or_fock_input(kind, n_c, qm.n_max, s, p1, p2)
        fock_states = evolve_fock(qm, st, max(ks) * model.t_com, checkpoints=[k * model.t_com for k in ks])
        for k, fs in zip(ks, fock_states):
            lat, _ = lattice_pes(sp.propagator_power(k), f, s, (int(round(n_c)), int(round(n_c))))
            a = math.sqrt(qfi_pure(lat))
            b = math.sqrt(qfi_pure(pes_fock(fs, s)[0]))
            rows.append([n_c, k, a, b, abs(b - a) / a if a > 0 else float("nan")])
    worst = {}
    for r in rows:
        worst[r[0]] = max(worst.get(r[0], 0.0), r[4])
    write_table(
        out / "validate.csv",
        ["n_c", "t_com", "sqrt_fq_lattice", "sqrt_fq_fock", "rel_dev", "max_rel_dev"],
        [r + [worst[r[0]]] for r in rows],
    )
    return ["validate.csv"]


RUNNERS = {name: globals()[f"run_{name}"] for name in EXPERIMENTS}


# ---------------------------------------------------------------- commands


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("FLOQSENS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"FLOQSENS_THREADS must be an integer, got {env!r}") from None
    return 1


def run(config_path: str, out_dir: str | None, threads: int | None, expected: str | None = None) -> int:
    t0 = time.perf_counter()
    try:
        cfg, digest = load_config(config_path)
        if expected and cfg["experiment"] != expected:
            raise ConfigError(f"config describes a {cfg['experiment']!r} run, not {expected!r}")
        n_threads = _threads(threads)
        # numerical libraries read these at first use; results do not depend on them
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(n_threads))
        out = Path(out_dir or ".")
        try:
            out.mkdir(parents=True, exist_ok=True)
            probe = out / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory not writable: {exc}") from exc
        from .fock import TruncationError
        from .floquet import CommensurabilityError, TrackingError
        from .lattice import ZeroPowerError

        try:
            files = RUNNERS[cfg["experiment"]](cfg, out)
        except (TruncationError, TrackingError) as exc:
            raise NumericalBreach(str(exc)) from exc
        except (CommensurabilityError, ZeroPowerError, ValueError) as exc:
            # parameter validation inside the library surfaces as ValueError
            raise ConfigError(str(exc)) from exc
    except ConfigError as exc:
        print(f"floqsens: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBreach as exc:
        print(f"floqsens: numerical breach: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    manifest = {
        "config": str(config_path),
        "config_sha256": digest,
        "experiment": cfg["experiment"],
        "version": __version__,
        "seed": cfg.get("seed", 0),
        "threads": n_threads,
        "outputs": files,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"floqsens: {cfg['experiment']} finished; outputs in {out}")
    return EXIT_OK


def list_models(name: str | None = None, stream=None) -> int:
    from .floquet import MODEL_ANCHORS, MODEL_DEFAULTS, _suggest

    stream = stream or sys.stdout
    if name is not None and name not in MODEL_ANCHORS:
        hint = _suggest(name)
        msg = f"floqsens: unknown model {name!r}" + (f"; did you mean {hint!r}?" if hint else "")
        print(msg, file=sys.stderr)
        return EXIT_CONFIG
    names = [name] if name else list(MODEL_ANCHORS)
    stream.write(f"{'model':<14}{'parameters (defaults)':<58}anchor\n")
    for n in names:
        params = ", ".join(f"{k}={v:g}" for k, v in MODEL_DEFAULTS[n].items())
        stream.write(f"{n:<14}{params:<58}{MODEL_ANCHORS[n]}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floqsens", description="Two-tone Floquet quantum sensing experiments.")
    p.add_argument("--version", action="version", version=f"floqsens {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run",) + EXPERIMENTS:
        sp = sub.add_parser(name, help="run the experiment described by the config" if name == "run" else f"{name} experiment")
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: FLOQSENS_THREADS or 1)")
        sp.add_argument("--out", default=None, help="output directory (default: current directory)")
    lm = sub.add_parser("list-models", help="print the model gallery")
    lm.add_argument("name", nargs="?", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-models":
        return list_models(args.name)
    if args.threads is not None and args.threads < 1:
        print("floqsens: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.config, args.out, args.threads, None if args.command == "run" else args.command)


if __name__ == "__main__":
    sys.exit(main())
