"""Command-line front end: experiment orchestration and data-file emission.

Output is data first (CSV plus JSON mirrors with metadata); plotting is left
to external tools.  Every run writes a manifest listing each output file with
its content hash, and identical configuration plus seed reproduces CSV files
byte for byte.  Frequencies named ``*_MHz``/``*_GHz`` are cyclic (value over
2 pi); everything else is expressed in units of the coupling J.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError
from .lattice import (
    PI,
    LatticeConfig,
    build_lattice,
    lattice_to_dict,
    load_lattice,
    site_labels,
)
from .dynamics import (
    PopulationTrace,
    StateVector,
    antisymmetric_detunings,
    effective_model,
    evolve_amplitudes,
    evolve_lattice,
    pm_transform_matrix,
)
from .open_system import DephasingRates
from .protocols import (
    SpectroscopyConfig,
    adiabatic_prepare,
    analytic_plaquette_populations,
    schedule_from_json,
    schedule_to_json,
    spectroscopy,
    two_stage_ramp,
)
from .bands import band_structure, rhombic_bloch_model, trimer_bloch_model, zak_phase
from .device import (
    CouplerSpec,
    CrosstalkMatrix,
    coupler_off_frequency,
    crosstalk_correct,
    crosstalk_fit,
    g_eff,
    load_device,
    simulate_compensation_data,
    three_mode_vacuum_rabi,
)

SQRT2 = math.sqrt(2.0)


def data_path(name: str) -> Path:
    """Path of a sample configuration file shipped with the package."""
    return Path(str(resources.files("fluxlattice.data").joinpath(name)))


# ---------------------------------------------------------------------------
# Small parsing and output helpers
# ---------------------------------------------------------------------------


def parse_pi_multiple(text: str) -> float:
    """Parse values such as ``4pi``, ``pi`` or plain floats."""
    token = text.strip().lower().replace(" ", "")
    if token.endswith("pi"):
        head = token[:-2]
        return (float(head) if head else 1.0) * PI
    return float(token)


def parse_flux(text: str) -> float:
    token = text.strip().lower()
    if token in ("pi", "3.141592653589793"):
        return PI
    if token in ("0", "0.0"):
        return 0.0
    raise ConfigError(f"flux must be 0 or pi, got {text!r}")


def parse_delta_token(token: str) -> float:
    """Detunings in units of J; ``sqrt2`` and multiples like ``2sqrt2`` allowed."""
    t = token.strip().lower()
    if t.endswith("sqrt2"):
        head = t[: -len("sqrt2")]
        return (float(head) if head else 1.0) * SQRT2
    return float(t)


def parse_range(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"expected start:stop:count, got {text!r}")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1:
        raise ConfigError("range count must be at least 1")
    return np.linspace(start, stop, count)


def _slug(token: str) -> str:
    return token.strip().replace(".", "p").replace("-", "m")


def write_csv(path: Path, header: Sequence[str], rows: np.ndarray) -> None:
    lines = [",".join(header)]
    for row in np.atleast_2d(rows):
        lines.append(",".join(f"{v:.12e}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, doc: Mapping) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunContext:
    """Collects output files and writes the run manifest at the end."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.outdir = Path(args.outdir)
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.seed = args.seed
        self.jobs = args.jobs
        self.args = {
            k: v for k, v in vars(args).items() if k not in ("func",) and v is not None
        }
        self.outputs: list[Path] = []
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        p = self.outdir / name
        self.outputs.append(p)
        return p

    def finish(self, extra: Mapping | None = None) -> int:
        manifest = {
            "schema": 1,
            "tool": "fluxlattice",
            "version": __version__,
            "command": self.command,
            "args": {k: str(v) for k, v in self.args.items()},
            "seed": self.seed,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "wall_time_s": round(time.perf_counter() - self.t0, 6),
            "outputs": [
                {"path": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size}
                for p in self.outputs
            ],
        }
        if extra:
            manifest.update(extra)
        write_json(self.outdir / "run_manifest.json", manifest)
        return 0


def _map_indexed(fn: Callable, items: Sequence, jobs: int) -> list:
    """Apply ``fn`` over items, optionally on a process pool; order is by index."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _resolve_lattice(args) -> LatticeConfig:
    if getattr(args, "lattice", None):
        return load_lattice(args.lattice)
    l = getattr(args, "l", None)
    if l is None:
        raise ConfigError("give either --lattice FILE or --l/--flux")
    flux = parse_flux(getattr(args, "flux", "pi"))
    return LatticeConfig(
        build_lattice(l, [flux] * l), getattr(args, "j_mhz", None), None
    )


def _trace_metadata(config: LatticeConfig, init: str, delta: float) -> dict:
    return {
        "lattice": lattice_to_dict(config),
        "config_hash": config.config_hash(),
        "fluxes": lattice_to_dict(config)["fluxes"],
        "delta_antisym_over_J": delta,
        "init": init,
        "J_MHz": config.J_MHz,
    }


def _write_trace(ctx: RunContext, stem: str, trace: PopulationTrace, meta: dict) -> None:
    trace.write_csv(ctx.path(f"{stem}.csv"))
    write_json(ctx.path(f"{stem}.json"), trace.to_json_dict(meta))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_dynamics(args) -> int:
    ctx = RunContext("dynamics", args)
    config = _resolve_lattice(args)
    lattice = config.lattice
    delta = parse_delta_token(args.delta_antisym) if args.delta_antisym else 0.0
    if delta:
        lattice = lattice.with_detunings(antisymmetric_detunings(lattice.l, delta))
    times = np.linspace(0.0, parse_pi_multiple(args.tmax), args.points)
    trace = evolve_lattice(lattice, args.init, times)
    _write_trace(ctx, "dynamics", trace, _trace_metadata(config, args.init, delta))
    return ctx.finish()


def _sweep_point(task, l, init, times):
    flux, delta = task
    lattice = build_lattice(l, [flux] * l, antisymmetric_detunings(l, delta))
    return evolve_lattice(lattice, init, times)


def cmd_detuning_sweep(args) -> int:
    ctx = RunContext("detuning-sweep", args)
    fluxes = [0.0, PI] if args.flux == "both" else [parse_flux(args.flux)]
    tokens = [t for t in args.delta.split(",") if t]
    deltas = [(t, parse_delta_token(t)) for t in tokens]
    times = np.linspace(0.0, parse_pi_multiple(args.tmax), args.points)
    tasks = [(flux, value) for flux in fluxes for _, value in deltas]
    traces = _map_indexed(partial(_sweep_point, l=args.l, init=args.init, times=times), tasks, ctx.jobs)
    idx = 0
    for flux in fluxes:
        for token, value in deltas:
            tag = "pi" if flux == PI else "0"
            stem = f"sweep_phi{tag}_delta{_slug(token)}"
            config = LatticeConfig(
                build_lattice(args.l, [flux] * args.l, antisymmetric_detunings(args.l, value)),
                args.j_mhz,
                None,
            )
            _write_trace(ctx, stem, traces[idx], _trace_metadata(config, args.init, value))
            idx += 1
    return ctx.finish()


def cmd_spectroscopy(args) -> int:
    ctx = RunContext("spectroscopy", args)
    config = _resolve_lattice(args)
    spec_config = SpectroscopyConfig(
        drive_site=args.drive,
        drive_amplitude=args.omega,
        drive_detunings=parse_range(args.delta_range),
        duration=parse_pi_multiple(args.duration),
    )
    result = spectroscopy(config.lattice, spec_config)
    result.write_csv(ctx.path("spectroscopy.csv"))
    write_json(
        ctx.path("spectroscopy.json"),
        {
            "schema": 1,
            "drive_site": args.drive,
            "drive_amplitude_over_J": args.omega,
            "duration_J": parse_pi_multiple(args.duration),
            "peaks_over_J": list(result.detected_peaks),
            "lattice": lattice_to_dict(config),
        },
    )
    return ctx.finish()


def cmd_adiabatic(args) -> int:
    ctx = RunContext("adiabatic", args)
    conf: dict = {}
    if args.config:
        conf = json.loads(Path(args.config).read_text())
    l = args.l if args.l is not None else int(conf.get("l", 1))
    flux = parse_flux(args.flux if args.flux else str(conf.get("flux", "pi")))
    init = args.init or conf.get("init", "A,1")
    duration = args.duration if args.duration is not None else float(conf.get("duration_over_J", 30.0))
    d0 = args.initial_detuning if args.initial_detuning is not None else float(
        conf.get("initial_detuning_over_J", -4.0)
    )
    j_mhz = args.j_mhz if args.j_mhz is not None else conf.get("J_MHz")
    tphis: list[float] = []
    if args.dephasing_us:
        tphis = [float(t) for t in args.dephasing_us.split(",") if t]
    elif "dephasing_us" in conf:
        entry = conf["dephasing_us"]
        tphis = [float(entry)] if not isinstance(entry, list) else [float(t) for t in entry]
    if tphis and not j_mhz:
        raise ConfigError("dephasing in microseconds needs --j-mhz to fix the time unit")

    lattice = build_lattice(l, [flux] * l)
    if args.schedule:
        schedule = schedule_from_json(json.loads(Path(args.schedule).read_text()))
    else:
        schedule = two_stage_ramp(lattice, init, duration, d0)
    closed = adiabatic_prepare(lattice, schedule, init)
    labels = site_labels(l)
    report = {
        "schema": 1,
        "l": l,
        "flux": "pi" if flux == PI else 0,
        "init": init,
        "duration_over_J": schedule.total_duration,
        "schedule": schedule_to_json(schedule),
        "J_MHz": j_mhz,
        "closed": {
            "final_gs_overlap": closed.final_gs_overlap,
            "population_fidelity": closed.population_fidelity,
            "final_populations": dict(zip(labels, closed.final_populations.tolist())),
            "ground_populations": dict(zip(labels, closed.ground_populations.tolist())),
        },
        "dephasing": [],
    }
    fid_columns = {"closed": closed.gs_fidelity}
    for tphi in tphis:
        gamma_over_j = 1.0 / (tphi * 2 * PI * j_mhz)
        open_run = adiabatic_prepare(
            lattice, schedule, init, DephasingRates.uniform(lattice.num_sites, gamma_over_j)
        )
        report["dephasing"].append(
            {
                "T_phi_us": tphi,
                "gamma_over_J": gamma_over_j,
                "final_gs_overlap": open_run.final_gs_overlap,
                "population_fidelity": open_run.population_fidelity,
                "population_fidelity_raw": open_run.population_fidelity_raw,
                "final_populations": dict(zip(labels, open_run.final_populations.tolist())),
            }
        )
        fid_columns[f"tphi_{tphi:g}us"] = open_run.gs_fidelity
    write_json(ctx.path("adiabatic.json"), report)
    rows = np.column_stack([closed.times, *fid_columns.values()])
    write_csv(ctx.path("ramp_fidelity.csv"), ["Jt", *fid_columns.keys()], rows)
    return ctx.finish()


def cmd_bands(args) -> int:
    ctx = RunContext("bands", args)
    if args.model == "rhombic":
        model = rhombic_bloch_model(1.0, parse_flux(args.flux))
        tag = "rhombic_phi" + ("pi" if parse_flux(args.flux) == PI else "0")
    else:
        delta = args.delta_over_sqrt2j * SQRT2
        model = trimer_bloch_model(1.0, delta)
        tag = f"trimer_delta{_slug(str(args.delta_over_sqrt2j))}sqrt2"
    bs = band_structure(model, args.nk)
    write_csv(
        ctx.path(f"bands_{tag}.csv"),
        ["k", *(f"E{i + 1}" for i in range(bs.num_bands))],
        np.column_stack([bs.k_grid, bs.energies]),
    )
    write_json(
        ctx.path("bands.json"),
        {
            "schema": 1,
            "model": args.model,
            "parameters": dict(model.parameters),
            "bandwidths_over_J": bs.bandwidths().tolist(),
        },
    )
    return ctx.finish()


def _zak_point(factor: float, band: int, nk: int) -> dict:
    result = zak_phase(trimer_bloch_model(1.0, factor * SQRT2), band, nk)
    return {
        "delta_over_sqrt2J": factor,
        "band": band,
        "zak_raw": result.raw,
        "zak_snapped": result.snapped,
        "min_gap_over_J": result.min_gap,
    }


def cmd_zak(args) -> int:
    ctx = RunContext("zak", args)
    factors = parse_range(args.delta_range)
    points = _map_indexed(partial(_zak_point, band=args.band, nk=args.nk), list(factors), ctx.jobs)
    write_json(ctx.path("zak.json"), {"schema": 1, "n_k": args.nk, "points": points})
    return ctx.finish()


def cmd_coupler_calibrate(args) -> int:
    ctx = RunContext("coupler-calibrate", args)
    device = load_device(args.device or data_path("sample_device.json"))
    lo, hi, count = device.sweep_window
    if args.sweep:
        grid = parse_range(args.sweep)
    else:
        grid = np.linspace(lo, hi, count)
    rows = []
    import warnings as _warnings

    for omega_c in grid:
        spec = CouplerSpec(
            device.coupler.omega_a,
            device.coupler.omega_b,
            float(omega_c),
            device.coupler.g_ac,
            device.coupler.g_bc,
            device.coupler.g_ab,
            device.coupler.u_a,
            device.coupler.u_b,
            device.coupler.u_c,
        )
        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore")
            formula = g_eff(spec)
            extraction = three_mode_vacuum_rabi(spec, args.levels)
        rows.append([omega_c, formula * 1e3, extraction.value * 1e3, extraction.sign])
    write_csv(
        ctx.path("coupler_sweep.csv"),
        ["omega_c_GHz", "g_eff_formula_MHz", "g_extracted_MHz", "sign"],
        np.array(rows),
    )
    off = coupler_off_frequency(device.coupler, (grid[0], grid[-1]))
    data = np.array(rows)
    # Relative agreement is meaningless near the zero crossing; compare where
    # the coupling is an appreciable fraction of its maximum.
    strong = np.abs(data[:, 1]) > 0.25 * np.abs(data[:, 1]).max()
    agreement = float(
        np.max(np.abs(data[strong, 2] - data[strong, 1]) / np.abs(data[strong, 1]))
    )
    write_json(
        ctx.path("coupler.json"),
        {
            "schema": 1,
            "off_frequency_GHz": off,
            "max_relative_disagreement": agreement,
            "sign_change": bool(data[0, 2] * data[-1, 2] < 0),
        },
    )
    return ctx.finish()


def _read_response_csv(path: Path) -> dict[tuple[str, str], list[tuple[float, float]]]:
    groups: dict[tuple[str, str], list[tuple[float, float]]] = {}
    lines = path.read_text().strip().splitlines()
    for line in lines[1:]:
        source, target, s_zpa, t_zpa = line.split(",")
        groups.setdefault((source, target), []).append((float(s_zpa), float(t_zpa)))
    return groups


def cmd_crosstalk_fit(args) -> int:
    ctx = RunContext("crosstalk-fit", args)
    rng = np.random.default_rng(ctx.seed)
    truth = None
    if args.responses:
        groups = _read_response_csv(Path(args.responses))
        labels = sorted({k for pair in groups for k in pair})
    else:
        n = args.lines
        labels = [f"Z{i + 1}" for i in range(n)]
        truth = rng.normal(6e-4, 1e-4, size=(n, n))
        np.fill_diagonal(truth, 1.0)
        source_values = np.linspace(-1.0, 1.0, args.points)
        groups = {}
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                data = simulate_compensation_data(truth[i, j], source_values, args.noise, rng)
                groups[(labels[j], labels[i])] = [tuple(row) for row in data]
    index = {label: i for i, label in enumerate(labels)}
    matrix = np.eye(len(labels))
    for (source, target), points in groups.items():
        matrix[index[target], index[source]] = crosstalk_fit(points)
    cm = CrosstalkMatrix(matrix, tuple(labels))
    write_csv(ctx.path("crosstalk_matrix.csv"), list(labels), matrix)
    probe = rng.normal(size=len(labels))
    corrected = crosstalk_correct(cm, probe)
    roundtrip = float(np.abs(cm.matrix @ corrected - probe).max())
    report = {
        "schema": 1,
        "labels": labels,
        "condition_number": cm.condition_number(),
        "roundtrip_error": roundtrip,
    }
    if truth is not None:
        report["max_element_error"] = float(
            np.abs(matrix - truth)[~np.eye(len(labels), dtype=bool)].max()
        )
    write_json(ctx.path("crosstalk_fit.json"), report)
    return ctx.finish()


def compare_against_reference(trace: PopulationTrace, metadata: Mapping, oracle: str, tolerance: float = 1e-8) -> dict:
    """Deviation report of a stored trace against an independent prediction."""
    lattice_doc = metadata.get("lattice")
    init = metadata.get("init")
    if lattice_doc is None or init is None:
        raise ConfigError("trace metadata lacks the lattice definition or init site")
    from .lattice import lattice_from_dict

    config = lattice_from_dict(lattice_doc)
    lattice = config.lattice
    delta = float(metadata.get("delta_antisym_over_J", 0.0))
    if delta:
        lattice = lattice.with_detunings(antisymmetric_detunings(lattice.l, delta))
    if trace.num_sites != lattice.num_sites:
        raise ConfigError(
            f"trace has {trace.num_sites} sites but the lattice has {lattice.num_sites}"
        )
    if oracle == "analytic_l1":
        if lattice.l != 1:
            raise ConfigError("the closed-form oracle applies to the single plaquette only")
        fluxes = lattice_doc["fluxes"]
        flux = PI if fluxes[0] == "pi" else 0.0
        expected = analytic_plaquette_populations(flux, init, trace.times)
    elif oracle == "effective_model":
        model = effective_model(lattice, delta)
        w = pm_transform_matrix(lattice.num_sites)
        psi0 = StateVector.from_site(lattice, init).amplitudes
        states_pm = evolve_amplitudes(model.hamiltonian(), w @ psi0, trace.times)
        expected = np.abs(states_pm @ w) ** 2
    else:
        raise ConfigError(f"unknown oracle {oracle!r}")
    deviation = np.abs(trace.populations - expected)
    return {
        "schema": 1,
        "oracle": oracle,
        "max_deviation": float(deviation.max()),
        "mean_deviation": float(deviation.mean()),
        "tolerance": tolerance,
        "passed": bool(deviation.max() < tolerance),
    }


def cmd_verify(args) -> int:
    ctx = RunContext("verify", args)
    doc = json.loads(Path(args.trace).read_text())
    trace = PopulationTrace.from_json_dict(doc)
    report = compare_against_reference(
        trace, doc.get("metadata", {}), args.oracle, args.tolerance
    )
    write_json(ctx.path("verify_report.json"), report)
    ctx.finish()
    if not report["passed"]:
        raise NumericalError(
            f"trace deviates from the {args.oracle} oracle by {report['max_deviation']:.3e} "
            f"(tolerance {args.tolerance:g})"
        )
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--outdir", default="out", help="output directory")
    sub.add_argument("--seed", type=int, default=0, help="seed for synthetic-noise fits")
    sub.add_argument(
        "--jobs",
        type=int,
        default=int(os.environ.get("FLUXLATTICE_JOBS", "1")),
        help="worker processes for sweeps (env FLUXLATTICE_JOBS)",
    )


def _add_lattice_source(sub: argparse.ArgumentParser, default_l: int | None = None) -> None:
    sub.add_argument("--lattice", help="lattice definition JSON file")
    sub.add_argument("--l", type=int, default=default_l, help="number of plaquettes")
    sub.add_argument("--flux", default="pi", help="uniform plaquette flux: 0 or pi")
    sub.add_argument("--j-mhz", type=float, default=None, help="coupling J/2pi in MHz")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluxlattice",
        description="Rhombic flux-lattice simulations: dynamics, spectroscopy, "
        "adiabatic preparation, band topology, and the coupler device layer.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("dynamics", help="closed-system population dynamics")
    _add_lattice_source(p)
    p.add_argument("--init", default="A,2", help="initially excited site, e.g. A,2")
    p.add_argument("--tmax", default="4pi", help="final Jt (accepts e.g. 4pi)")
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--delta-antisym", default=None, help="anti-symmetric detuning in J (e.g. sqrt2)")
    _add_common(p)
    p.set_defaults(func=cmd_dynamics)

    p = subs.add_parser("detuning-sweep", help="traces over a list of anti-symmetric detunings")
    p.add_argument("--l", type=int, default=2)
    p.add_argument("--flux", default="both", help="0, pi, or both")
    p.add_argument("--delta", default="0,sqrt2,10", help="comma list in units of J")
    p.add_argument("--init", default="A,1")
    p.add_argument("--tmax", default="4pi")
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--j-mhz", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_detuning_sweep)

    p = subs.add_parser("spectroscopy", help="single-excitation eigenenergy scan")
    _add_lattice_source(p, default_l=1)
    p.add_argument("--drive", default="A,1")
    p.add_argument("--omega", type=float, default=0.05, help="drive amplitude in J")
    p.add_argument("--duration", default="20", help="pulse duration in 1/J")
    p.add_argument("--delta-range", default="-3:3:201", help="drive detuning grid start:stop:count in J")
    _add_common(p)
    p.set_defaults(func=cmd_spectroscopy)

    p = subs.add_parser("adiabatic", help="adiabatic ground-state preparation")
    p.add_argument("--config", default=None, help="JSON file with run parameters")
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--flux", default=None)
    p.add_argument("--init", default=None)
    p.add_argument("--duration", type=float, default=None, help="total ramp length in 1/J")
    p.add_argument("--schedule", default=None, help="JSON array of ramp segments (overrides --duration)")
    p.add_argument("--initial-detuning", type=float, default=None, help="starting detuning of the init site, in J (< -3)")
    p.add_argument("--j-mhz", type=float, default=None)
    p.add_argument("--dephasing-us", default=None, help="comma list of dephasing times in microseconds")
    _add_common(p)
    p.set_defaults(func=cmd_adiabatic)

    p = subs.add_parser("bands", help="Bloch band structure")
    p.add_argument("--model", choices=("rhombic", "trimer"), default="rhombic")
    p.add_argument("--flux", default="pi")
    p.add_argument("--delta-over-sqrt2j", type=float, default=0.5, help="trimer inter-cell coupling in sqrt(2) J")
    p.add_argument("--nk", type=int, default=512)
    _add_common(p)
    p.set_defaults(func=cmd_bands)

    p = subs.add_parser("zak", help="Wilson-loop Zak phase of the trimer bands")
    p.add_argument("--delta-range", default="0.2:2.0:7", help="inter-cell couplings in sqrt(2) J")
    p.add_argument("--band", type=int, default=0)
    p.add_argument("--nk", type=int, default=512)
    _add_common(p)
    p.set_defaults(func=cmd_zak)

    p = subs.add_parser("coupler-calibrate", help="tunable-coupler sweep and off point")
    p.add_argument("--device", default=None, help="device JSON (defaults to the shipped sample)")
    p.add_argument("--sweep", default=None, help="coupler frequency grid start:stop:count in GHz")
    p.add_argument("--levels", type=int, default=3, help="bosonic truncation per mode")
    _add_common(p)
    p.set_defaults(func=cmd_coupler_calibrate)

    p = subs.add_parser("crosstalk-fit", help="fit flux-line crosstalk elements")
    p.add_argument("--responses", default=None, help="CSV of source,target,source_zpa,target_zpa")
    p.add_argument("--lines", type=int, default=7, help="synthetic mode: number of lines")
    p.add_argument("--points", type=int, default=25, help="synthetic mode: points per pair")
    p.add_argument("--noise", type=float, default=1e-5, help="synthetic mode: zpa noise sigma")
    _add_common(p)
    p.set_defaults(func=cmd_crosstalk_fit)

    p = subs.add_parser("verify", help="compare a stored trace against an oracle")
    p.add_argument("--trace", required=True, help="trace JSON produced by dynamics/detuning-sweep")
    p.add_argument("--oracle", choices=("analytic_l1", "effective_model"), required=True)
    p.add_argument("--tolerance", type=float, default=1e-8)
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
