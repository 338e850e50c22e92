"""Command-line front end: each subcommand reads a JSON config and writes CSV/JSON results.

    giantsim rates          --config rates.json --out results/rates
    giantsim df             --config df.json
    giantsim gate-fidelity  --config gate.json --jobs 4
    giantsim czphi-scan     --config czphi.json --resume
    giantsim xxz            --config xxz.json
    giantsim trotter-error  --config xxz.json
    giantsim markov-check   --set length_m=130

Every config field may be overridden with ``--set key=value`` (value parsed
as JSON when possible).  Exit codes: 0 ok, 2 configuration error, 3 numeric
failure, 4 capacity exceeded.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from . import gates as gt
from . import geometry as geo
from . import io
from . import oracle
from . import trotter as tr
from .errors import CapacityError, ConfigError, NumericError
from .units import from_ghz, from_mhz, from_ns, rate_from_mhz, to_ghz

log = logging.getLogger("giantsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CAPACITY = 0, 2, 3, 4
OUT_ENV = "GIANTSIM_OUT"


# --------------------------------------------------------------------------
# config helpers


def _get(cfg: dict, key: str, default: Any = None, kind: Callable | None = None) -> Any:
    val = cfg.get(key, default)
    if val is None:
        return None
    if kind is None:
        return val
    try:
        return kind(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field {key!r}: {exc}") from exc


def _nonneg(name: str, value: float) -> float:
    if not value >= 0:
        raise ConfigError(f"{name} must be nonnegative, got {value}")
    return value


def _grid(cfg: dict, key: str, default: Sequence[float] | None = None) -> list[float]:
    vals = cfg.get(key, default)
    if vals is None:
        raise ConfigError(f"config field {key!r} is required")
    if isinstance(vals, dict):
        try:
            vals = np.linspace(float(vals["start"]), float(vals["stop"]), int(vals["num"])).tolist()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: linspace needs start, stop, num") from exc
    try:
        out = [float(v) for v in vals]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: expected a list of numbers") from exc
    if not out:
        raise ConfigError(f"{key}: grid is empty")
    if not all(math.isfinite(v) for v in out):
        raise ConfigError(f"{key}: grid values must be finite")
    return out


def build_layout(cfg: dict) -> geo.CouplingLayout:
    """Preset name (two_atom, chain, grid) or a path to a layout JSON document."""
    src = cfg.get("layout", "two_atom")
    gamma = from_mhz(_nonneg("gamma_MHz", _get(cfg, "gamma_MHz", 2.0, float)))
    if src == "two_atom":
        return geo.preset_two_atom(gamma, from_ghz(_get(cfg, "omega0_GHz", 1.6, float)))
    if src == "chain":
        return geo.preset_chain(_get(cfg, "n_atoms", 4, int), gamma, from_ghz(_get(cfg, "omega0_GHz", 3.2, float)))
    if src == "grid":
        return geo.preset_grid(_get(cfg, "rows", 3, int), _get(cfg, "cols", 3, int), gamma,
                               from_ghz(_get(cfg, "omega0_GHz", 3.2, float)))
    return geo.layout_from_dict(io.read_json(Path(src)))


# --------------------------------------------------------------------------
# subcommands; each returns the layout hash recorded in the manifest


class Context:
    def __init__(self, out: Path, jobs: int, resume: bool, stamp: str):
        self.out = out
        self.jobs = jobs
        self.resume = resume
        self.stamp = stamp
        self.files: list[Path] = []
        self.runner = io.SweepRunner(out, jobs, resume)

    def csv(self, name: str, header, rows) -> None:
        self.files.append(io.write_csv(self.out / name, header, rows, self.stamp))

    def json(self, name: str, doc) -> None:
        self.files.append(io.write_json(self.out / name, doc))


def cmd_rates(cfg: dict, ctx: Context) -> str:
    lay = build_layout(cfg)
    n = _get(cfg, "samples", 1601, int)
    if n < 1:
        raise ConfigError("samples must be at least 1")
    lo, hi = _get(cfg, "omega_range", [0.0, 1.0], lambda v: [float(x) for x in v])
    grid = np.linspace(lo, hi, n) * lay.omega0
    ids = lay.atom_ids
    pairs = cfg.get("pairs")
    pairs = [tuple(p) for p in pairs] if pairs else list(itertools.combinations(ids, 2))
    scale = lay.gamma_scale
    header = ["omega_over_omega0", "omega_GHz"] + [f"gamma_ind_{a}" for a in ids]
    header += [f"g_{j}_{k}" for j, k in pairs] + [f"gamma_coll_{j}_{k}" for j, k in pairs]
    cols = [grid / lay.omega0, to_ghz(grid)]
    cols += [geo.individual_decay(lay, a, grid) / scale for a in ids]
    cols += [geo.exchange_coupling(lay, j, k, grid) / scale for j, k in pairs]
    cols += [geo.collective_decay(lay, j, k, grid) / scale for j, k in pairs]
    ctx.csv("rates.csv", header, np.column_stack(cols).tolist())
    return geo.layout_hash(lay)


def cmd_df(cfg: dict, ctx: Context) -> str:
    lay = build_layout(cfg)
    lo, hi = _get(cfg, "band", [1.0, 2.0], lambda v: [float(x) for x in v])
    atoms = cfg.get("atoms") or list(lay.atom_ids)
    out = []
    for a in atoms:
        for w in geo.find_df_frequencies(lay, int(a), (lo * lay.omega0, hi * lay.omega0)):
            out.append({"atom": int(a), "omega_over_omega0": w / lay.omega0, "omega_GHz": to_ghz(w),
                        "gamma_ind_over_gamma": float(geo.individual_decay(lay, int(a), w)) / lay.gamma_scale})
    ctx.json("df.json", {"band_over_omega0": [lo, hi], "frequencies": out})
    return geo.layout_hash(lay)


def _gate_setup(cfg: dict, default_ratio: float) -> gt.TwoAtomSetup:
    gamma = from_mhz(_nonneg("gamma_MHz", _get(cfg, "gamma_MHz", 2.0, float)))
    if "omega0_GHz" in cfg:
        omega0 = from_ghz(_get(cfg, "omega0_GHz", kind=float))
    else:
        omega0 = _get(cfg, "omega0_over_gamma", default_ratio, float) * gamma
    if not omega0 > 0:
        raise ConfigError("omega0 must be positive")
    chi = cfg.get("anharmonicity_MHz")
    chi = -omega0 / 8.0 if chi is None else from_mhz(float(chi))
    return gt.TwoAtomSetup(gamma, omega0, chi,
                           _nonneg("gamma_ex_MHz", rate_from_mhz(_get(cfg, "gamma_ex_MHz", 0.02, float))),
                           _nonneg("gamma_phi_MHz", rate_from_mhz(_get(cfg, "gamma_phi_MHz", 0.05, float))))


def _fidelity_point(point: dict) -> dict:
    setup = gt.TwoAtomSetup(*point["setup"])
    res = gt.two_atom_fidelity(setup, point["gate"], point["angle"], point["gamma_ex"], point["gamma_phi"])
    return {"process": res.process, "process_raw": res.process_raw, "average": res.average,
            "leakage": res.leakage, "duration": res.protocol.duration, "detuning": res.protocol.detuning}


def _setup_tuple(s: gt.TwoAtomSetup) -> list[float]:
    return [s.gamma, s.omega0, s.anharmonicity, s.gamma_ex, s.gamma_phi]


def cmd_gate_fidelity(cfg: dict, ctx: Context) -> str:
    setup = _gate_setup(cfg, 3200.0)
    gate = _get(cfg, "gate", "iSWAP", str)
    angle = _get(cfg, "angle", None, float)
    g = abs(gt.two_atom_protocol(setup, gate, angle).coupling)
    ex = [_nonneg("gamma_ex_over_g", v) for v in _grid(cfg, "gamma_ex_over_g", gt.DEFAULT_RATE_GRID)]
    ph = [_nonneg("gamma_phi_over_g", v) for v in _grid(cfg, "gamma_phi_over_g", gt.DEFAULT_RATE_GRID)]
    points = [{"setup": _setup_tuple(setup), "gate": gate, "angle": angle, "gamma_ex": x * g, "gamma_phi": y * g}
              for x, y in itertools.product(ex, ph)]
    points.append({"setup": _setup_tuple(setup), "gate": gate, "angle": angle,
                   "gamma_ex": setup.gamma_ex, "gamma_phi": setup.gamma_phi})
    results = ctx.runner.run(_fidelity_point, points)
    sweep, nominal = results[:-1], results[-1]
    rows = [[x, y, r["process"], r["process_raw"], r["average"], r["leakage"]]
            for (x, y), r in zip(itertools.product(ex, ph), sweep)]
    ctx.csv("fidelity_sweep.csv", ["gamma_ex_over_g", "gamma_phi_over_g", "process", "process_raw", "average",
                                   "leakage"], rows)
    arr = np.array(rows)
    fit = gt.fit_plane(arr[:, 0], arr[:, 1], arr[:, 2])
    fit_ave = gt.fit_plane(arr[:, 0], arr[:, 1], arr[:, 4])
    ctx.json("fit.json", {"gate": gate, "g_rad_per_us": g, "process": fit.as_dict(), "average": fit_ave.as_dict(),
                          "nominal_point": {"gamma_ex_MHz": setup.gamma_ex, "gamma_phi_MHz": setup.gamma_phi,
                                            **nominal}})
    if cfg.get("export_choi"):
        res = gt.two_atom_fidelity(setup, gate, angle)
        ctx.json("choi.json", {"gate": gate, "choi": gt.choi_to_json(res.choi), "z_phases": res.z_phases})
    return geo.layout_hash(setup.layout())


def _czphi_point(point: dict) -> dict:
    setup = gt.TwoAtomSetup(*point["setup"])
    res = gt.two_atom_fidelity(setup, "CZPhi", point["phi"], point["gamma_ex"], setup.gamma_phi)
    return {"process": res.process, "average": res.average, "duration": res.protocol.duration,
            "detuning": res.protocol.detuning}


def cmd_czphi_scan(cfg: dict, ctx: Context) -> str:
    # gamma_ex_MHz is the scanned grid here, not a scalar setup field
    setup = _gate_setup({k: v for k, v in cfg.items() if k != "gamma_ex_MHz"}, 800.0)
    phis = _grid(cfg, "phi", {"start": 0.1 * math.pi, "stop": 1.9 * math.pi, "num": 19})
    exs = [_nonneg("gamma_ex_MHz", rate_from_mhz(v)) for v in _grid(cfg, "gamma_ex_MHz", [0.0, 0.02, 0.04])]
    for p in phis:
        if not 0 < p < 2 * math.pi:
            raise ConfigError(f"phi must lie in (0, 2pi), got {p}")
    points = [{"setup": _setup_tuple(setup), "phi": p, "gamma_ex": x} for p, x in itertools.product(phis, exs)]
    results = ctx.runner.run(_czphi_point, points)
    rows = [[pt["phi"], pt["gamma_ex"], setup.gamma_phi, r["process"], r["average"], r["duration"], r["detuning"]]
            for pt, r in zip(points, results)]
    ctx.csv("czphi_scan.csv", ["phi", "gamma_ex", "gamma_phi", "process", "average", "duration", "detuning"], rows)
    return geo.layout_hash(setup.layout())


def _xxz_inputs(cfg: dict) -> tuple[tr.XXZModel, list[float], list[int], tr.Hardware | None]:
    model = tr.XXZModel(_get(cfg, "N", 4, int), _get(cfg, "J_MHz", 1.0, float), _get(cfg, "Jz_MHz", 0.0, float),
                        _nonneg("Gamma_MHz", _get(cfg, "Gamma_MHz", 0.0, float)))
    t_list = _grid(cfg, "t_list", {"start": 0.0, "stop": 4.0, "num": 41})
    if any(t < 0 for t in t_list):
        raise ConfigError("t_list entries must be nonnegative")
    l_list = [int(v) for v in _grid(cfg, "l_list", [30])]
    if any(v < 1 for v in l_list):
        raise ConfigError("l_list entries must be positive")
    if cfg.get("ideal_gates"):
        return model, t_list, l_list, None
    h = cfg.get("hardware", {}) or {}
    hw = tr.Hardware(
        gamma=from_mhz(_nonneg("gamma_MHz", float(h.get("gamma_MHz", 2.0)))),
        gamma_ex=_nonneg("Gamma_ex_MHz", rate_from_mhz(float(h.get("Gamma_ex_MHz", 0.02)))),
        gamma_phi=_nonneg("Gamma_phi_MHz", rate_from_mhz(float(h.get("Gamma_phi_MHz", 0.05)))),
        omega0=from_ghz(float(h.get("omega0_GHz", 3.2))),
        t3=from_ns(_nonneg("t3_ns", float(h.get("t3_ns", 30.0)))),
        dressed_frame=bool(h.get("dressed_frame", False)),
    )
    return model, t_list, l_list, hw


def _model_tuple(m: tr.XXZModel) -> list:
    return [m.n_sites, m.j, m.jz, m.gamma]


def _hw_dict(hw: tr.Hardware | None) -> dict | None:
    return None if hw is None else {k: getattr(hw, k) for k in tr.Hardware.__dataclass_fields__}


def _xxz_point(point: dict) -> dict:
    model = tr.XXZModel(*point["model"])
    t, l = point["t"], point["l"]
    if point["hardware"] is None:
        pops = oracle.ideal_circuit(tr.decompose(model, t, l))[-1] if t > 0 else np.eye(model.n_sites)[0]
        n = model.n_sites
        return {"populations": list(pops), "leakage": [0.0] * n, "trace": 1.0}
    res = tr.run_simulation(model, [t], l, tr.Hardware(**point["hardware"]))
    return {"populations": list(res.populations[0]), "leakage": list(res.leakage[0]), "trace": float(res.traces[0])}


def _xxz_runs(cfg: dict, ctx: Context):
    model, t_list, l_list, hw = _xxz_inputs(cfg)
    points = [{"model": _model_tuple(model), "t": t, "l": l, "hardware": _hw_dict(hw)}
              for l in l_list for t in t_list]
    results = ctx.runner.run(_xxz_point, points)
    return model, t_list, l_list, hw, points, results


def cmd_xxz(cfg: dict, ctx: Context) -> str:
    model, t_list, l_list, hw, points, results = _xxz_runs(cfg, ctx)
    n = model.n_sites
    header = ["t", "l"] + [f"n_{k}" for k in range(1, n + 1)] + [f"leak_{k}" for k in range(1, n + 1)] + ["trace"]
    rows = [[p["t"], p["l"], *r["populations"], *r["leakage"], r["trace"]] for p, r in zip(points, results)]
    ctx.csv("xxz_traces.csv", header, rows)
    ex = oracle.exact_lindblad(model, t_list)
    ctx.csv("xxz_exact.csv", ["t"] + [f"n_{k}" for k in range(1, n + 1)],
            [[t, *row] for t, row in zip(t_list, ex.populations)])
    return geo.layout_hash(tr._chain_for(model, hw or tr.Hardware()))


def cmd_trotter_error(cfg: dict, ctx: Context) -> str:
    model, t_list, l_list, hw, points, results = _xxz_runs(cfg, ctx)
    n = model.n_sites
    ex = oracle.exact_lindblad(model, t_list).populations
    sims = {l: np.zeros((len(t_list), n)) for l in l_list}
    for p, r in zip(points, results):
        sims[p["l"]][t_list.index(p["t"])] = r["populations"]
    dns = {l: oracle.error_report(sims[l], ex) for l in l_list}
    scan = tr.ErrorScan(np.array(t_list), ex, sims, {l: d.dn for l, d in dns.items()},
                        oracle.best_steps({l: d.per_time_max for l, d in dns.items()}))
    header, rows = tr.scan_rows(scan)
    ctx.csv("trotter_error.csv", header, rows)
    ctx.json("trotter_summary.json", {
        "t": t_list, "l_opt": scan.l_opt, "max_abs_dn": {str(l): d.max_abs for l, d in dns.items()},
        "per_time_max": {str(l): d.per_time_max for l, d in dns.items()}, "ideal_gates": hw is None,
    })
    return geo.layout_hash(tr._chain_for(model, hw or tr.Hardware()))


def cmd_markov_check(cfg: dict, ctx: Context) -> None:
    nu = _get(cfg, "gamma_MHz", 2.0, float)
    length = _get(cfg, "length_m", 130.0, float)
    v = _get(cfg, "v_m_s", 1.3e8, float)
    try:
        angular = geo.markovianity_ratio(from_mhz(nu) * 1e6, length, v)
        ordinary = geo.markovianity_ratio(nu * 1e6, length, v)
    except geo.LayoutError as exc:
        raise ConfigError(str(exc)) from exc
    ctx.json("markov.json", {"gamma_MHz": nu, "length_m": length, "v_m_s": v,
                             "ratio_angular": angular, "ratio_ordinary": ordinary,
                             "markovian": angular < 1.0})
    return None


COMMANDS: dict[str, Callable[[dict, Context], Any]] = {
    "rates": cmd_rates,
    "df": cmd_df,
    "gate-fidelity": cmd_gate_fidelity,
    "czphi-scan": cmd_czphi_scan,
    "xxz": cmd_xxz,
    "trotter-error": cmd_trotter_error,
    "markov-check": cmd_markov_check,
}


# --------------------------------------------------------------------------
# entry point


def _parse_set(items: Sequence[str]) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="giantsim", description="Giant-atom waveguide simulator")
    p.add_argument("--version", action="version", version=f"giantsim {__version__}")
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or results/<subcommand>)")
    p.add_argument("--jobs", type=int, default=None, help="worker processes for sweeps (default: all cores)")
    p.add_argument("--seedless", action="store_true", help="reserved; every computation is deterministic")
    p.add_argument("--resume", action="store_true", help="reuse sweep points recorded in the existing manifest")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = dict(io.read_json(args.config)) if args.config else {}
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        cfg.update(_parse_set(args.overrides))
        out = args.out or Path(os.environ.get(OUT_ENV, Path("results") / args.subcommand))
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
        jobs = args.jobs if args.jobs is not None else io.default_jobs()
        stamp = str(cfg.get("timestamp", io.EPOCH_STAMP))
        ctx = Context(out, jobs, args.resume, stamp)
        clock = io.Stopwatch()
        started = io.now_iso()
        layout_hash = COMMANDS[args.subcommand](cfg, ctx)
        manifest = io.RunManifest(
            subcommand=args.subcommand, config=cfg, layout_hash=layout_hash, started_at=started,
            wall_clock_s=clock.elapsed(), files=sorted(str(f.relative_to(out)) for f in ctx.files),
            completed_points=ctx.runner.completed,
        )
        manifest.write(out)
        log.info("wrote %d files to %s (%d points reused)", len(ctx.files), out, ctx.runner.skipped)
        return EXIT_OK
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())
