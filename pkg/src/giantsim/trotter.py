"""Trotterised simulation of the dissipative XXZ chain on the giant-atom chain.

Target model (spin-1/2, sites 1..N, excitation = spin up):

    H = sum_k J (X_k X_k+1 + Y_k Y_k+1) + Jz Z_k Z_k+1,   L = sqrt(Gamma) s-_N

Each Trotter step applies, in order, XY on odd bonds, ZZ on odd bonds, XY on
even bonds, ZZ on even bonds and the end-site decay.  On the hardware:

    exp(-i J (XX+YY) dt) = R_XY(2 J dt)
    exp(-i Jz ZZ dt)     = CZ_phi(-4 Jz dt) * phase e^{+2i Jz dt} on |1> of both qubits
    decay for dt         = park atom N at a lossy frequency for Gamma dt / Gamma_0

Single-qubit phases and the free phase from frequency tuning are tracked in a
virtual-Z ledger.  The ledger never rotates the state between gates, so
detuned idle atoms keep their natural, suppressed exchange; it is applied
only around two-qubit slots, which therefore act in the logical frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import gates as gt
from . import geometry as geo
from . import lindblad as lb
from . import oracle
from .errors import CapacityError, ConfigError
from .units import GAMMA_DEFAULT, GAMMA_EX_DEFAULT, GAMMA_PHI_DEFAULT, OMEGA0_CHAIN_DEFAULT, T3_DEFAULT

TWO_PI = 2.0 * math.pi
MAX_SITES = 5
_ANGLE_EPS = 1e-12


@dataclass(frozen=True)
class XXZModel:
    n_sites: int
    j: float
    jz: float
    gamma: float

    def __post_init__(self) -> None:
        if self.n_sites < 2 or self.n_sites % 2:
            raise ConfigError(f"N must be even and >= 2, got {self.n_sites}")
        if self.gamma < 0:
            raise ConfigError("Gamma must be nonnegative")


@dataclass(frozen=True)
class TrotterGate:
    kind: str  # RXY, RZZ, Decay
    sites: tuple[int, ...]
    theta: float = 0.0  # RXY angle wrapped into (0, 2pi)
    zz_angle: float = 0.0  # RZZ: exp(-i zz_angle Z Z)
    decay_exponent: float = 0.0  # Decay: Gamma dt

    @property
    def czphi_angle(self) -> float:
        return float(np.mod(-4.0 * self.zz_angle, TWO_PI))

    @property
    def single_qubit_phase(self) -> float:
        return 2.0 * self.zz_angle


@dataclass(frozen=True)
class TrotterLayer:
    name: str  # H1..H4, L5
    gates: tuple[TrotterGate, ...]


@dataclass(frozen=True)
class TrotterPlan:
    model: XXZModel
    t: float
    l: int
    step: tuple[TrotterLayer, ...]

    @property
    def dt(self) -> float:
        return self.t / self.l


def _wrap(angle: float) -> float | None:
    a = float(np.mod(angle, TWO_PI))
    if a < _ANGLE_EPS or TWO_PI - a < _ANGLE_EPS:
        return None
    return a


def bonds(n_sites: int, parity: str) -> list[tuple[int, int]]:
    start = 1 if parity == "odd" else 2
    return [(k, k + 1) for k in range(start, n_sites, 2)]


def decompose(model: XXZModel, t: float, l: int) -> TrotterPlan:
    if not t >= 0:
        raise ConfigError("t must be nonnegative")
    if model.n_sites > oracle.ORACLE_MAX_SITES:
        raise CapacityError(f"at most {oracle.ORACLE_MAX_SITES} sites")
    if l < 1:
        raise ConfigError("need at least one Trotter step")
    dt = t / l
    layers = []
    for name, parity, kind in (("H1", "odd", "RXY"), ("H2", "odd", "RZZ"), ("H3", "even", "RXY"), ("H4", "even", "RZZ")):
        if kind == "RXY":
            theta = _wrap(2.0 * model.j * dt)
            if theta is None:
                continue
            gs = tuple(TrotterGate("RXY", b, theta=theta) for b in bonds(model.n_sites, parity))
        else:
            a = model.jz * dt
            if _wrap(-4.0 * a) is None and _wrap(2.0 * a) is None:
                continue
            gs = tuple(TrotterGate("RZZ", b, zz_angle=a) for b in bonds(model.n_sites, parity))
        if gs:
            layers.append(TrotterLayer(name, gs))
    if model.gamma > 0 and dt > 0:
        layers.append(TrotterLayer("L5", (TrotterGate("Decay", (model.n_sites,), decay_exponent=model.gamma * dt),)))
    return TrotterPlan(model, t, l, tuple(layers))


# --------------------------------------------------------------------------
# hardware


@dataclass(frozen=True)
class Hardware:
    gamma: float = GAMMA_DEFAULT
    gamma_ex: float = GAMMA_EX_DEFAULT
    gamma_phi: float = GAMMA_PHI_DEFAULT
    omega0: float = OMEGA0_CHAIN_DEFAULT
    t3: float = T3_DEFAULT
    # include second-order dispersive shifts in the virtual-Z compensation
    dressed_frame: bool = False

    def noiseless(self) -> "Hardware":
        return replace(self, gamma_ex=0.0, gamma_phi=0.0)


@dataclass(frozen=True)
class Slot:
    label: str
    duration: float
    frequencies: Mapping[int, float]
    extra_phase: Mapping[int, float] = field(default_factory=dict)
    two_qubit: bool = False


@dataclass(frozen=True)
class CompiledSchedule:
    """One Trotter step as frequency slots; ``schedule`` repeats it ``l`` times."""

    plan: TrotterPlan
    slots: tuple[Slot, ...]
    timings: Mapping[str, float]
    omega_ref: float
    schedule: lb.FrequencySchedule
    step_boundaries: tuple[float, ...]
    decay_frequency: float | None
    decay_rate: float | None
    # virtual-Z phase per atom after all l steps
    final_ledger: Mapping[int, float] = field(default_factory=dict)

    @property
    def step_duration(self) -> float:
        return float(sum(s.duration for s in self.slots))

    def two_qubit_slot_count(self, layer_prefix: str) -> int:
        return len({s.label.split(":")[0] for s in self.slots if s.two_qubit and s.label.startswith(layer_prefix)})


def _staggered(label: str, idle: Mapping[int, float], active: list[tuple[float, Mapping[int, float]]]) -> list[Slot]:
    """Sub-slots of one layer; every gate is right-aligned to the layer end."""
    if not active:
        return []
    total = max(d for d, _ in active)
    starts = sorted({total - d for d, _ in active} | {0.0})
    out = []
    for i, s0 in enumerate(starts):
        s1 = starts[i + 1] if i + 1 < len(starts) else total
        if s1 - s0 <= 0:
            continue
        freqs = dict(idle)
        for d, f in active:
            if total - d <= s0 + 1e-15:
                freqs.update(f)
        out.append(Slot(f"{label}:{i}", s1 - s0, freqs, two_qubit=True))
    return out


def compile_plan(plan: TrotterPlan, layout: geo.CouplingLayout, hardware: Hardware = Hardware()) -> CompiledSchedule:
    if layout.kind != "chain":
        raise ConfigError("the Trotter compiler targets the chain layout")
    n = plan.model.n_sites
    if len(layout.atoms) < n:
        raise CapacityError(f"chain has {len(layout.atoms)} atoms, model needs {n}")
    idle = gt.chain_idle(layout)
    idle = {a: idle[a] for a in range(1, n + 1)}
    chi = gt.chain_anharmonicity(layout)
    anh = {a: chi for a in idle}
    omega_ref = lb.default_omega_ref(layout)
    slots: list[Slot] = []
    timings: dict[str, float] = {"t3": hardware.t3}
    decay_freq = decay_rate = None

    def t3_slot(label: str, phase: Mapping[int, float] | None = None) -> None:
        slots.append(Slot(label, hardware.t3, dict(idle), dict(phase or {})))

    for layer in plan.step:
        if layer.name in ("H1", "H3"):
            active = []
            durs = []
            for gate in layer.gates:
                p = gt.rxy_protocol(layout, gate.sites, gate.theta)
                active.append((p.duration, p.frequencies))
                durs.append(p.duration)
            slots.extend(_staggered(layer.name, idle, active))
            if layer.name == "H1":
                timings["t1"] = durs[0]
                if len(durs) > 1:
                    timings["t1p"] = durs[1]
                    timings["t0"] = durs[0] - durs[1]
            t3_slot(f"{layer.name}:z")
        elif layer.name in ("H2", "H4"):
            active = []
            phase: dict[int, float] = {}
            durs = []
            for gate in layer.gates:
                for s in gate.sites:
                    phase[s] = phase.get(s, 0.0) + gate.single_qubit_phase
                phi = _wrap(-4.0 * gate.zz_angle)
                if phi is None:
                    continue
                odd, even = (gate.sites[0], gate.sites[1]) if gate.sites[0] % 2 else (gate.sites[1], gate.sites[0])
                w_c = idle[odd]
                w_p = w_c + chi
                p = gt.czphi_protocol(layout, (odd, even), phi, anh, frequencies=(w_c, w_p))
                active.append((p.duration, p.frequencies))
                durs.append(p.duration)
            slots.extend(_staggered(layer.name, idle, active))
            if layer.name == "H2" and durs:
                timings["t2"] = durs[0]
                if len(durs) > 1:
                    timings["t2p"] = durs[1]
                    timings["t0p"] = durs[0] - durs[1]
            t3_slot(f"{layer.name}:z", phase)
        elif layer.name == "L5":
            gate = layer.gates[0]
            atom = gate.sites[0]
            if decay_freq is None:
                lo, hi = gt.decay_band(layout)
                decay_freq, decay_rate = geo.decay_point(layout, atom, (lo, hi), geo.GAMMA0_TARGET * hardware.gamma)
            t4 = gate.decay_exponent / decay_rate
            timings["t4"] = t4
            freqs = dict(idle)
            freqs[atom] = decay_freq
            slots.append(Slot("L5", t4, freqs))
        else:
            raise ConfigError(f"unknown layer {layer.name!r}")

    dressed = (lambda f: lb.dispersive_shifts(layout, f)) if hardware.dressed_frame else None
    schedule, boundaries, ledger = _expand(slots, plan.l, omega_ref, idle, dressed)
    return CompiledSchedule(plan, tuple(slots), timings, omega_ref, schedule, boundaries, decay_freq, decay_rate, ledger)


def _expand(slots: Sequence[Slot], l: int, omega_ref: float, idle: Mapping[int, float], dressed=None):
    """Repeat the step ``l`` times.

    The virtual-Z ledger V = exp(i sum_a phi_a n_a) tracks, per atom, the free
    phase (omega_a - omega_ref) t plus any requested single-qubit phase; it
    never acts on the physical state between gates.  Each two-qubit slot is
    executed in the logical frame: V at the slot start is applied before the
    slot and undone after it, which sets the relative phase of the resonant
    pair to its logical value.  Populations are frame independent, so the
    state at every step boundary is directly comparable with the circuit.
    """
    timeline: list[tuple[float, Mapping[int, float]]] = []
    updates = []
    boundaries = [0.0]
    ledger = {a: 0.0 for a in idle}
    t = 0.0
    for _ in range(l):
        for s in slots:
            if s.duration <= 0 and not s.extra_phase:
                continue
            if s.duration > 0:
                if s.two_qubit:
                    updates.append((t, dict(ledger)))
                timeline.append((s.duration, s.frequencies))
                t += s.duration
                if s.two_qubit:
                    updates.append((t, {a: -p for a, p in ledger.items()}))
            shifts = dressed(s.frequencies) if dressed is not None else {}
            for a, w in s.frequencies.items():
                ledger[a] += (w - omega_ref) * s.duration + s.extra_phase.get(a, 0.0) + shifts.get(a, 0.0) * s.duration
        boundaries.append(t)
    if not timeline:
        timeline.append((0.0, dict(idle)))
    # from_slots accumulates t identically, so update times coincide with slot ends
    sched = lb.FrequencySchedule.from_slots(timeline, omega_ref, updates)
    return sched, tuple(boundaries), ledger


def step_phase_ledger(compiled: CompiledSchedule) -> dict[int, float]:
    """Free phase per atom accumulated over one step, summed slot by slot."""
    out: dict[int, float] = {}
    for s in compiled.slots:
        for a, w in s.frequencies.items():
            out[a] = out.get(a, 0.0) + (w - compiled.omega_ref) * s.duration
    return out


# --------------------------------------------------------------------------
# running


@dataclass
class SimulationResult:
    model: XXZModel
    l: int
    times: np.ndarray
    populations: np.ndarray
    leakage: np.ndarray
    traces: np.ndarray


def _chain_for(model: XXZModel, hardware: Hardware) -> geo.CouplingLayout:
    return geo.preset_chain(model.n_sites, gamma=hardware.gamma, omega0=hardware.omega0)


def _engine(model: XXZModel, hardware: Hardware, layout: geo.CouplingLayout) -> lb.Engine:
    chi = gt.chain_anharmonicity(layout)
    specs = [lb.AtomSpec(a, chi, hardware.gamma_ex, hardware.gamma_phi) for a in layout.atom_ids]
    # one excitation and lowering-only dissipation: the one-quantum sector is exact
    return lb.Engine(layout, specs, max_excitations=1)


def run_point(model: XXZModel, t: float, l: int, hardware: Hardware = Hardware(), trajectory: bool = False):
    """Hardware populations after l steps reaching time t (or at every step boundary)."""
    if model.n_sites > MAX_SITES:
        raise CapacityError(f"engine runs are limited to {MAX_SITES} sites")
    layout = _chain_for(model, hardware)
    eng = _engine(model, hardware, layout)
    rho0 = lb.DensityMatrix.product(eng.basis, [1] + [0] * (model.n_sites - 1))
    if t == 0:
        pops = np.array([[lb.population(rho0, a) for a in layout.atom_ids]])
        return (np.array([0.0]), pops, np.zeros_like(pops), np.ones(1)) if trajectory else pops[0]
    comp = compile_plan(decompose(model, t, l), layout, hardware)
    samples = comp.step_boundaries if trajectory else [comp.step_boundaries[-1]]
    tr = eng.evolve(rho0, comp.schedule, samples)
    if trajectory:
        return np.linspace(0, t, l + 1), tr.populations(), tr.leakages(), tr.traces()
    return tr.populations()[-1]


def run_simulation(
    model: XXZModel, t_grid: Sequence[float], l: int, hardware: Hardware = Hardware()
) -> SimulationResult:
    """One compiled run of l steps per grid time; populations at the final step boundary."""
    pops, leaks, traces = [], [], []
    layout = _chain_for(model, hardware)
    eng = _engine(model, hardware, layout)
    rho0 = lb.DensityMatrix.product(eng.basis, [1] + [0] * (model.n_sites - 1))
    for t in t_grid:
        if t == 0:
            st = rho0
        else:
            comp = compile_plan(decompose(model, t, l), layout, hardware)
            st = eng.evolve(rho0, comp.schedule).states[-1]
        pops.append([lb.population(st, a) for a in layout.atom_ids])
        leaks.append([lb.leakage(st, a) for a in layout.atom_ids])
        traces.append(st.trace())
    return SimulationResult(model, l, np.asarray(t_grid, dtype=float), np.array(pops), np.array(leaks), np.array(traces))


def ideal_populations(model: XXZModel, t_grid: Sequence[float], l: int) -> np.ndarray:
    rows = []
    for t in t_grid:
        rows.append(oracle.ideal_circuit(decompose(model, t, l))[-1])
    return np.array(rows)


@dataclass
class ErrorScan:
    times: np.ndarray
    exact: np.ndarray
    simulated: dict[int, np.ndarray]
    dn: dict[int, np.ndarray]
    l_opt: np.ndarray


def error_scan(
    model: XXZModel, t_grid: Sequence[float], l_list: Sequence[int], hardware: Hardware | None = Hardware()
) -> ErrorScan:
    """dn_k(t) = exact - simulated for each l; ``hardware=None`` uses perfect gates."""
    times = np.asarray(t_grid, dtype=float)
    exact = oracle.exact_lindblad(model, times).populations
    sims, dns, per_t = {}, {}, {}
    for l in l_list:
        sim = ideal_populations(model, times, l) if hardware is None else run_simulation(model, times, l, hardware).populations
        rep = oracle.error_report(sim, exact)
        sims[l], dns[l], per_t[l] = sim, rep.dn, rep.per_time_max
    return ErrorScan(times, exact, sims, dns, oracle.best_steps(per_t))


def scan_rows(scan: ErrorScan) -> tuple[list[str], list[list[float]]]:
    n = scan.exact.shape[1]
    header = ["t", "l"] + [f"n_{k}" for k in range(1, n + 1)] + [f"dn_{k}" for k in range(1, n + 1)]
    rows = []
    for l in sorted(scan.simulated):
        for i, t in enumerate(scan.times):
            rows.append([t, l, *scan.simulated[l][i], *scan.dn[l][i]])
    return header, rows
