"""Three-level multi-atom master equation under piecewise-constant frequency schedules.

Each atom is a ladder |0>, |1>, |2> with transition frequencies w (0-1) and
w + chi (1-2).  Dynamics are integrated in a frame rotating at a common
reference frequency w_ref, so the Hamiltonian carries only detunings and the
waveguide-mediated exchange terms.

Waveguide dissipation is written with one right- and one left-moving jump
operator per waveguide,

    L_R = sum_a A_a c_a / sqrt2,     L_L = sum_a conj(A_a) c_a / sqrt2,

where c_a runs over the lowering channels (|0><1| of each atom at w and
sqrt2 |1><2| at w + chi) and A_a is the phasor of that channel's atom at the
channel frequency.  The resulting rate matrix Re(A_a conj(A_b)) has the
individual decay rates on its diagonal and the collective rates off it, and
is positive semidefinite by construction.

The Hamiltonian conserves the total excitation number and every jump operator
either lowers it or is diagonal, so the dynamics can be truncated exactly to
states with at most ``max_excitations`` quanta.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import geometry as geo
from .errors import CapacityError, ConfigError, NumericError

MAX_ATOMS = 6
SUPEROP_MAX_DIM = 27
_MAX_STEPS = 50_000_000
_MAX_POWER_STEPS = 10**12

SQRT2 = math.sqrt(2.0)

# single-qutrit operators
LOWER_01 = np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]], dtype=complex)
LOWER_12 = np.array([[0, 0, 0], [0, 0, 1], [0, 0, 0]], dtype=complex)
PROJ_1 = np.diag([0, 1, 0]).astype(complex)
PROJ_2 = np.diag([0, 0, 1]).astype(complex)


class StepUnderflowError(NumericError):
    pass


@dataclass(frozen=True)
class AtomSpec:
    atom_id: int
    anharmonicity: float
    extra_decay: float = 0.0
    dephasing: float = 0.0

    def __post_init__(self) -> None:
        if self.extra_decay < 0 or self.dephasing < 0:
            raise ConfigError(f"atom {self.atom_id}: rates must be nonnegative")


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    omega: float


@dataclass(frozen=True)
class FrequencySchedule:
    """Per-atom piecewise-constant transition frequencies on [0, duration].

    ``frame_updates`` lists (time, {atom_id: phase}) virtual-Z corrections
    that ``evolve`` applies to the state at the given instants.
    """

    segments: Mapping[int, tuple[Segment, ...]]
    omega_ref: float
    frame_updates: tuple[tuple[float, Mapping[int, float]], ...] = ()

    def __post_init__(self) -> None:
        segs = {int(a): tuple(s) for a, s in self.segments.items()}
        ends = set()
        for a, ss in segs.items():
            if not ss:
                raise ConfigError(f"atom {a}: empty schedule")
            if abs(ss[0].t_start) > 0:
                raise ConfigError(f"atom {a}: schedule must start at t=0")
            for s0, s1 in zip(ss, ss[1:]):
                if s1.t_start != s0.t_end:
                    raise ConfigError(f"atom {a}: segments not contiguous at t={s0.t_end}")
            for s in ss:
                if s.t_end < s.t_start:
                    raise ConfigError(f"atom {a}: negative-length segment at t={s.t_start}")
            ends.add(ss[-1].t_end)
        if len(ends) > 1 and max(ends) - min(ends) > 1e-12 * max(1.0, max(ends)):
            raise ConfigError("atom schedules end at different times")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "frame_updates", tuple(sorted(self.frame_updates, key=lambda u: u[0])))

    @classmethod
    def from_slots(
        cls,
        slots: Sequence[tuple[float, Mapping[int, float]]],
        omega_ref: float,
        frame_updates: Iterable[tuple[float, Mapping[int, float]]] = (),
    ) -> "FrequencySchedule":
        """Build from consecutive (duration, {atom: omega}) slots covering every atom."""
        atoms = set(slots[0][1]) if slots else set()
        per_atom: dict[int, list[Segment]] = {a: [] for a in atoms}
        t = 0.0
        for dur, freqs in slots:
            if dur < 0:
                raise ConfigError(f"negative slot duration {dur}")
            if set(freqs) != atoms:
                raise ConfigError("every slot must assign all atoms")
            for a, w in freqs.items():
                per_atom[a].append(Segment(t, t + dur, float(w)))
            t += dur
        return cls({a: tuple(s) for a, s in per_atom.items()}, omega_ref, tuple(frame_updates))

    @property
    def atom_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.segments))

    @property
    def duration(self) -> float:
        return max(ss[-1].t_end for ss in self.segments.values())

    def frequencies_at(self, t: float) -> dict[int, float]:
        """Frequencies on the segment containing t (right-continuous)."""
        out = {}
        for a, ss in self.segments.items():
            for s in ss:
                if s.t_start <= t < s.t_end:
                    out[a] = s.omega
                    break
            else:
                out[a] = ss[-1].omega
        return out

    def breakpoints(self) -> list[float]:
        pts = {0.0, self.duration}
        for ss in self.segments.values():
            pts.update(s.t_start for s in ss)
            pts.update(s.t_end for s in ss)
        pts.update(t for t, _ in self.frame_updates)
        return sorted(pts)

    def accumulated_phase(self, atom_id: int, t0: float = 0.0, t1: float | None = None) -> float:
        """Integral of (omega(t) - omega_ref) over [t0, t1]."""
        t1 = self.duration if t1 is None else t1
        total = 0.0
        for s in self.segments[atom_id]:
            lo, hi = max(s.t_start, t0), min(s.t_end, t1)
            if hi > lo:
                total += (s.omega - self.omega_ref) * (hi - lo)
        return total


# --------------------------------------------------------------------------
# Hilbert space


@dataclass(frozen=True)
class Basis:
    """Product basis of qutrits (first atom is the slowest index), optionally truncated."""

    atom_ids: tuple[int, ...]
    max_excitations: int | None = None
    states: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self) -> None:
        n = len(self.atom_ids)
        if n > MAX_ATOMS:
            raise CapacityError(f"{n} atoms exceed the dense-engine limit of {MAX_ATOMS}")
        allst = itertools.product(range(3), repeat=n)
        if self.max_excitations is not None:
            allst = (s for s in allst if sum(s) <= self.max_excitations)
        object.__setattr__(self, "states", tuple(allst))

    @property
    def dim(self) -> int:
        return len(self.states)

    def position(self, atom_id: int) -> int:
        try:
            return self.atom_ids.index(atom_id)
        except ValueError:
            raise ConfigError(f"unknown atom id {atom_id!r}") from None

    def index(self, levels: Sequence[int]) -> int:
        return self.states.index(tuple(levels))

    def levels(self, atom_id: int) -> np.ndarray:
        p = self.position(atom_id)
        return np.array([s[p] for s in self.states])

    def local(self, atom_id: int, op: np.ndarray) -> np.ndarray:
        """Embed a 3x3 single-atom operator."""
        p = self.position(atom_id)
        st = np.array(self.states)
        rest = np.delete(st, p, axis=1)
        same = (rest[:, None, :] == rest[None, :, :]).all(axis=2)
        lv = st[:, p]
        return np.where(same, op[lv[:, None], lv[None, :]], 0.0).astype(complex)

    def ket(self, levels: Sequence[int]) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(levels)] = 1.0
        return v


@dataclass(frozen=True)
class DensityMatrix:
    data: np.ndarray
    basis: Basis

    @classmethod
    def product(cls, basis: Basis, levels: Sequence[int]) -> "DensityMatrix":
        v = basis.ket(levels)
        return cls(np.outer(v, v.conj()), basis)

    def trace(self) -> float:
        return float(np.real(np.trace(self.data)))


def population(rho: DensityMatrix, atom_id: int) -> float:
    lv = rho.basis.levels(atom_id)
    return float(np.real(np.diag(rho.data)[lv == 1].sum()))


def leakage(rho: DensityMatrix, atom_id: int) -> float:
    lv = rho.basis.levels(atom_id)
    return float(np.real(np.diag(rho.data)[lv == 2].sum()))


def virtual_z_diagonal(basis: Basis, phases: Mapping[int, float]) -> np.ndarray:
    """Diagonal of the frame correction exp(+i sum_a level_a * phase_a)."""
    total = np.zeros(basis.dim)
    for a, ph in phases.items():
        total += basis.levels(a) * ph
    return np.exp(1j * total)


def apply_virtual_z(rho: DensityMatrix, phases: Mapping[int, float]) -> DensityMatrix:
    """Undo accumulated free phases: |1> gets e^{+i phi}, |2> gets e^{+2i phi}."""
    z = virtual_z_diagonal(rho.basis, phases)
    return DensityMatrix(z[:, None] * rho.data * z.conj()[None, :], rho.basis)


# --------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class LindbladGenerator:
    hamiltonian: np.ndarray
    jumps: tuple[np.ndarray, ...]
    basis: Basis

    def apply(self, rho: np.ndarray) -> np.ndarray:
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for c in self.jumps:
            cd = c.conj().T
            cdc = cd @ c
            out += c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)
        return out

    def superoperator(self) -> np.ndarray:
        """Matrix of the generator acting on row-major vec(rho)."""
        d = self.basis.dim
        eye = np.eye(d)
        h = self.hamiltonian
        sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
        for c in self.jumps:
            cdc = c.conj().T @ c
            sup += np.kron(c, c.conj()) - 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T))
        return sup

    def rate_scale(self) -> float:
        """Upper bound on the generator's spectral radius."""
        s = 2.0 * np.linalg.norm(self.hamiltonian, 2)
        for c in self.jumps:
            s += np.linalg.norm(c.conj().T @ c, 2)
        return float(s)


def _specs_by_id(atom_specs: Sequence[AtomSpec], ids: Sequence[int]) -> dict[int, AtomSpec]:
    m = {s.atom_id: s for s in atom_specs}
    missing = [a for a in ids if a not in m]
    if missing:
        raise ConfigError(f"no AtomSpec for atoms {missing}")
    return m


def build_generator(
    layout: geo.CouplingLayout,
    atom_specs: Sequence[AtomSpec],
    frequencies: Mapping[int, float] | Sequence[float],
    omega_ref: float,
    basis: Basis | None = None,
) -> LindbladGenerator:
    ids = layout.atom_ids
    if not isinstance(frequencies, Mapping):
        if len(frequencies) != len(ids):
            raise ConfigError(f"need {len(ids)} frequencies, got {len(frequencies)}")
        frequencies = dict(zip(ids, frequencies))
    elif set(frequencies) != set(ids):
        raise ConfigError("frequency map must cover exactly the layout's atoms")
    basis = basis or Basis(ids)
    spec = _specs_by_id(atom_specs, ids)
    d = basis.dim

    lo01 = {a: basis.local(a, LOWER_01) for a in ids}
    lo12 = {a: basis.local(a, LOWER_12) for a in ids}
    w01 = {a: float(frequencies[a]) for a in ids}
    w12 = {a: w01[a] + spec[a].anharmonicity for a in ids}

    h = np.zeros((d, d), dtype=complex)
    for a in ids:
        delta = w01[a] - omega_ref
        lv = basis.levels(a)
        h += np.diag(np.where(lv == 1, delta, 0.0) + np.where(lv == 2, 2 * delta + spec[a].anharmonicity, 0.0))

    def exch(op_j, op_k, coeff):
        t = coeff * (op_j.conj().T @ op_k)
        return t + t.conj().T

    for j, k in itertools.combinations(ids, 2):
        g = geo.two_frequency_rate
        h += exch(lo01[j], lo01[k], g(layout, j, k, w01[j], w01[k], "g"))
        h += exch(lo12[j], lo12[k], 2.0 * g(layout, j, k, w12[j], w12[k], "g"))
    for j, k in itertools.permutations(ids, 2):
        # sigma+_(12),j sigma-_(01),k + h.c.
        h += exch(lo12[j], lo01[k], SQRT2 * geo.two_frequency_rate(layout, j, k, w12[j], w01[k], "g"))

    jumps: list[np.ndarray] = []
    tiny = 1e-24 * layout.gamma_scale
    for w in layout.waveguides:
        right = np.zeros((d, d), dtype=complex)
        left = np.zeros((d, d), dtype=complex)
        for a in ids:
            for op, freq in ((lo01[a], w01[a]), (SQRT2 * lo12[a], w12[a])):
                amp = complex(geo.phasor(layout, a, freq, w))
                right += amp * op
                left += amp.conjugate() * op
        for c in (right, left):
            if np.sum(np.abs(c) ** 2) > tiny:
                jumps.append(c / SQRT2)
    for a in ids:
        s = spec[a]
        if s.extra_decay > 0:
            jumps.append(math.sqrt(s.extra_decay) * (lo01[a] + SQRT2 * lo12[a]))
        if s.dephasing > 0:
            jumps.append(math.sqrt(2 * s.dephasing) * (basis.local(a, PROJ_1) + 2 * basis.local(a, PROJ_2)))
    return LindbladGenerator(h, tuple(jumps), basis)


# --------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class StepControl:
    """Fixed-step RK4 settings: h <= min(safety / scale, segment / min_steps)."""

    safety: float = 0.02
    min_steps: int = 50
    # The step is shrunk further until the accumulated RK4 truncation error
    # estimate (n * (h*scale)^5 / 120) of an interval stays below this.
    interval_error: float = 1e-12


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[DensityMatrix]
    schedule: FrequencySchedule
    settings: dict

    def populations(self) -> np.ndarray:
        ids = self.states[0].basis.atom_ids
        return np.array([[population(r, a) for a in ids] for r in self.states])

    def leakages(self) -> np.ndarray:
        ids = self.states[0].basis.atom_ids
        return np.array([[leakage(r, a) for a in ids] for r in self.states])

    def traces(self) -> np.ndarray:
        return np.array([r.trace() for r in self.states])


def _rk4_step_matrix(x: np.ndarray) -> np.ndarray:
    x2 = x @ x
    x3 = x2 @ x
    return np.eye(x.shape[0]) + x + x2 / 2 + x3 / 6 + x3 @ x / 24


class _Propagator:
    """Advance a state by a constant-generator interval with fixed-step RK4."""

    def __init__(self, gen: LindbladGenerator, control: StepControl):
        self.gen = gen
        self.control = control
        self.scale = gen.rate_scale()
        self._cache: dict[tuple[int, float], np.ndarray] = {}
        self._sup = None

    def steps_for(self, length: float) -> tuple[int, float]:
        c = self.control
        n = c.min_steps
        if self.scale > 0:
            span = length * self.scale
            theta = c.safety
            if c.interval_error > 0:
                # below ~2e-3 round-off (n * eps) outgrows the truncation gain
                theta = min(theta, max((120.0 * c.interval_error / span) ** 0.25, 2e-3))
            n = max(n, math.ceil(span / theta))
        return n, length / n

    def advance(self, rho: np.ndarray, length: float, label: str) -> np.ndarray:
        if length <= 0:
            return rho
        n, h = self.steps_for(length)
        d = self.gen.basis.dim
        if n > (_MAX_POWER_STEPS if d <= SUPEROP_MAX_DIM else _MAX_STEPS):
            raise StepUnderflowError(
                f"{label}: {n} RK4 steps needed (length {length:g}, rate scale {self.scale:g})"
            )
        if d <= SUPEROP_MAX_DIM:
            key = (n, h)
            prop = self._cache.get(key)
            if prop is None:
                if self._sup is None:
                    self._sup = self.gen.superoperator()
                prop = np.linalg.matrix_power(_rk4_step_matrix(h * self._sup), n)
                self._cache[key] = prop
            return (prop @ rho.reshape(-1)).reshape(d, d)
        f = self.gen.apply
        for _ in range(n):
            k1 = f(rho)
            k2 = f(rho + 0.5 * h * k1)
            k3 = f(rho + 0.5 * h * k2)
            k4 = f(rho + h * k3)
            rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        return rho


class Engine:
    """Caches generators and propagators across evolutions on one layout."""

    def __init__(
        self,
        layout: geo.CouplingLayout,
        atom_specs: Sequence[AtomSpec],
        max_excitations: int | None = None,
        control: StepControl = StepControl(),
    ):
        if len(layout.atoms) > MAX_ATOMS:
            raise CapacityError(f"{len(layout.atoms)} atoms exceed the dense-engine limit of {MAX_ATOMS}")
        self.layout = layout
        self.specs = tuple(atom_specs)
        _specs_by_id(self.specs, layout.atom_ids)
        self.basis = Basis(layout.atom_ids, max_excitations)
        self.control = control
        self._props: dict[tuple, _Propagator] = {}

    def propagator(self, freqs: Mapping[int, float], omega_ref: float) -> _Propagator:
        key = (omega_ref,) + tuple(freqs[a] for a in self.layout.atom_ids)
        p = self._props.get(key)
        if p is None:
            gen = build_generator(self.layout, self.specs, freqs, omega_ref, self.basis)
            p = _Propagator(gen, self.control)
            self._props[key] = p
        return p

    def evolve(
        self,
        rho: DensityMatrix | np.ndarray,
        schedule: FrequencySchedule,
        sample_times: Sequence[float] | None = None,
    ) -> Trajectory:
        data = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
        if data.shape != (self.basis.dim, self.basis.dim):
            raise ConfigError(f"state has shape {data.shape}, basis dimension is {self.basis.dim}")
        if set(schedule.atom_ids) != set(self.layout.atom_ids):
            raise ConfigError("schedule must cover exactly the layout's atoms")
        total = schedule.duration
        samples = sorted(set([total] if sample_times is None else sample_times))
        if samples and (samples[0] < 0 or samples[-1] > total * (1 + 1e-12) + 1e-15):
            raise ConfigError("sample times outside the schedule")
        cuts = sorted(set(schedule.breakpoints()) | set(samples))
        updates = list(schedule.frame_updates)
        ui = 0
        si = 0
        out_t, out_s = [], []
        rho_t = data.copy()

        def flush(t):
            nonlocal ui, si, rho_t
            while ui < len(updates) and updates[ui][0] <= t:
                z = virtual_z_diagonal(self.basis, updates[ui][1])
                rho_t = z[:, None] * rho_t * z.conj()[None, :]
                ui += 1
            while si < len(samples) and samples[si] <= t:
                out_t.append(samples[si])
                out_s.append(DensityMatrix(rho_t.copy(), self.basis))
                si += 1

        flush(0.0)
        for i, (a, b) in enumerate(zip(cuts, cuts[1:])):
            freqs = schedule.frequencies_at(a)
            prop = self.propagator(freqs, schedule.omega_ref)
            rho_t = prop.advance(rho_t, b - a, f"interval {i} [{a:g}, {b:g}]")
            flush(b)
        settings = {
            "safety": self.control.safety,
            "min_steps": self.control.min_steps,
            "max_excitations": self.basis.max_excitations,
            "omega_ref": schedule.omega_ref,
        }
        return Trajectory(np.array(out_t), out_s, schedule, settings)


def evolve(
    rho: DensityMatrix,
    schedule: FrequencySchedule,
    layout: geo.CouplingLayout,
    atom_specs: Sequence[AtomSpec],
    sample_times: Sequence[float] | None = None,
    control: StepControl = StepControl(),
) -> Trajectory:
    eng = Engine(layout, atom_specs, rho.basis.max_excitations, control)
    return eng.evolve(rho, schedule, sample_times)


def dispersive_shifts(
    layout: geo.CouplingLayout, frequencies: Mapping[int, float], resonance: float | None = None
) -> dict[int, float]:
    """Second-order frequency shift of each atom's |1> from detuned exchange partners.

    Pairs closer than ``resonance`` (default 1e-6 omega0) are treated as
    resonant and skipped; their exchange is the intended gate.
    """
    tol = 1e-6 * layout.omega0 if resonance is None else resonance
    out = {a: 0.0 for a in frequencies}
    for a, b in itertools.combinations(sorted(frequencies), 2):
        det = frequencies[a] - frequencies[b]
        if abs(det) <= tol:
            continue
        g = geo.two_frequency_rate(layout, a, b, frequencies[a], frequencies[b], "g")
        out[a] += g * g / det
        out[b] -= g * g / det
    return out


def default_omega_ref(layout: geo.CouplingLayout, band: int | None = None) -> float:
    """Largest labelled DF frequency of the layout's operating band."""
    if layout.kind == "two_atom":
        return geo.df_frequency(layout, 7, band)
    if layout.kind == "grid":
        return geo.df_frequency(layout, 9, band)
    if layout.kind == "chain":
        return geo.df_frequency(layout, 10, band)
    return layout.omega0


def trajectory_rows(traj: Trajectory) -> tuple[list[str], list[list[float]]]:
    ids = traj.states[0].basis.atom_ids
    header = ["t"] + [f"n_{a}" for a in ids] + [f"leak_{a}" for a in ids] + ["trace"]
    pops, leaks, tr = traj.populations(), traj.leakages(), traj.traces()
    rows = [[t, *p, *lk, x] for t, p, lk, x in zip(traj.times, pops, leaks, tr)]
    return header, rows
