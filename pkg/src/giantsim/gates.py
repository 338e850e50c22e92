"""Two-qubit gate protocols as frequency schedules, process tomography and fidelities.

Angle conventions used throughout:

    R_XY(theta) = exp(-i theta (s+ s- + s- s+))    so R_XY(pi/2) maps |01> -> -i|10>
    CZ_phi(phi) = diag(1, 1, 1, e^{i phi})

Two atoms resonant at a DF frequency with coupling g realise R_XY(g tau).
R_XY(pi/2) differs from the textbook iSWAP (phase +i) by a Z on one qubit,
so the two are identical up to the virtual-Z gauge.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from . import geometry as geo
from . import lindblad as lb
from .errors import ConfigError, NumericError

TWO_PI = 2.0 * math.pi
COMPUTATIONAL = ((0, 0), (0, 1), (1, 0), (1, 1))


# --------------------------------------------------------------------------
# ideal gates


def rxy_unitary(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    u = np.eye(4, dtype=complex)
    u[1, 1] = u[2, 2] = c
    u[1, 2] = u[2, 1] = -1j * s
    return u


def czphi_unitary(phi: float) -> np.ndarray:
    return np.diag([1, 1, 1, np.exp(1j * phi)]).astype(complex)


CZ = czphi_unitary(math.pi)
ISWAP = np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex)


def rzz_unitary(angle: float) -> np.ndarray:
    """exp(-i angle Z x Z) with Z = |1><1| - |0><0| on each qubit."""
    return np.diag(np.exp(-1j * angle * np.array([1, -1, -1, 1]))).astype(complex)


# --------------------------------------------------------------------------
# protocols


@dataclass(frozen=True)
class GateProtocol:
    kind: str
    targets: tuple[int, ...]
    frequencies: Mapping[int, float]
    duration: float
    angle: float = 0.0
    coupling: float = 0.0
    detuning: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("RXY", "CZ", "CZPhi", "Decay", "Idle"):
            raise ConfigError(f"unknown gate kind {self.kind!r}")
        if self.duration < 0 or (self.duration == 0 and self.kind not in ("Idle", "Decay")):
            raise ConfigError(f"{self.kind}: duration must be positive")

    def target_unitary(self) -> np.ndarray:
        if self.kind == "RXY":
            return rxy_unitary(self.angle)
        if self.kind in ("CZ", "CZPhi"):
            return czphi_unitary(self.angle)
        return np.eye(4, dtype=complex)


def _check_braided(layout: geo.CouplingLayout, pair: tuple[int, int], omega: float) -> float:
    g = float(geo.exchange_coupling(layout, pair[0], pair[1], omega))
    if abs(g) < 1e-9 * layout.gamma_scale:
        raise ConfigError(f"atoms {pair} are not coupled at omega={omega:g} (not braided)")
    return g


def default_pair_frequency(layout: geo.CouplingLayout, pair: tuple[int, int]) -> float:
    """DF frequency at which an R_XY gate on ``pair`` is run by default."""
    if layout.kind == "two_atom":
        return geo.df_frequency(layout, 3)
    if layout.kind == "chain":
        even = pair[0] if pair[0] % 2 == 0 else pair[1]
        return chain_addressing(layout, [GateRequest("RXY", pair)])[even]
    raise ConfigError(f"no default gate frequency for layout kind {layout.kind!r}; pass omega")


def rxy_duration(theta: float, g: float) -> float:
    if not 0 < theta < TWO_PI:
        raise ConfigError(f"theta must lie in (0, 2pi), got {theta}")
    if g > 0:
        return theta / g
    return (TWO_PI - theta) / abs(g)


def rxy_protocol(
    layout: geo.CouplingLayout, pair: tuple[int, int], theta: float, omega: float | None = None
) -> GateProtocol:
    omega = default_pair_frequency(layout, pair) if omega is None else omega
    g = _check_braided(layout, pair, omega)
    tau = rxy_duration(theta, g)
    return GateProtocol("RXY", tuple(pair), {pair[0]: omega, pair[1]: omega}, tau, theta, g)


def _cz_frequencies(layout: geo.CouplingLayout, pair: tuple[int, int]) -> tuple[float, float]:
    if layout.kind == "two_atom":
        return geo.df_frequency(layout, 2), geo.df_frequency(layout, 1)
    if layout.kind == "chain":
        f = chain_addressing(layout, [GateRequest("CZ", pair)])
        return f[pair[0]], f[pair[1]]
    raise ConfigError(f"no default CZ frequencies for layout kind {layout.kind!r}; pass them")


def cz_protocol(
    layout: geo.CouplingLayout,
    pair: tuple[int, int],
    anharmonicity: Mapping[int, float],
    frequencies: tuple[float, float] | None = None,
    detuning: float = 0.0,
    phi: float = math.pi,
) -> GateProtocol:
    """|11> <-> |20> exchange; ``pair[0]`` is the atom promoted to |2>."""
    ctrl, part = pair
    w_c, w_p = _cz_frequencies(layout, pair) if frequencies is None else frequencies
    chi = anharmonicity[ctrl]
    if abs(w_p - (w_c + chi)) > 1e-6 * layout.omega0:
        raise ConfigError(
            f"resonance w_{part} = w_{ctrl} + chi_{ctrl} unmet: mismatch {w_p - (w_c + chi):.6g} rad/us"
        )
    g = _check_braided(layout, pair, w_p)
    g_eff = math.sqrt(2 * g * g + detuning * detuning / 4)
    kind = "CZ" if detuning == 0 else "CZPhi"
    return GateProtocol(kind, (ctrl, part), {ctrl: w_c, part: w_p + detuning}, math.pi / g_eff, phi, g, detuning)


def czphi_detuning(phi: float, g: float) -> float:
    if not 0 < phi < TWO_PI:
        raise ConfigError(f"phi must lie in (0, 2pi), got {phi}")
    u = phi / math.pi - 1.0
    return 2 * math.sqrt(2) * abs(g) * u / math.sqrt(1 - u * u)


def czphi_phase(detuning: float, g: float) -> float:
    """Conditional phase produced by the detuned |11>-|20> exchange."""
    return math.pi * (1 + detuning / math.sqrt(8 * g * g + detuning * detuning))


def czphi_protocol(
    layout: geo.CouplingLayout,
    pair: tuple[int, int],
    phi: float,
    anharmonicity: Mapping[int, float],
    frequencies: tuple[float, float] | None = None,
) -> GateProtocol:
    base = cz_protocol(layout, pair, anharmonicity, frequencies)
    delta = czphi_detuning(phi, base.coupling)
    return cz_protocol(layout, pair, anharmonicity, frequencies, detuning=delta, phi=phi)


def decay_band(layout: geo.CouplingLayout) -> tuple[float, float]:
    return geo.df_frequency(layout, 2), geo.df_frequency(layout, 3)


def decay_protocol(
    layout: geo.CouplingLayout,
    atom: int,
    duration: float,
    omega: float | None = None,
    target_rate: float | None = None,
) -> GateProtocol:
    """Park ``atom`` at a lossy frequency inside [DF2, DF3] for ``duration``."""
    lo, hi = decay_band(layout)
    if omega is None:
        target = geo.GAMMA0_TARGET * layout.meta.get("gamma", layout.gamma_scale) if target_rate is None else target_rate
        omega, _ = geo.decay_point(layout, atom, (lo, hi), target)
    elif not lo <= omega <= hi:
        raise ConfigError(f"decay frequency {omega:g} outside [{lo:g}, {hi:g}]")
    if duration < 0:
        raise ConfigError("decay duration must be nonnegative")
    rate = float(geo.individual_decay(layout, atom, omega))
    return GateProtocol("Decay", (atom,), {atom: omega}, duration, coupling=rate)


# --------------------------------------------------------------------------
# addressing


@dataclass(frozen=True)
class GateRequest:
    kind: str
    pair: tuple[int, int]
    detuning: float = 0.0


def _check_requests(requests: Sequence[GateRequest]) -> None:
    seen: set[int] = set()
    for r in requests:
        if r.kind not in ("RXY", "CZ", "CZPhi"):
            raise ConfigError(f"unknown gate kind {r.kind!r}")
        for a in r.pair:
            if a in seen:
                raise ConfigError(f"atom {a} appears in more than one gate request")
            seen.add(a)


def chain_idle(layout: geo.CouplingLayout) -> dict[int, float]:
    n2, n3, n5 = (geo.df_frequency(layout, m) for m in (2, 3, 5))
    out = {}
    for a in layout.atom_ids:
        out[a] = n3 if a % 2 == 0 else (n2 if a % 4 == 1 else n5)
    return out


def chain_anharmonicity(layout: geo.CouplingLayout) -> float:
    """Anharmonicity matching the DF spacing used by every chain CZ."""
    return geo.df_frequency(layout, 1) - geo.df_frequency(layout, 2)


def chain_addressing(layout: geo.CouplingLayout, requests: Sequence[GateRequest]) -> dict[int, float]:
    """Frequencies of all chain atoms (ids 1..N, site order) for a set of gates.

    Odd sites never move.  For each request the even partner is set to the
    odd atom's frequency (R_XY) or one DF spacing below it (CZ, plus the
    request's detuning for CZ_phi); in a CZ the odd atom is the one promoted
    to |2>.
    """
    if layout.kind != "chain":
        raise ConfigError("chain_addressing needs a chain layout")
    _check_requests(requests)
    freqs = chain_idle(layout)
    dfs = {m: geo.df_frequency(layout, m) for m in (1, 2, 4, 5)}
    for r in requests:
        a, b = r.pair
        if abs(a - b) != 1 or a not in freqs or b not in freqs:
            raise ConfigError(f"pair {r.pair} is not a nearest-neighbour chain pair")
        odd, even = (a, b) if a % 2 == 1 else (b, a)
        low = odd % 4 == 1
        if r.kind == "RXY":
            freqs[even] = dfs[2] if low else dfs[5]
        else:
            freqs[even] = (dfs[1] if low else dfs[4]) + r.detuning
    return freqs


GRID_BLOCK_LABELS = (1, 2, 4, 6, 7)
GRID_IDLE_DF = {1: 2, 2: 4, 4: 5, 6: 7, 7: 9}


def grid_block(layout: geo.CouplingLayout, center: tuple[int, int] | None = None) -> dict[int, int]:
    """Map block labels 1, 2, 4, 6, 7 to atom ids around an interior atom."""
    rows, cols = layout.meta["rows"], layout.meta["cols"]
    r, c = center if center is not None else (1, 1)
    if not (1 <= r < rows - 1 and 1 <= c < cols - 1):
        raise ConfigError(f"center {(r, c)} has no full five-qubit block in a {rows}x{cols} grid")
    gid = lambda rr, cc: geo.grid_atom_id(rr, cc, cols)
    return {1: gid(r - 1, c), 2: gid(r - 1, c + 1), 4: gid(r, c), 6: gid(r + 1, c - 1), 7: gid(r + 1, c)}


def grid_block_anharmonicity(layout: geo.CouplingLayout) -> float:
    return -layout.omega0 / 20.0


def grid_addressing(
    layout: geo.CouplingLayout, requests: Sequence[GateRequest], block: Mapping[int, int] | None = None
) -> dict[int, float]:
    """Frequencies of the five block atoms.  Every gate retunes the centre atom 4."""
    block = grid_block(layout) if block is None else dict(block)
    _check_requests(requests)
    freqs = {block[lbl]: geo.df_frequency(layout, m) for lbl, m in GRID_IDLE_DF.items()}
    center = block[4]
    chi = grid_block_anharmonicity(layout)
    for r in requests:
        if center not in r.pair:
            raise ConfigError(f"pair {r.pair} does not involve the block centre {center}")
        other = r.pair[0] if r.pair[1] == center else r.pair[1]
        if other not in freqs:
            raise ConfigError(f"atom {other} is not in the block")
        if r.kind == "RXY":
            freqs[center] = freqs[other]
        else:
            freqs[center] = freqs[other] + chi + r.detuning
    return freqs


# --------------------------------------------------------------------------
# schedules and tomography


def protocol_schedule(
    protocol: GateProtocol,
    idle: Mapping[int, float],
    omega_ref: float,
    compensate: bool = True,
) -> lb.FrequencySchedule:
    """One-slot schedule: targets at their gate frequencies, others at ``idle``.

    With ``compensate`` the accumulated free phase of every atom is undone
    by a virtual-Z at the end of the slot.
    """
    freqs = dict(idle)
    freqs.update(protocol.frequencies)
    sched = lb.FrequencySchedule.from_slots([(protocol.duration, freqs)], omega_ref)
    if compensate:
        phases = {a: sched.accumulated_phase(a) for a in freqs}
        sched = replace(sched, frame_updates=((protocol.duration, phases),))
    return sched


def _computational_indices(basis: lb.Basis, targets: Sequence[int]) -> list[list[int]]:
    """For each computational target configuration, basis indices of the spectator-ground states."""
    pos = [basis.position(a) for a in targets]
    others = [i for i in range(len(basis.atom_ids)) if i not in pos]
    out = []
    for conf in COMPUTATIONAL:
        lv = [0] * len(basis.atom_ids)
        for p, v in zip(pos, conf):
            lv[p] = v
        out.append(basis.index(lv))
    return out


def _reduce_output(rho: np.ndarray, basis: lb.Basis, targets: Sequence[int]) -> np.ndarray:
    """Trace out spectators and project the targets onto the qubit subspace."""
    pos = [basis.position(a) for a in targets]
    st = np.array(basis.states)
    keep = np.all(st[:, pos] <= 1, axis=1)
    groups: dict[tuple, list[tuple[int, int]]] = {}
    for i in np.nonzero(keep)[0]:
        rest = tuple(np.delete(st[i], pos))
        conf = tuple(st[i, pos])
        groups.setdefault(rest, []).append((COMPUTATIONAL.index(conf), i))
    out = np.zeros((4, 4), dtype=complex)
    for members in groups.values():
        for (a, i), (b, j) in itertools.product(members, repeat=2):
            out[a, b] += rho[i, j]
    return out


def _full_idle(layout: geo.CouplingLayout, protocol: GateProtocol, idle: Mapping[int, float] | None) -> dict:
    out = {}
    for a in layout.atom_ids:
        if a in protocol.frequencies:
            out[a] = protocol.frequencies[a]
        elif idle is not None and a in idle:
            out[a] = idle[a]
        else:
            raise ConfigError(f"no idle frequency for spectator atom {a}")
    return out


def choi_of_unitary(u: np.ndarray) -> np.ndarray:
    d = u.shape[0]
    psi = np.zeros(d * d, dtype=complex)
    for n in range(d):
        psi += np.kron(np.eye(d)[n], u[:, n])
    psi /= math.sqrt(d)
    return np.outer(psi, psi.conj())


def choi_of_protocol(
    protocol: GateProtocol,
    engine: lb.Engine,
    idle: Mapping[int, float] | None = None,
    omega_ref: float | None = None,
    compensate: bool = True,
) -> np.ndarray:
    """Choi state (1/4) sum |n><m| (x) E(|n><m|), input factor first.

    All 16 matrix units are evolved through the full three-level master
    equation; spectator atoms start in |0> and are traced out at the end.
    """
    if len(protocol.targets) != 2:
        raise ConfigError("process tomography needs a two-atom protocol")
    layout = engine.layout
    idle = _full_idle(layout, protocol, idle)
    omega_ref = lb.default_omega_ref(layout) if omega_ref is None else omega_ref
    sched = protocol_schedule(protocol, idle, omega_ref, compensate)
    basis = engine.basis
    idx = _computational_indices(basis, protocol.targets)
    choi = np.zeros((16, 16), dtype=complex)
    for n, m in itertools.product(range(4), repeat=2):
        unit = np.zeros((basis.dim, basis.dim), dtype=complex)
        unit[idx[n], idx[m]] = 1.0
        out = engine.evolve(unit, sched).states[-1].data
        choi += np.kron(np.outer(np.eye(4)[n], np.eye(4)[m]), _reduce_output(out, basis, protocol.targets))
    return choi / 4.0


def _psd_sqrt(m: np.ndarray, tol: float) -> np.ndarray:
    h = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(h)
    if w.min() < -tol:
        raise NumericError(f"matrix not positive semidefinite (min eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def process_fidelity(choi: np.ndarray, choi_ref: np.ndarray, tol: float = 1e-8) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(A) B sqrt(A)))^2 of two Choi states."""
    spectra = []
    for m in (choi, choi_ref):
        w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
        if w.min() < -tol:
            raise NumericError(f"matrix not positive semidefinite (min eigenvalue {w.min():.3e})")
        spectra.append((w, v))
    for (w, v), other in ((spectra[1], choi), (spectra[0], choi_ref)):
        if np.sum(w > tol) == 1:
            # one state pure: F = <psi|rho|psi>, free of square roots of roundoff eigenvalues
            psi = v[:, -1]
            return float(w[-1] * np.real(np.vdot(psi, other @ psi)))
    sa = _psd_sqrt(choi, tol)
    inner = sa @ choi_ref @ sa
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)


def average_gate_fidelity(f_process: float, d: int = 4) -> float:
    if d < 2:
        raise ConfigError("dimension must be at least 2")
    if not -1e-12 <= f_process <= 1 + 1e-12:
        raise ConfigError(f"process fidelity {f_process} outside [0, 1]")
    return (d * f_process + 1) / (d + 1)


def _z_diag(phases: Sequence[float]) -> np.ndarray:
    a, b = phases
    return np.exp(1j * np.array([0.0, b, a, a + b]))


def gauge_fidelity(choi: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Process fidelity maximised over single-qubit Z rotations before and after the gate."""
    ref = choi_of_unitary(target)
    w, v = np.linalg.eigh(ref)
    psi_ref = v[:, -1]

    def fid(x):
        d_in = _z_diag(x[:2])
        d_out = _z_diag(x[2:])
        dd = np.kron(d_in, d_out)
        return float(np.real(np.vdot(psi_ref, (dd[:, None] * choi * dd.conj()[None, :]) @ psi_ref)))

    best = (fid(np.zeros(4)), np.zeros(4))
    for start in ([0, 0, 0, 0], [0, 0, math.pi / 2, -math.pi / 2], [math.pi / 2, 0, 0, math.pi / 2]):
        res = minimize(lambda x: -fid(x), np.array(start, dtype=float), method="BFGS", options={"gtol": 1e-12})
        if -res.fun > best[0]:
            best = (-res.fun, res.x)
    return best


@dataclass(frozen=True)
class GateFidelity:
    protocol: GateProtocol
    process_raw: float
    process: float
    average: float
    z_phases: tuple[float, ...]
    leakage: float
    choi: np.ndarray = field(repr=False)


def characterize(
    protocol: GateProtocol,
    engine: lb.Engine,
    idle: Mapping[int, float] | None = None,
    omega_ref: float | None = None,
) -> GateFidelity:
    choi = choi_of_protocol(protocol, engine, idle, omega_ref)
    target = protocol.target_unitary()
    raw = process_fidelity(choi, choi_of_unitary(target))
    best, phases = gauge_fidelity(choi, target)
    leak = 1.0 - float(np.real(np.trace(choi)))
    return GateFidelity(protocol, raw, best, average_gate_fidelity(min(best, 1.0)), tuple(phases), leak, choi)


# --------------------------------------------------------------------------
# two-atom experiments


@dataclass(frozen=True)
class TwoAtomSetup:
    """Braided pair with identical transmon-like atoms."""

    gamma: float
    omega0: float
    anharmonicity: float
    gamma_ex: float = 0.0
    gamma_phi: float = 0.0

    def layout(self) -> geo.CouplingLayout:
        return geo.preset_two_atom(self.gamma, self.omega0)

    def specs(self, gamma_ex: float | None = None, gamma_phi: float | None = None) -> list[lb.AtomSpec]:
        ex = self.gamma_ex if gamma_ex is None else gamma_ex
        ph = self.gamma_phi if gamma_phi is None else gamma_phi
        return [lb.AtomSpec(a, self.anharmonicity, ex, ph) for a in (1, 2)]

    @classmethod
    def paper_default(cls, gamma: float, omega0: float, gamma_ex: float = 0.0, gamma_phi: float = 0.0):
        return cls(gamma, omega0, -omega0 / 8.0, gamma_ex, gamma_phi)


def two_atom_protocol(setup: TwoAtomSetup, kind: str, angle: float | None = None) -> GateProtocol:
    lay = setup.layout()
    chi = {1: setup.anharmonicity, 2: setup.anharmonicity}
    if kind == "iSWAP":
        return rxy_protocol(lay, (1, 2), math.pi / 2)
    if kind == "RXY":
        return rxy_protocol(lay, (1, 2), angle)
    if kind == "CZ":
        return cz_protocol(lay, (1, 2), chi)
    if kind == "CZPhi":
        return czphi_protocol(lay, (1, 2), angle, chi)
    raise ConfigError(f"unknown two-atom gate {kind!r}")


def two_atom_fidelity(
    setup: TwoAtomSetup, kind: str, angle: float | None = None, gamma_ex: float | None = None,
    gamma_phi: float | None = None,
) -> GateFidelity:
    lay = setup.layout()
    proto = two_atom_protocol(setup, kind, angle)
    eng = lb.Engine(lay, setup.specs(gamma_ex, gamma_phi))
    return characterize(proto, eng)


@dataclass(frozen=True)
class FidelityFit:
    baseline: float
    slope_ex: float
    slope_phi: float
    residual: float
    nonlinear: bool

    def as_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "slope_ex": self.slope_ex,
            "slope_phi": self.slope_phi,
            "residual": self.residual,
            "nonlinear": self.nonlinear,
        }


def fit_plane(x: np.ndarray, y: np.ndarray, f: np.ndarray, flag: float = 1e-3) -> FidelityFit:
    """Least-squares F = c - a x - b y; residual is the largest absolute misfit."""
    a = np.column_stack([np.ones_like(x), -x, -y])
    coef, *_ = np.linalg.lstsq(a, f, rcond=None)
    resid = float(np.max(np.abs(a @ coef - f)))
    return FidelityFit(float(coef[0]), float(coef[1]), float(coef[2]), resid, resid > flag)


DEFAULT_RATE_GRID = tuple(np.round(np.linspace(0.0, 0.02, 11), 6))


def fidelity_sweep(
    setup: TwoAtomSetup,
    kind: str,
    ex_grid: Sequence[float] = DEFAULT_RATE_GRID,
    phi_grid: Sequence[float] = DEFAULT_RATE_GRID,
    angle: float | None = None,
) -> tuple[list[dict], FidelityFit, FidelityFit]:
    """Process fidelity over (Gamma_ex/g, Gamma_phi/g); returns rows and fits of F and F_ave."""
    proto = two_atom_protocol(setup, kind, angle)
    g = abs(proto.coupling)
    rows = []
    for x, y in itertools.product(ex_grid, phi_grid):
        if x < 0 or y < 0:
            raise ConfigError("rates must be nonnegative")
        res = two_atom_fidelity(setup, kind, angle, gamma_ex=x * g, gamma_phi=y * g)
        rows.append({"gamma_ex_over_g": x, "gamma_phi_over_g": y, "process": res.process,
                     "process_raw": res.process_raw, "average": res.average, "leakage": res.leakage})
    xs = np.array([r["gamma_ex_over_g"] for r in rows])
    ys = np.array([r["gamma_phi_over_g"] for r in rows])
    fit = fit_plane(xs, ys, np.array([r["process"] for r in rows]))
    fit_ave = fit_plane(xs, ys, np.array([r["average"] for r in rows]))
    return rows, fit, fit_ave


def czphi_fidelity_scan(
    setup: TwoAtomSetup, phi_grid: Sequence[float], ex_grid: Sequence[float]
) -> list[dict]:
    """CZ_phi fidelity over phi and absolute Gamma_ex (rates in 1/us)."""
    rows = []
    for phi in phi_grid:
        if not 0 < phi < TWO_PI:
            raise ConfigError(f"phi must lie in (0, 2pi), got {phi}")
        for ex in ex_grid:
            res = two_atom_fidelity(setup, "CZPhi", phi, gamma_ex=ex)
            rows.append({"phi": phi, "gamma_ex": ex, "gamma_phi": setup.gamma_phi, "process": res.process,
                         "average": res.average, "duration": res.protocol.duration,
                         "detuning": res.protocol.detuning})
    return rows


def conditional_phase(engine: lb.Engine, protocol: GateProtocol, omega_ref: float | None = None) -> float:
    """Phase of <11|U|11> relative to <01|U|01><10|U|10>/<00|U|00> from the full engine."""
    lay = engine.layout
    omega_ref = lb.default_omega_ref(lay) if omega_ref is None else omega_ref
    sched = protocol_schedule(protocol, _full_idle(lay, protocol, None), omega_ref, compensate=False)
    basis = engine.basis
    idx = _computational_indices(basis, protocol.targets)
    amps = []
    for n in (0, 1, 2, 3):
        unit = np.zeros((basis.dim, basis.dim), dtype=complex)
        unit[idx[n], idx[0]] = 1.0
        out = engine.evolve(unit, sched).states[-1].data
        amps.append(out[idx[n], idx[0]])
    # rho_{n0}(t) = U_nn U_00^* for the |n><0| input
    ph = np.angle(amps[3]) - np.angle(amps[1]) - np.angle(amps[2])
    return float(np.mod(ph, TWO_PI))


def choi_to_json(choi: np.ndarray) -> list[list[list[float]]]:
    return [[[float(z.real), float(z.imag)] for z in row] for row in choi]
