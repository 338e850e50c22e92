"""Reference solvers for the spin-1/2 target model.

Everything here is built from Pauli matrices on the 2^N qubit space with its
own integrator, so agreement with the three-level engine is independent
evidence.  Spin convention: |1> is spin up, Z = |1><1| - |0><0| and the
lowering operator is s- = (X - iY)/2 = |0><1|, so n_k = (<Z_k> + 1)/2 is the
occupation of |1>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import CapacityError, ConfigError, NumericError

ORACLE_MAX_SITES = 8

# basis order (|0>, |1>)
_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
# Listing down before up turns the textbook Y and Z into -Y and -Z.
_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)
_Z = np.diag([-1.0, 1.0]).astype(complex)
_LOWER = 0.5 * (_X - 1j * _Y)


def site_op(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Operator on 1-based ``site`` embedded in the n-site register (site 1 leftmost)."""
    mats = [_I] * n_sites
    mats[site - 1] = op
    return reduce(np.kron, mats)


@dataclass(frozen=True)
class XXZParams:
    """Plain parameters of the target model; matches trotter.XXZModel field names."""

    n_sites: int
    j: float
    jz: float
    gamma: float


def _params(model) -> XXZParams:
    return XXZParams(int(model.n_sites), float(model.j), float(model.jz), float(model.gamma))


def xxz_hamiltonian(model) -> np.ndarray:
    p = _params(model)
    n = p.n_sites
    h = np.zeros((2**n, 2**n), dtype=complex)
    for k in range(1, n):
        xx = site_op(_X, k, n) @ site_op(_X, k + 1, n)
        yy = site_op(_Y, k, n) @ site_op(_Y, k + 1, n)
        zz = site_op(_Z, k, n) @ site_op(_Z, k + 1, n)
        h += p.j * (xx + yy) + p.jz * zz
    return h


def end_site_jump(model) -> np.ndarray:
    p = _params(model)
    return math.sqrt(p.gamma) * site_op(_LOWER, p.n_sites, p.n_sites)


def number_ops(n_sites: int) -> list[np.ndarray]:
    return [0.5 * (site_op(_Z, k, n_sites) + np.eye(2**n_sites)) for k in range(1, n_sites + 1)]


def excitation_state(n_sites: int, site: int = 1) -> np.ndarray:
    """|10...0><10...0| with the excitation on ``site``."""
    v = np.zeros(2**n_sites, dtype=complex)
    v[1 << (n_sites - site)] = 1.0
    return np.outer(v, v)


def _rhs(h: np.ndarray, c: np.ndarray | None):
    if c is None:
        return lambda r: -1j * (h @ r - r @ h)
    cd = c.conj().T
    cdc = cd @ c

    def f(r):
        return -1j * (h @ r - r @ h) + c @ r @ cd - 0.5 * (cdc @ r + r @ cdc)

    return f


def _integrate(f, rho0: np.ndarray, times: np.ndarray, h_max: float) -> list[np.ndarray]:
    out = []
    rho = rho0.copy()
    t = 0.0
    for target in times:
        span = target - t
        if span < 0:
            raise ConfigError("time grid must be nondecreasing and start at >= 0")
        n = max(1, math.ceil(span / h_max - 1e-9))
        h = span / n if span > 0 else 0.0
        for _ in range(n if span > 0 else 0):
            k1 = f(rho)
            k2 = f(rho + 0.5 * h * k1)
            k3 = f(rho + 0.5 * h * k2)
            k4 = f(rho + h * k3)
            rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = target
        out.append(rho.copy())
    return out


@dataclass
class ExactResult:
    times: np.ndarray
    populations: np.ndarray  # (len(times), N)
    states: list[np.ndarray]
    halving_change: float


def exact_lindblad(
    model,
    t_grid: Sequence[float],
    initial: np.ndarray | None = None,
    rel_step: float = 1e-3,
    verify: bool = True,
) -> ExactResult:
    """Dense RK4 solution of the target Lindblad equation on the qubit register.

    The step is rel_step / max(|J|, |Jz|, Gamma); with ``verify`` the run is
    repeated at half the step and the largest population change reported.
    """
    p = _params(model)
    if p.n_sites > ORACLE_MAX_SITES:
        raise CapacityError(f"oracle limited to {ORACLE_MAX_SITES} sites, got {p.n_sites}")
    times = np.asarray(t_grid, dtype=float)
    rho0 = excitation_state(p.n_sites) if initial is None else np.asarray(initial, dtype=complex)
    h = xxz_hamiltonian(model)
    c = end_site_jump(model) if p.gamma > 0 else None
    f = _rhs(h, c)
    scale = max(abs(p.j), abs(p.jz), p.gamma)
    if scale == 0:
        states = [rho0.copy() for _ in times]
        return ExactResult(times, _pops(states, p.n_sites), states, 0.0)
    step = rel_step / scale
    states = _integrate(f, rho0, times, step)
    pops = _pops(states, p.n_sites)
    change = 0.0
    if verify:
        fine = _pops(_integrate(f, rho0, times, step / 2), p.n_sites)
        change = float(np.max(np.abs(fine - pops))) if pops.size else 0.0
        if change > 1e-8:
            raise NumericError(f"oracle step-halving check failed (change {change:.2e})")
    return ExactResult(times, pops, states, change)


def _pops(states: Sequence[np.ndarray], n_sites: int) -> np.ndarray:
    ops = number_ops(n_sites)
    return np.array([[float(np.real(np.trace(o @ r))) for o in ops] for r in states]).reshape(len(states), n_sites)


# --------------------------------------------------------------------------
# ideal Trotter circuit


def xy_gate(theta: float) -> np.ndarray:
    """exp(-i theta (s+ s- + s- s+)) on two qubits, basis |00>,|01>,|10>,|11>."""
    u = np.eye(4, dtype=complex)
    u[1, 1] = u[2, 2] = math.cos(theta)
    u[1, 2] = u[2, 1] = -1j * math.sin(theta)
    return u


def zz_gate(angle: float) -> np.ndarray:
    """exp(-i angle Z x Z)."""
    return np.diag(np.exp(-1j * angle * np.array([1.0, -1.0, -1.0, 1.0])))


def _two_site(u: np.ndarray, a: int, b: int, n: int) -> np.ndarray:
    """Embed a 4x4 gate acting on adjacent sites a < b."""
    if b != a + 1:
        raise ConfigError("two-site gates must act on adjacent sites")
    return reduce(np.kron, [np.eye(2 ** (a - 1)), u, np.eye(2 ** (n - b))])


def _damp(rho: np.ndarray, site: int, n: int, p: float) -> np.ndarray:
    k0 = site_op(np.diag([1.0, math.sqrt(1 - p)]).astype(complex), site, n)
    k1 = site_op(math.sqrt(p) * _LOWER, site, n)
    return k0 @ rho @ k0.conj().T + k1 @ rho @ k1.conj().T


def ideal_circuit(plan, initial: np.ndarray | None = None) -> np.ndarray:
    """Populations after each Trotter step (row 0 is the initial state).

    Gates are read from ``plan.step`` (layers of gates with ``kind``,
    ``sites`` and angles) and applied as perfect unitaries/channels.
    """
    n = plan.model.n_sites
    if n > ORACLE_MAX_SITES:
        raise CapacityError(f"oracle limited to {ORACLE_MAX_SITES} sites")
    rho = excitation_state(n) if initial is None else np.asarray(initial, dtype=complex)
    ops = []
    for layer in plan.step:
        for gate in layer.gates:
            a = gate.sites[0]
            if gate.kind == "RXY":
                ops.append(("u", _two_site(xy_gate(gate.theta), a, gate.sites[1], n)))
            elif gate.kind == "RZZ":
                ops.append(("u", _two_site(zz_gate(gate.zz_angle), a, gate.sites[1], n)))
            elif gate.kind == "Decay":
                ops.append(("d", (a, 1.0 - math.exp(-gate.decay_exponent))))
            else:
                raise ConfigError(f"unknown gate kind {gate.kind!r}")
    nops = number_ops(n)
    rows = [[float(np.real(np.trace(o @ rho))) for o in nops]]
    for _ in range(plan.l):
        for kind, op in ops:
            if kind == "u":
                rho = op @ rho @ op.conj().T
            else:
                rho = _damp(rho, op[0], n, op[1])
        rows.append([float(np.real(np.trace(o @ rho))) for o in nops])
    return np.array(rows)


def two_level_block(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) for a Hermitian 2x2 H via eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if h.shape != (2, 2) or not np.allclose(h, h.conj().T, atol=1e-12):
        raise ConfigError("two_level_block needs a Hermitian 2x2 matrix")
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


# --------------------------------------------------------------------------
# error bookkeeping


@dataclass
class ErrorReport:
    dn: np.ndarray  # exact - simulated, shape (len(t), N)
    max_abs: float
    mean_abs: float
    per_time_max: np.ndarray


def error_report(simulated: np.ndarray, exact: np.ndarray) -> ErrorReport:
    sim = np.asarray(simulated, dtype=float)
    ex = np.asarray(exact, dtype=float)
    if sim.shape != ex.shape:
        raise ConfigError(f"grid mismatch: {sim.shape} vs {ex.shape}")
    dn = ex - sim
    a = np.abs(dn)
    per_t = a.max(axis=1) if a.ndim == 2 and a.size else a
    return ErrorReport(dn, float(a.max()) if a.size else 0.0, float(a.mean()) if a.size else 0.0, per_t)


def best_steps(errors_by_l: dict[int, np.ndarray]) -> np.ndarray:
    """l minimising max_k |dn_k| at each time, from per-l per-time maxima."""
    ls = sorted(errors_by_l)
    stack = np.vstack([errors_by_l[l] for l in ls])
    return np.array(ls)[np.argmin(stack, axis=0)]
