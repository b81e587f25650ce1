"""Lindblad master equation on the truncated Fock space and regression correlators.

Zero-temperature dissipators only: electron decay sqrt(gamma_e)*sigma, cavity
loss sqrt(mu_omega)*c and phonon loss sqrt(mu_v)*b.  Integration is classical
fixed-step RK4.  For small spaces one RK4 step is assembled once as a
superoperator matrix so that many steps reduce to cached matrix powers; the
trajectory is identical to stepping RK4 on rho directly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .model import Operators, SystemParams

DT_SAFETY = 0.05       # largest accepted step, in units of 1/scale
DT_DEFAULT = 0.01      # RK4 is neither unitary nor positivity preserving; keeps both errors ~1e-9
SUPEROP_MAX_DIM = 48
CHUNK = 100
TRACE_TOL = 1e-9
HERM_TOL = 1e-10
POS_TOL = -1e-8


class InvariantError(RuntimeError):
    """A density-matrix invariant (trace, Hermiticity, positivity) was violated."""


class StepSizeWarning(UserWarning):
    pass


def _dag(a):
    return a.conj().T


def jump_operators(params: SystemParams, ops: Operators):
    """[(rate, L)] for the three T=0 channels, skipping zero rates."""
    out = []
    for rate, L in ((params.gamma_e, ops.sigma), (params.mu_omega, ops.c), (params.mu_v, ops.b)):
        if rate > 0:
            out.append((rate, L))
    return out


def _check_dims(rho, H, ops):
    d = ops.basis.dim
    if H.shape != (d, d):
        raise ValueError(f"Hamiltonian shape {H.shape} does not match basis dimension {d}")
    if rho is not None and rho.shape[-2:] != (d, d):
        raise ValueError(f"density matrix shape {rho.shape} does not match basis dimension {d}")


class _Generator:
    """L(rho) = -i(K rho - rho K^+) + sum_k r_k L_k rho L_k^+ with K = H - (i/2) sum r_k L_k^+ L_k."""

    def __init__(self, H, params, ops):
        _check_dims(None, H, ops)
        self.jumps = jump_operators(params, ops)
        K = np.array(H, dtype=complex)
        for rate, L in self.jumps:
            K = K - 0.5j * rate * (_dag(L) @ L)
        self.K = K
        self.Kd = _dag(K)
        self.dim = H.shape[0]

    def __call__(self, rho):
        # works on a single matrix or a stack (..., d, d)
        out = -1j * (self.K @ rho - rho @ self.Kd)
        for rate, L in self.jumps:
            out = out + rate * (L @ rho @ _dag(L))
        return out

    def superoperator(self):
        d = self.dim
        eye = np.eye(d)
        # row-major vec: vec(A rho B) = kron(A, B.T) vec(rho)
        Lsup = -1j * (np.kron(self.K, eye) - np.kron(eye, self.Kd.T))
        for rate, L in self.jumps:
            Lsup += rate * np.kron(L, L.conj())
        return Lsup

    def rate_scale(self, H):
        ev = np.linalg.eigvalsh(H)
        spread = float(ev[-1] - ev[0])
        rates = [r for r, _ in self.jumps]
        return max([spread] + rates + [1e-300])


def apply_lindbladian(rho: np.ndarray, H: np.ndarray, params: SystemParams,
                      ops: Operators) -> np.ndarray:
    """Return d(rho)/dt = -i[H, rho] + sum of the three dissipators."""
    _check_dims(rho, H, ops)
    return _Generator(H, params, ops)(np.asarray(rho, dtype=complex))


def liouvillian(H, params, ops) -> np.ndarray:
    """Superoperator matrix of the generator acting on row-major vec(rho)."""
    return _Generator(H, params, ops).superoperator()


def rk4_step_matrix(Lsup: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step of d/dt v = L v as a matrix (Horner form of the degree-4 Taylor map)."""
    eye = np.eye(Lsup.shape[0], dtype=complex)
    hL = h * Lsup
    M = eye + hL / 4
    M = eye + (hL / 3) @ M
    M = eye + (hL / 2) @ M
    return eye + hL @ M


def max_stable_dt(H, params, ops) -> float:
    return DT_SAFETY / _Generator(H, params, ops).rate_scale(H)


def resolve_dt(dt, H, params, ops) -> float:
    limit = max_stable_dt(H, params, ops)
    if dt is None:
        return limit * DT_DEFAULT / DT_SAFETY
    if dt <= 0 or not math.isfinite(dt):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    if dt > limit:
        warnings.warn(f"dt={dt:.3g} exceeds the stability limit {limit:.3g}; using {limit:.3g}",
                      StepSizeWarning, stacklevel=3)
        return limit
    return dt


def check_density(rho: np.ndarray, t: float | None = None) -> None:
    where = "" if t is None else f" at t={t:.6g}"
    tr = np.trace(rho)
    if abs(tr - 1) > TRACE_TOL:
        raise InvariantError(f"trace drift{where}: |tr(rho)-1| = {abs(tr - 1):.3e}")
    herm = np.abs(rho - _dag(rho)).max()
    if herm > HERM_TOL:
        raise InvariantError(f"Hermiticity lost{where}: max|rho-rho^+| = {herm:.3e}")
    lam = np.linalg.eigvalsh(0.5 * (rho + _dag(rho)))[0]
    if lam < POS_TOL:
        raise InvariantError(f"positivity lost{where}: min eigenvalue {lam:.3e}")


@dataclass
class EvolutionResult:
    t: np.ndarray
    rho: np.ndarray = dc_field(repr=False)
    expectations: dict = dc_field(default_factory=dict)
    dt: float = 0.0

    def population(self, index: int) -> np.ndarray:
        return self.rho[:, index, index].real.copy()

    def expect(self, op: np.ndarray) -> np.ndarray:
        return np.einsum("ij,tji->t", op, self.rho)


class _Stepper:
    """Advance a density matrix (or a stack of them) by n RK4 steps of size h."""

    def __init__(self, gen: _Generator, h: float, superop: bool):
        self.gen, self.h = gen, h
        self.superop = superop
        self._powers = {}
        if superop:
            self.M = rk4_step_matrix(gen.superoperator(), h)

    def _power(self, n):
        P = self._powers.get(n)
        if P is None:
            P = np.linalg.matrix_power(self.M, n)
            self._powers[n] = P
        return P

    def _rk4(self, rho, n):
        h, f = self.h, self.gen
        for _ in range(n):
            k1 = f(rho)
            k2 = f(rho + 0.5 * h * k1)
            k3 = f(rho + 0.5 * h * k2)
            k4 = f(rho + h * k3)
            rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        return rho

    def advance(self, rho, n, hermitian=True):
        d = self.gen.dim
        while n > 0:
            m = min(n, CHUNK)
            if self.superop:
                flat = rho.reshape(rho.shape[:-2] + (d * d,))
                rho = (flat @ self._power(m).T).reshape(rho.shape)
            else:
                rho = self._rk4(rho, m)
            if hermitian:
                rho = 0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))
            n -= m
        return rho


def _plan_steps(grid, dt):
    """Per-interval step counts and a common step size when the grid is uniform."""
    gaps = np.diff(grid)
    if np.any(gaps <= 0):
        raise ValueError("time grid must be strictly increasing")
    n = np.maximum(1, np.ceil(gaps / dt - 1e-9)).astype(int)
    return gaps, n


def evolve_density(rho0: np.ndarray, H: np.ndarray, params: SystemParams, ops: Operators,
                   t_grid, dt: float | None = None, observables: dict | None = None,
                   check: bool = True) -> EvolutionResult:
    """Integrate the master equation and return rho at every point of ``t_grid``.

    ``t_grid[0]`` is the time of ``rho0``.  Each interval is split into an
    integer number of equal RK4 steps no larger than ``dt``.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    _check_dims(rho0, H, ops)
    t_grid = np.asarray(t_grid, dtype=float)
    dt = resolve_dt(dt, H, params, ops)
    gen = _Generator(H, params, ops)
    superop = gen.dim <= SUPEROP_MAX_DIM
    out = np.empty((len(t_grid),) + rho0.shape, dtype=complex)
    out[0] = rho0
    if check:
        check_density(rho0, t_grid[0])
    if len(t_grid) > 1:
        gaps, nsteps = _plan_steps(t_grid, dt)
        steppers = {}
        rho = rho0
        for k, (gap, n) in enumerate(zip(gaps, nsteps)):
            h = gap / n
            key = round(h, 14)
            st = steppers.get(key)
            if st is None:
                st = steppers[key] = _Stepper(gen, h, superop)
            rho = st.advance(rho, n)
            if check:
                check_density(rho, t_grid[k + 1])
            out[k + 1] = rho
    res = EvolutionResult(t_grid, out, dt=dt)
    for name, op in (observables or {}).items():
        res.expectations[name] = res.expect(op).real
    return res


@dataclass
class CorrelatorTable:
    """K(t, tau) on a rectangular grid.

    ``values`` are stored in the frame the Hamiltonian was written in; the
    laboratory correlator is ``values * exp(-1j * carrier * tau)``.
    ``stderr`` is set for Monte-Carlo estimates only.
    """

    t: np.ndarray
    tau: np.ndarray
    values: np.ndarray = dc_field(repr=False)
    carrier: float = 0.0
    field: str = "photon"
    stderr: np.ndarray | None = dc_field(default=None, repr=False)

    @property
    def lab_values(self) -> np.ndarray:
        return self.values * np.exp(-1j * self.carrier * self.tau)[None, :]


def _uniform_step(grid, name):
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0:
        raise ValueError(f"{name} must start at 0")
    steps = np.diff(grid)
    h = steps.mean() if len(steps) else 0.0
    if len(steps) and np.abs(steps - h).max() > 1e-9 * max(h, 1.0):
        raise ValueError(f"{name} must be uniformly spaced")
    return grid, h


def correlator_qrt(rho0, H, params: SystemParams, ops: Operators, jump: str | np.ndarray,
                   t_grid, tau_grid, dt: float | None = None, carrier: float = 0.0,
                   field_name: str | None = None) -> CorrelatorTable:
    """Two-time correlator <A^+(t) A(t+tau)> by quantum regression.

    X(t) = rho(t) A^+ is evolved over tau with the same generator, then
    K(t, tau) = tr[A X(t, tau)].  ``tau_grid`` must be uniform from 0.
    """
    A = ops.jump(jump) if isinstance(jump, str) else np.asarray(jump, dtype=complex)
    if A.shape != H.shape:
        raise ValueError("jump operator does not match the basis")
    if field_name is None:
        field_name = jump if isinstance(jump, str) else "custom"
    t_grid = np.asarray(t_grid, dtype=float)
    tau_grid, h_tau = _uniform_step(tau_grid, "tau_grid")
    dt = resolve_dt(dt, H, params, ops)
    evo = evolve_density(rho0, H, params, ops, t_grid, dt=dt)
    X = evo.rho @ _dag(A)
    gen = _Generator(H, params, ops)
    d = gen.dim
    values = np.empty((len(t_grid), len(tau_grid)), dtype=complex)
    values[:, 0] = np.einsum("ij,tji->t", A, X)
    if len(tau_grid) > 1:
        m = max(1, int(math.ceil(h_tau / dt - 1e-9)))
        st = _Stepper(gen, h_tau / m, gen.dim <= SUPEROP_MAX_DIM)
        if st.superop:
            # adjoint sweep: propagate the read-out row instead of every X(t)
            P = st._power(m) if m <= CHUNK else np.linalg.matrix_power(st.M, m)
            r = A.T.reshape(-1).astype(complex)
            Xf = X.reshape(len(t_grid), d * d)
            for j in range(1, len(tau_grid)):
                r = r @ P
                values[:, j] = Xf @ r
        else:
            for j in range(1, len(tau_grid)):
                X = st.advance(X, m, hermitian=False)
                values[:, j] = np.einsum("ij,tji->t", A, X)
    return CorrelatorTable(t_grid, tau_grid, values, carrier=carrier, field=field_name)
