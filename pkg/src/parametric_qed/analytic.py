"""Closed-form amplitudes, occupations, anticrossing and correlator at exact resonance.

All expressions assume the single initial excitation |001> (electron excited,
no photons, no phonons) and the five-state manifold it spans.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import SystemParams

RESONANCE_TOL = 1e-12
DEGENERACY_RTOL = 1e-6


class OverdampedError(ValueError):
    pass


class DetuningError(ValueError):
    pass


@dataclass(frozen=True)
class DerivedRates:
    """Amplitude damping rates and their combinations, built from (mu_omega, mu_v, gamma_e)."""

    mu_omega: float
    mu_v: float
    gamma_e: float

    @classmethod
    def from_params(cls, params: SystemParams) -> "DerivedRates":
        return cls(params.mu_omega, params.mu_v, params.gamma_e)

    @property
    def gamma_010(self):
        return self.mu_omega / 2

    @property
    def gamma_100(self):
        return self.mu_v / 2

    @property
    def gamma_110(self):
        return (self.mu_omega + self.mu_v) / 2

    @property
    def gamma_001(self):
        return self.gamma_e / 2

    @property
    def Gamma(self):
        return self.gamma_110 + self.gamma_001

    @property
    def gamma_n(self):
        return self.Gamma - 2 * self.gamma_010

    @property
    def gamma_d(self):
        return self.gamma_100 + self.Gamma / 2 - self.gamma_010

    @property
    def Gamma_d(self):
        return self.Gamma + 2 * self.gamma_d

    @property
    def gamma_ac(self):
        return self.gamma_100 + self.Gamma / 2

    @property
    def gamma_ac_tilde(self):
        return self.gamma_010 + self.Gamma / 2

    @property
    def gamma_d_tilde(self):
        return self.gamma_010 + self.Gamma / 2 - self.gamma_100

    @property
    def Gamma_d_tilde(self):
        return self.Gamma + 2 * self.gamma_d_tilde

    @property
    def gamma_mix(self):
        return self.Gamma / 2

    def as_dict(self) -> dict:
        names = ("gamma_010", "gamma_100", "gamma_110", "gamma_001", "Gamma", "gamma_n",
                 "gamma_d", "Gamma_d", "gamma_ac", "gamma_ac_tilde", "gamma_d_tilde",
                 "Gamma_d_tilde", "gamma_mix")
        return {n: getattr(self, n) for n in names}


def _rabi3(params):
    if params.rabi3 is None:
        raise ValueError("rabi3 is required for the parametric closed forms")
    return complex(params.rabi3)


def effective_rabi(params: SystemParams):
    """Return (Omega_tilde, theta, gamma_mix); raises OverdampedError below the exceptional point."""
    r = DerivedRates.from_params(params)
    W3 = _rabi3(params)
    half_diff = (r.gamma_110 - r.gamma_001) / 2
    arg = abs(W3) ** 2 - half_diff ** 2
    if not arg > 0:
        raise OverdampedError(
            f"overdamped: |rabi3|^2 = {abs(W3) ** 2:.6g} must exceed "
            f"(gamma_110 - gamma_001)^2/4 = {half_diff ** 2:.6g}"
        )
    return math.sqrt(arg), float(np.angle(W3)), r.gamma_mix


def params_for_effective_rabi(mu_omega, mu_v, gamma_e, rabi_tilde=1.0, omega=20.0,
                              omega_v=1.0, theta=0.0) -> SystemParams:
    """Resonant parameter set whose effective Rabi frequency equals ``rabi_tilde``."""
    r = DerivedRates(mu_omega, mu_v, gamma_e)
    mag = math.sqrt(rabi_tilde ** 2 + (r.gamma_110 - r.gamma_001) ** 2 / 4)
    return SystemParams(omega_e=omega + omega_v, omega=omega, omega_v=omega_v,
                        gamma_e=gamma_e, mu_omega=mu_omega, mu_v=mu_v,
                        rabi3=mag * complex(math.cos(theta), math.sin(theta)))


def _require_resonance(params):
    d = params.detuning
    if abs(d) > RESONANCE_TOL * max(params.omega_e, 1.0):
        raise DetuningError(f"closed forms need exact resonance, detuning = {d:.3g}; "
                            "use the master-equation integrator instead")


def entangled_amplitudes(t, params: SystemParams, rotating: bool = False):
    """Deterministic (C_001, C_110) for the |001> start at exact resonance.

    With ``rotating=True`` the common carrier exp(-i omega_e t) is dropped.
    """
    _require_resonance(params)
    W, theta, _ = effective_rabi(params)
    r = DerivedRates.from_params(params)
    t = np.asarray(t, dtype=float)
    a = (r.gamma_110 - r.gamma_001) / 2
    env = np.exp(-r.Gamma * t / 2)
    if not rotating:
        env = env * np.exp(-1j * params.omega_e * t)
    s, c = np.sin(W * t), np.cos(W * t)
    C001 = env * (c + (a / W) * s)
    C110 = -1j * np.exp(-1j * theta) * (abs(_rabi3(params)) / W) * env * s
    return C001, C110


def _rate_scale(*rates):
    return sum(abs(x) for x in rates)


def _exp_diff(a, b, t, scale):
    """(exp(-a t) - exp(-b t)) / (b - a), with the t*exp(-a t) limit near a = b."""
    t = np.asarray(t, dtype=float)
    den = b - a
    if abs(den) < DEGENERACY_RTOL * max(scale, 1e-300):
        return t * np.exp(-0.5 * (a + b) * t)
    return np.exp(-b * t) * np.expm1(den * t) / den if den < 0 else \
        -np.exp(-a * t) * np.expm1(-den * t) / den


def occupations_closed_form(t, params: SystemParams):
    """Mean occupations (|C_100|^2, |C_010|^2, |C_000|^2) in the strong-coupling limit.

    The ground-state share is written as 1 - exp(-Gamma t) - |C_100|^2 - |C_010|^2,
    which is algebraically identical to the three-term expression and stays
    finite on the degenerate surfaces mu_v - mu_omega - gamma = 0 and
    mu_omega - mu_v - gamma = 0.
    """
    mw, mv, g = params.mu_omega, params.mu_v, params.gamma_e
    t = np.asarray(t, dtype=float)
    a = (mw + mv + g) / 2
    scale = _rate_scale(mw, mv, g)
    c100 = 0.5 * mw * _exp_diff(a, mv, t, scale)
    c010 = 0.5 * mv * _exp_diff(a, mw, t, scale)
    c000 = -np.expm1(-a * t) - c100 - c010
    return c100, c010, c000


def _block_matrix(params):
    """Non-Hermitian generator of (C_110, C_001) in the frame rotating at omega_e."""
    r = DerivedRates.from_params(params)
    W3 = _rabi3(params)
    return np.array([[params.detuning - 1j * r.gamma_110, np.conj(W3)],
                     [W3, -1j * r.gamma_001]], dtype=complex)


def occupations_ode(t_grid, params: SystemParams, rtol=1e-10, atol=1e-12):
    """Occupations from the exact mean-population ODEs, driven by the 2x2 block dynamics.

    No strong-coupling approximation and no resonance requirement.  Returns
    (|C_100|^2, |C_010|^2, |C_000|^2, |C_110|^2, |C_001|^2) on ``t_grid``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    mw, mv, g = params.mu_omega, params.mu_v, params.gamma_e
    B = _block_matrix(params)

    def rhs(_, y):
        amp = y[0:2] + 1j * y[2:4]
        damp = -1j * (B @ amp)
        p110, p001 = abs(amp[0]) ** 2, abs(amp[1]) ** 2
        c010, c100 = y[4], y[5]
        return np.concatenate([
            damp.real, damp.imag,
            [-mw * c010 + mv * p110,
             -mv * c100 + mw * p110,
             g * p001 + mw * c010 + mv * c100],
        ])

    y0 = np.array([0, 1, 0, 0, 0, 0, 0], dtype=float)
    if len(t_grid) == 0:
        raise ValueError("empty time grid")
    sol = solve_ivp(rhs, (t_grid[0], t_grid[-1]), y0, t_eval=t_grid, method="DOP853",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"occupation ODE failed: {sol.message}")
    y = sol.y
    amp = y[0:2] + 1j * y[2:4]
    return y[5], y[4], y[6], np.abs(amp[0]) ** 2, np.abs(amp[1]) ** 2


@dataclass
class AmplitudeRecord:
    """Deterministic amplitudes and mean occupations of the five states on a time grid."""

    t: np.ndarray
    C000: np.ndarray
    C010: np.ndarray
    C100: np.ndarray
    C110: np.ndarray
    C001: np.ndarray
    occupations: dict

    STATES = ("000", "010", "100", "110", "001")

    @classmethod
    def closed_form(cls, t, params: SystemParams, rotating=False) -> "AmplitudeRecord":
        t = np.asarray(t, dtype=float)
        C001, C110 = entangled_amplitudes(t, params, rotating=rotating)
        c100, c010, c000 = occupations_closed_form(t, params)
        zero = np.zeros_like(t, dtype=complex)
        occ = {"000": c000, "010": c010, "100": c100,
               "110": np.abs(C110) ** 2, "001": np.abs(C001) ** 2}
        return cls(t, zero, zero.copy(), zero.copy(), C110, C001, occ)


def eigenfrequencies(detuning_grid, params: SystemParams):
    """Complex eigenvalues (lambda_+, lambda_-) of the (110, 001) block versus detuning.

    ``detuning_grid`` holds delta = omega + omega_v - omega_e values applied by
    moving omega + omega_v at fixed omega_e.  Branch ``+`` has the larger real part.
    """
    r = DerivedRates.from_params(params)
    W3 = abs(_rabi3(params))
    d = np.asarray(detuning_grid, dtype=float)
    mean = params.omega_e + d / 2 - 0.5j * (r.gamma_110 + r.gamma_001)
    root = np.sqrt(((d - 1j * (r.gamma_110 - r.gamma_001)) / 2) ** 2 + W3 ** 2 + 0j)
    return mean + root, mean - root


def _correlator_rotating(t, tau, params):
    r = DerivedRates.from_params(params)
    W, _, _ = effective_rabi(params)
    G, gn, gd = r.Gamma, r.gamma_n, r.gamma_d
    t = np.asarray(t, dtype=float)
    tau = np.asarray(tau, dtype=float)
    rabi = np.exp(-r.gamma_ac * tau - G * t) * np.sin(W * t) * np.sin(W * (t + tau))

    # first two bracket terms regrouped so that gamma_n -> 0 stays finite
    if abs(gn) > 1e-12 * max(G, 1e-300):
        grow = -np.expm1(-gn * t) / (2 * gn)
    else:
        grow = t / 2 + 0 * gn
    bracket = (np.exp(-2 * r.gamma_010 * t) * (grow - gn / (2 * (4 * W ** 2 + gn ** 2)))
               - np.exp(2j * W * t - G * t) / (4 * (2j * W - gn))
               + np.exp(-2j * W * t - G * t) / (4 * (2j * W + gn)))
    cascade = np.exp(-r.gamma_010 * tau) * params.mu_v * bracket

    z = np.expm1((-gd + 1j * W) * tau) / (-gd + 1j * W) * (1 - np.exp(2j * W * t))
    cross = np.exp(-r.gamma_010 * tau - G * t) * params.mu_v / 4 * (z + np.conj(z))
    return rabi + cascade + cross


def correlator_analytic(t, tau, params: SystemParams, field: str = "photon",
                        rotating: bool = False):
    """Two-time field correlator <A^+(t) A(t+tau)> at exact resonance.

    ``field="phonon"`` evaluates the photon expression with the two bosonic
    modes exchanged.  With ``rotating=True`` the carrier exp(-i w tau) of the
    emitting mode is dropped.  Broadcasting follows numpy rules on (t, tau).
    """
    _require_resonance(params)
    if field == "phonon":
        params = params.swapped_modes()
    elif field != "photon":
        raise ValueError(f"field must be 'photon' or 'phonon', got {field!r}")
    K = _correlator_rotating(t, tau, params)
    if not rotating:
        K = K * np.exp(-1j * params.omega * np.asarray(tau, dtype=float))
    return K


def correlator_table(params: SystemParams, t_grid, tau_grid, field: str = "photon"):
    """Analytic correlator as a :class:`~parametric_qed.lindblad_oracle.CorrelatorTable`."""
    from .lindblad_oracle import CorrelatorTable

    t_grid = np.asarray(t_grid, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    K = correlator_analytic(t_grid[:, None], tau_grid[None, :], params, field, rotating=True)
    carrier = params.omega if field == "photon" else params.omega_v
    return CorrelatorTable(t_grid, tau_grid, K, carrier=carrier, field=field)
