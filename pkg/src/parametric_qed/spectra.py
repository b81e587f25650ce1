"""Emission spectra: closed forms, numeric transforms of correlators, peaks and rate inversion.

Spectra are functions of the angular frequency nu; internally everything is
evaluated on the detuning d = nu - center, where the center is the emitting
mode frequency (omega for photons, omega_v for phonons).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.signal import find_peaks

from .analytic import DerivedRates, correlator_table, effective_rabi
from .model import SystemParams

DEFAULT_POINTS = 4001
DEFAULT_HALF_SPAN = 3.0   # in units of the effective Rabi frequency


@dataclass
class Spectrum:
    detuning: np.ndarray
    S: np.ndarray
    center: float = 0.0
    field: str = "photon"
    S1: np.ndarray | None = dc_field(default=None, repr=False)
    S2: np.ndarray | None = dc_field(default=None, repr=False)
    S3: np.ndarray | None = dc_field(default=None, repr=False)
    truncation_error: float | None = None

    @property
    def nu(self) -> np.ndarray:
        return self.center + self.detuning


def default_detuning_grid(params: SystemParams, points=DEFAULT_POINTS, half_span=DEFAULT_HALF_SPAN):
    W, _, _ = effective_rabi(params)
    return np.linspace(-half_span * W, half_span * W, points)


def spectrum_terms(detuning, mu_omega, mu_v, gamma_e, rabi_tilde):
    """(S1, S2, S3) of the photon spectrum at detuning nu - omega.

    S1 carries the Rabi doublet, S2 the central line of the cascade
    110 -> 100 -> 000, S3 the interference correction.
    """
    r = DerivedRates(mu_omega, mu_v, gamma_e)
    W2 = rabi_tilde ** 2
    G, gac, gd, Gd = r.Gamma, r.gamma_ac, r.gamma_d, r.Gamma_d
    d = np.asarray(detuning, dtype=float)
    s = gac - 1j * d
    pre = W2 / (math.pi * G * (4 * W2 + G ** 2))
    central = 1.0 / (mu_omega ** 2 / 4 + d ** 2)
    S1 = 2 * pre * np.real((G + mu_v / 2 - 1j * d) / (s ** 2 + W2))
    S2 = pre * mu_v * central
    pre3 = mu_v * W2 / (math.pi * G * (gd ** 2 + W2) * (4 * W2 + G ** 2))
    S3 = pre3 * (-np.real((Gd * s - 2 * W2 + gd * G) / (s ** 2 + W2))
                 + Gd * (mu_omega / 2) * central)
    return S1, S2, S3


def _analytic(params, detuning, nu, include_s3, field_name):
    center = params.omega
    if params.gamma_e + params.mu_omega + params.mu_v <= 0:
        raise ValueError("spectrum needs at least one nonzero relaxation rate")
    W, _, _ = effective_rabi(params)
    if detuning is None:
        detuning = (np.asarray(nu, dtype=float) - center if nu is not None
                    else default_detuning_grid(params))
    S1, S2, S3 = spectrum_terms(detuning, params.mu_omega, params.mu_v, params.gamma_e, W)
    S = S1 + S2 + S3 if include_s3 else S1 + S2
    return Spectrum(np.asarray(detuning, dtype=float), S, center, field_name, S1, S2, S3)


def photon_spectrum_analytic(params: SystemParams, nu=None, detuning=None,
                             include_s3: bool = True) -> Spectrum:
    """Photon emission spectrum on absolute frequencies ``nu`` or on ``detuning`` from omega."""
    return _analytic(params, detuning, nu, include_s3, "photon")


def phonon_spectrum_analytic(params: SystemParams, nu=None, detuning=None,
                             include_s3: bool = True) -> Spectrum:
    """Phonon emission spectrum: the photon expression with the two bosonic modes exchanged."""
    return _analytic(params.swapped_modes(), detuning, nu, include_s3, "phonon")


def _auto_grids(params, detuning):
    W, _, _ = effective_rabi(params)
    rates = [x for x in params.rates if x > 0]
    if not rates:
        raise ValueError("correlator does not decay with all rates zero: the spectrum "
                         "integral diverges; set at least one relaxation rate")
    T = 10.0 / min(rates)
    h = 0.25 / (np.abs(detuning).max() + 2 * W)
    n = int(math.ceil(T / h))
    return np.linspace(0, n * h, n + 1), np.linspace(0, n * h, n + 1)


def build_correlator(source: str, params: SystemParams, t_grid, tau_grid, field="photon",
                     cfg=None, basis=None):
    """Correlator table from a named source: 'analytic', 'qrt' or 'mc'."""
    if source == "analytic":
        return correlator_table(params, t_grid, tau_grid, field)
    if source == "qrt":
        from .lindblad_oracle import correlator_qrt
        from .model import build_basis, build_hamiltonian, build_operators

        basis = basis or build_basis(1, 1)
        ops = build_operators(basis)
        frame = (params.omega, params.omega_v)
        H = build_hamiltonian("parametric", params, None, ops=ops, frame=frame)
        psi = basis.ket(0, 0, 1)
        rho0 = np.outer(psi, psi.conj())
        carrier = params.omega if field == "photon" else params.omega_v
        return correlator_qrt(rho0, H, params, ops, field, t_grid, tau_grid, carrier=carrier)
    if source == "mc":
        from .stochastic import NoiseConfig, correlator_mc

        return correlator_mc(params, cfg or NoiseConfig(), t_grid, tau_grid, field)
    raise ValueError(f"unknown correlator source {source!r}")


def _fourier_real(G, tau, detuning, chunk=512):
    """(1/pi) Re int_0^tau_max exp(i d tau) G(tau) dtau by the trapezoid rule."""
    h = np.diff(tau)
    w = np.zeros(len(tau))
    w[:-1] += h / 2
    w[1:] += h / 2
    wg = w * G
    out = np.empty(len(detuning))
    for s in range(0, len(detuning), chunk):
        ph = np.exp(1j * np.outer(detuning[s:s + chunk], tau))
        out[s:s + chunk] = np.real(ph @ wg) / math.pi
    return out


def spectrum_from_correlator(source, params: SystemParams | None = None, detuning=None,
                             t_max=None, tau_max=None, field="photon", cfg=None) -> Spectrum:
    """Spectrum from a two-time correlator by double trapezoid quadrature.

    ``source`` is a :class:`CorrelatorTable` or one of 'analytic', 'qrt', 'mc'
    (which then needs ``params``).  Values are transformed in the frame of
    the table, so ``detuning`` is measured from the table's carrier.
    """
    if isinstance(source, str):
        if params is None:
            raise ValueError("params are required to build a correlator")
        if detuning is None:
            detuning = default_detuning_grid(params)
        detuning = np.asarray(detuning, dtype=float)
        t_grid, tau_grid = _auto_grids(params, detuning)
        h = t_grid[1] - t_grid[0]
        if source == "mc":
            from .stochastic import NoiseConfig

            cfg = cfg or NoiseConfig()
            h = max(1, round(h / cfg.dt)) * cfg.dt
        t_max = t_grid[-1] if t_max is None else t_max
        tau_max = tau_grid[-1] if tau_max is None else tau_max
        t_grid = np.arange(int(round(t_max / h)) + 1) * h
        tau_grid = np.arange(int(round(tau_max / h)) + 1) * h
        table = build_correlator(source, params, t_grid, tau_grid, field, cfg)
    else:
        table = source
        if detuning is None:
            raise ValueError("detuning grid is required for a precomputed table")
        detuning = np.asarray(detuning, dtype=float)
    K = table.values
    peak = np.abs(K).max()
    if peak == 0:
        raise ValueError("correlator is identically zero")
    edge = max(np.abs(K[-1, :]).max(), np.abs(K[:, -1]).max())
    if edge > 1e-2 * peak:
        raise ValueError(f"correlator has not decayed on the grid (edge/peak = {edge / peak:.2g}); "
                         "the spectrum integral diverges or the grid is too short")
    G = np.trapezoid(K, table.t, axis=0)
    S = _fourier_real(G, table.tau, detuning)
    # tail bound: edge values continued with the slowest exponential decay
    rates = [x / 2 for x in (params.rates if params else ()) if x > 0]
    kappa = min(rates) if rates else 1.0 / max(table.t[-1], table.tau[-1])
    tail_t = np.trapezoid(np.abs(K[-1, :]), table.tau) / kappa
    tail_tau = np.trapezoid(np.abs(K[:, -1]), table.t) / kappa
    err = (tail_t + tail_tau) / math.pi
    return Spectrum(detuning, S, table.carrier, table.field, truncation_error=float(err))


@dataclass
class PeakReport:
    positions: np.ndarray        # detuning from the spectrum center
    heights: np.ndarray
    fwhm: np.ndarray
    half_widths: np.ndarray      # (n, 2): left, right; NaN where no crossing
    center: float = 0.0
    field: str = "photon"
    ratio: float | None = None
    flags: list = dc_field(default_factory=list)

    @property
    def n_peaks(self) -> int:
        return len(self.positions)

    @property
    def frequencies(self) -> np.ndarray:
        return self.center + self.positions

    def to_dict(self) -> dict:
        key = "xi_omega" if self.field == "photon" else "xi_Omega"
        return {"field": self.field, "center": self.center,
                "positions": self.frequencies.tolist(), "detunings": self.positions.tolist(),
                "heights": self.heights.tolist(), "fwhm": self.fwhm.tolist(),
                key: self.ratio, "flags": list(self.flags)}


def _half_crossing(d, S, i, step, half):
    """Interpolated distance from peak i to the half-height level, or NaN."""
    j = i
    while 0 <= j + step < len(S):
        nxt = j + step
        if S[nxt] <= half:
            frac = (S[j] - half) / (S[j] - S[nxt])
            return abs(d[j] + frac * (d[nxt] - d[j]) - d[i])
        if S[nxt] > S[j]:       # climbing into the next peak first
            return math.nan
        j = nxt
    return math.nan


def peak_analysis(spectrum: Spectrum, max_peaks: int = 3, rel_height: float = 1e-3,
                  min_rate: float | None = None) -> PeakReport:
    """Locate up to ``max_peaks`` maxima, measure FWHM and the central-to-side height ratio.

    A half width with no half-height crossing (overlapping lines) is replaced
    by the opposite side and flagged.
    """
    d, S = spectrum.detuning, spectrum.S
    flags = []
    if min_rate is not None and len(d) > 1 and np.diff(d).max() > min_rate / 4:
        flags.append("coarse_grid")
    idx, props = find_peaks(S, height=rel_height * S.max(), prominence=0)
    if len(idx) > max_peaks:
        keep = np.argsort(props["prominences"])[::-1][:max_peaks]
        idx = np.sort(idx[keep])
    hw = np.full((len(idx), 2), np.nan)
    fwhm = np.full(len(idx), np.nan)
    for k, i in enumerate(idx):
        half = S[i] / 2
        left, right = _half_crossing(d, S, i, -1, half), _half_crossing(d, S, i, +1, half)
        hw[k] = left, right
        if np.isnan(left) and np.isnan(right):
            flags.append(f"peak{k}_no_half_height")
        elif np.isnan(left) or np.isnan(right):
            fwhm[k] = 2 * np.nanmax([left, right])
            flags.append(f"peak{k}_one_sided_width")
        else:
            fwhm[k] = left + right
    ratio = None
    if len(idx) == 3:
        ratio = float(S[idx[1]] / (0.5 * (S[idx[0]] + S[idx[2]])))
    else:
        flags.append("weak_coupling" if len(idx) < 3 else "extra_peaks")
    return PeakReport(d[idx], S[idx], fwhm, hw, spectrum.center, spectrum.field, ratio, flags)


def predicted_ratios(params_or_rates) -> tuple[float, float]:
    """(xi_omega, xi_Omega) from the relaxation rates in the strong-coupling limit."""
    if isinstance(params_or_rates, SystemParams):
        mw, mv, g = params_or_rates.rates
    else:
        mw, mv, g = params_or_rates
    if mw <= 0 or mv <= 0:
        raise ValueError("both bosonic rates must be positive for the peak ratios")
    return mv * (mw + g + 3 * mv) / mw ** 2, mw * (mv + g + 3 * mw) / mv ** 2


def real_cubic_roots(a, b, c, d):
    """Real roots of a x^3 + b x^2 + c x + d (a != 0), closed form plus one Newton polish."""
    if a == 0:
        raise ValueError("leading coefficient must be nonzero")
    B, C, D = b / a, c / a, d / a
    p = C - B * B / 3
    q = 2 * B ** 3 / 27 - B * C / 3 + D
    shift = -B / 3
    disc = (q / 2) ** 2 + (p / 3) ** 3
    if disc > 0:
        sq = math.sqrt(disc)
        u = math.copysign(abs(-q / 2 + sq) ** (1 / 3), -q / 2 + sq)
        v = math.copysign(abs(-q / 2 - sq) ** (1 / 3), -q / 2 - sq)
        roots = [u + v + shift]
    elif p == 0:
        roots = [shift]
    else:
        m = 2 * math.sqrt(-p / 3)
        arg = max(-1.0, min(1.0, 3 * q / (p * m)))
        th = math.acos(arg) / 3
        roots = [m * math.cos(th - 2 * math.pi * k / 3) + shift for k in range(3)]
    out = []
    for x in roots:
        for _ in range(3):
            f = ((a * x + b) * x + c) * x + d
            fp = (3 * a * x + 2 * b) * x + c
            if fp == 0:
                break
            step = f / fp
            x -= step
            if abs(step) <= 1e-16 * max(1.0, abs(x)):
                break
        out.append(x)
    return sorted(out)


class InconsistentRatiosError(ValueError):
    pass


@dataclass
class RateEstimate:
    x: float                 # mu_v / mu_omega
    y: float                 # gamma_e / mu_omega
    candidates: list
    ambiguous: bool = False

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "candidates": self.candidates,
                "ambiguous": self.ambiguous}


def extract_rates(xi_omega: float, xi_Omega: float) -> RateEstimate:
    """Invert the two peak ratios into x = mu_v/mu_omega and y = gamma_e/mu_omega."""
    if not (xi_omega > 0 and xi_Omega > 0):
        raise ValueError("peak ratios must be positive")
    roots = real_cubic_roots(xi_Omega, 2.0, -2.0, -xi_omega)
    cands = []
    for x in roots:
        if x <= 0:
            continue
        y = xi_Omega * x * x - 3 - x
        if y > 0:
            res = (abs(x * (1 + y + 3 * x) - xi_omega) / xi_omega
                   + abs((x + y + 3) / x ** 2 - xi_Omega) / xi_Omega)
            cands.append((x, y, res))
    if not cands:
        raise InconsistentRatiosError(
            f"inconsistent ratios ({xi_omega:.6g}, {xi_Omega:.6g}): no positive root with y > 0")
    cands.sort(key=lambda c: c[2])
    x, y, _ = cands[0]
    return RateEstimate(x, y, [(c[0], c[1]) for c in cands], len(cands) > 1)


def extract_rates_from_spectra(photon: Spectrum, phonon: Spectrum) -> tuple[RateEstimate, PeakReport, PeakReport]:
    rp, rq = peak_analysis(photon), peak_analysis(phonon)
    if rp.ratio is None or rq.ratio is None:
        raise InconsistentRatiosError("both spectra need three resolved peaks to measure ratios")
    return extract_rates(rp.ratio, rq.ratio), rp, rq
