"""Stochastic state-vector Monte Carlo on the five-state manifold of the |001> start.

Component order is (000, 010, 100, 110, 001) with labels |phonon, photon, electron>.
The non-Hermitian drift acts as exact half-step propagators around an Ito
noise kick evaluated at the midpoint state (a Strang split of the
Euler-Maruyama step), so the deterministic part is exact for any dt and the
ensemble mean inherits second-order accuracy.

Random streams: trajectory k draws from ``numpy.random.PCG64`` seeded with
``SeedSequence(seed, spawn_key=(k,))``; results do not depend on batching.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .model import ConfigError, SystemParams

STATES = ("000", "010", "100", "110", "001")
I000, I010, I100, I110, I001 = range(5)
ABORT_LIMIT = 1e6
MAX_ABORT_FRACTION = 0.01


class EnsembleError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseConfig:
    seed: int = 12345
    dt: float = 0.01
    n_trajectories: int = 1000
    batch_size: int = 256

    def __post_init__(self):
        problems = []
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            problems.append(f"noise.seed: must be an integer in [0, 2^64), got {self.seed!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            problems.append(f"noise.dt: must be positive, got {self.dt!r}")
        if int(self.n_trajectories) != self.n_trajectories or self.n_trajectories < 100:
            problems.append(f"noise.n_trajectories: must be an integer >= 100, got {self.n_trajectories!r}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            problems.append("noise.batch_size: must be a positive integer")
        if problems:
            raise ConfigError(problems)
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "n_trajectories", int(self.n_trajectories))

    def check(self, params: SystemParams) -> None:
        top = max(params.rates)
        if self.dt * top >= 0.01:
            raise ConfigError(f"noise.dt: dt*max(rate) = {self.dt * top:.3g} must be < 0.01")

    @classmethod
    def from_dict(cls, data, where="noise") -> "NoiseConfig":
        allowed = set(cls.__dataclass_fields__)
        problems = [f"{where}.{k}: unknown key" for k in data if k not in allowed]
        try:
            obj = cls(**{k: v for k, v in data.items() if k in allowed})
        except ConfigError as exc:
            problems += exc.problems
        if problems:
            raise ConfigError(problems)
        return obj


def effective_hamiltonian(params: SystemParams, frame=(0.0, 0.0)) -> np.ndarray:
    """5x5 non-Hermitian drift generator (i dC/dt = H_eff C) in a frame rotating at (w_c, w_b)."""
    if params.rabi3 is None:
        raise ConfigError("rabi3: required for the stochastic model")
    w_c, w_b = frame
    om, ov, oe = params.omega - w_c, params.omega_v - w_b, params.omega_e - w_c - w_b
    g010, g100 = params.mu_omega / 2, params.mu_v / 2
    g110, g001 = g010 + g100, params.gamma_e / 2
    H = np.diag([0.0, om - 1j * g010, ov - 1j * g100, om + ov - 1j * g110, oe - 1j * g001])
    H[I001, I110] = params.rabi3
    H[I110, I001] = np.conj(params.rabi3)
    return H


def noise_increment(state: np.ndarray, params: SystemParams, f_e, f_em, f_p, dt) -> np.ndarray:
    """-i R dt for the downward-coupled noise sources; works on (..., 5) arrays."""
    sg, sw, sv = math.sqrt(params.gamma_e), math.sqrt(params.mu_omega), math.sqrt(params.mu_v)
    f_e, f_em, f_p = (np.asarray(f) for f in (f_e, f_em, f_p))
    R = np.zeros(np.broadcast_shapes(state.shape), dtype=complex)
    R[..., I000] = (sg * state[..., I001] * f_e + sw * state[..., I010] * f_em
                    + sv * state[..., I100] * f_p)
    R[..., I010] = sv * state[..., I110] * f_p
    R[..., I100] = sw * state[..., I110] * f_em
    return -1j * dt * R


class _Propagator:
    def __init__(self, params, dt, frame):
        self.params, self.dt = params, dt
        self.half = expm(-0.5j * dt * effective_hamiltonian(params, frame))
        self.halfT = self.half.T.copy()

    def step(self, state, f_e, f_em, f_p):
        mid = state @ self.halfT
        mid = mid + noise_increment(mid, self.params, f_e, f_em, f_p, self.dt)
        return mid @ self.halfT


def step_sse(state, params: SystemParams, f_e, f_em, f_p, dt, frame=(0.0, 0.0)):
    """Advance the five amplitudes by one step given the three complex noise draws."""
    state = np.asarray(state, dtype=complex)
    return _Propagator(params, dt, frame).step(state, f_e, f_em, f_p)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def draw_noise(rng: np.random.Generator, n_steps: int, dt: float) -> np.ndarray:
    """Circular complex Gaussian noise, shape (n_steps, 3) for (f_e, f_em, f_p), <f* f> = 1/dt."""
    z = rng.standard_normal((n_steps, 3, 2))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2 * dt)


def _batch_noise(cfg, start, stop, n_steps):
    return np.stack([draw_noise(trajectory_rng(cfg.seed, k), n_steps, cfg.dt)
                     for k in range(start, stop)], axis=1)  # (n_steps, B, 3)


def _initial(batch):
    psi = np.zeros((batch, 5), dtype=complex)
    psi[:, I001] = 1.0
    return psi


def _steps_for(times, dt, name):
    times = np.asarray(times, dtype=float)
    k = np.rint(times / dt).astype(int)
    if np.any(np.abs(k * dt - times) > 1e-9 * np.maximum(1.0, np.abs(times))):
        raise ValueError(f"{name} must lie on multiples of dt={dt}")
    return k


def _bad(psi):
    return ~np.all(np.isfinite(psi), axis=1) | (np.abs(psi).max(axis=1) > ABORT_LIMIT)


@dataclass
class EnsembleResult:
    """Ensemble means and standard errors of populations and norm at checkpoint times."""

    t: np.ndarray
    mean: np.ndarray = field(repr=False)      # (n_t, 5)
    stderr: np.ndarray = field(repr=False)    # (n_t, 5)
    norm_mean: np.ndarray = field(repr=False)
    norm_stderr: np.ndarray = field(repr=False)
    n_trajectories: int = 0
    n_aborted: int = 0
    noise_stats: dict | None = field(default=None, repr=False)

    def population(self, state: str):
        k = STATES.index(state)
        return self.mean[:, k], self.stderr[:, k]


def _se(s1, s2, n, shift=0.0):
    """Mean and standard error from sums of (x - shift) and (x - shift)^2.

    Shifting by a representative sample avoids the cancellation that would
    otherwise leave ~1e-8 of spurious error on zero-variance ensembles.
    """
    mean = s1 / n
    var = np.maximum(s2 / n - mean ** 2, 0.0) * n / max(n - 1, 1)
    return shift + mean, np.sqrt(var / n)


# estimator pairs (a, b) for <dN_a^* dN_b>/dt and the matching prediction
_PAIRS = (("100", "100"), ("010", "010"), ("000", "000"), ("000", "100"), ("000", "010"),
          ("110", "110"), ("001", "001"), ("100", "010"))


def _predicted_rate(psi, params, a, b):
    mw, mv, g = params.mu_omega, params.mu_v, params.gamma_e
    c = psi
    if (a, b) == ("100", "100"):
        return mw * np.abs(c[:, I110]) ** 2
    if (a, b) == ("010", "010"):
        return mv * np.abs(c[:, I110]) ** 2
    if (a, b) == ("000", "000"):
        return (g * np.abs(c[:, I001]) ** 2 + mw * np.abs(c[:, I010]) ** 2
                + mv * np.abs(c[:, I100]) ** 2)
    if (a, b) == ("000", "100"):
        return mw * np.conj(c[:, I010]) * c[:, I110]
    if (a, b) == ("000", "010"):
        return mv * np.conj(c[:, I100]) * c[:, I110]
    return np.zeros(len(c))


def run_ensemble(params: SystemParams, t_max: float, cfg: NoiseConfig, checkpoints=None,
                 track_noise: bool = False, frame=None) -> EnsembleResult:
    """Simulate ``cfg.n_trajectories`` trajectories from |001> and average populations.

    ``checkpoints`` defaults to every step up to ``t_max``.  With
    ``track_noise`` each trajectory also accumulates the integrated noise
    products and their model predictions used by
    :func:`empirical_noise_correlators`.
    """
    cfg.check(params)
    if frame is None:
        frame = (params.omega, params.omega_v)
    n_steps = int(round(t_max / cfg.dt))
    if checkpoints is None:
        ck = np.arange(n_steps + 1)
    else:
        ck = _steps_for(checkpoints, cfg.dt, "checkpoints")
        n_steps = max(n_steps, int(ck.max()))
    t = ck * cfg.dt
    want = np.zeros(n_steps + 1, dtype=int) - 1
    want[ck] = np.arange(len(ck))
    prop = _Propagator(params, cfg.dt, frame)

    s1 = np.zeros((len(ck), 5))
    s2 = np.zeros((len(ck), 5))
    n1 = np.zeros(len(ck))
    n2 = np.zeros(len(ck))
    n_good = 0
    n_bad = 0
    shift = nshift = None
    acc_obs, acc_pred = [], []
    for start in range(0, cfg.n_trajectories, cfg.batch_size):
        stop = min(start + cfg.batch_size, cfg.n_trajectories)
        B = stop - start
        noise = _batch_noise(cfg, start, stop, n_steps)
        psi = _initial(B)
        pops = np.zeros((len(ck), B, 5))
        alive = np.ones(B, dtype=bool)
        if track_noise:
            obs = np.zeros((len(_PAIRS), B), dtype=complex)
            pred = np.zeros((len(_PAIRS), B), dtype=complex)
        if want[0] >= 0:
            pops[want[0]] = np.abs(psi) ** 2
        for k in range(n_steps):
            f = noise[k]
            mid = psi @ prop.halfT
            dN = noise_increment(mid, params, f[:, 0], f[:, 1], f[:, 2], cfg.dt)
            if track_noise:
                for p, (a, b) in enumerate(_PAIRS):
                    ia, ib = STATES.index(a), STATES.index(b)
                    obs[p] += np.conj(dN[:, ia]) * dN[:, ib]
                    pred[p] += _predicted_rate(mid, params, a, b) * cfg.dt
            psi = (mid + dN) @ prop.halfT
            if k % 64 == 63:
                alive &= ~_bad(psi)
            if want[k + 1] >= 0:
                pops[want[k + 1]] = np.abs(psi) ** 2
        alive &= ~_bad(psi)
        pops = pops[:, alive]
        n_good += int(alive.sum())
        n_bad += B - int(alive.sum())
        norm = pops.sum(axis=2)
        if shift is None and pops.shape[1]:
            shift, nshift = pops[:, 0].copy(), norm[:, 0].copy()
        if shift is not None:
            dp = pops - shift[:, None]
            dn = norm - nshift[:, None]
            s1 += dp.sum(axis=1)
            s2 += (dp ** 2).sum(axis=1)
            n1 += dn.sum(axis=1)
            n2 += (dn ** 2).sum(axis=1)
        if track_noise:
            acc_obs.append(obs[:, alive])
            acc_pred.append(pred[:, alive])
    if n_bad > MAX_ABORT_FRACTION * cfg.n_trajectories:
        raise EnsembleError(f"{n_bad} of {cfg.n_trajectories} trajectories aborted (NaN/overflow)")
    if shift is None:
        raise EnsembleError("all trajectories aborted")
    mean, se = _se(s1, s2, n_good, shift)
    nm, nse = _se(n1, n2, n_good, nshift)
    stats = None
    if track_noise:
        stats = {"pairs": _PAIRS, "observed": np.concatenate(acc_obs, axis=1),
                 "predicted": np.concatenate(acc_pred, axis=1), "t_max": n_steps * cfg.dt,
                 "params": params}
    return EnsembleResult(t, mean, se, nm, nse, n_good, n_bad, stats)


@dataclass(frozen=True)
class NoiseCorrelatorEstimate:
    """Time-integrated noise correlator: observed vs model, both per unit time."""

    pair: tuple
    observed: complex
    predicted: complex
    stderr: float           # of (observed - predicted)
    ratio: float | None     # observed / (predicted / rate) for the diagonal entries
    ratio_stderr: float | None
    expected_ratio: float | None

    @property
    def z_score(self) -> float:
        return abs(self.observed - self.predicted) / self.stderr if self.stderr > 0 else (
            0.0 if self.observed == self.predicted else math.inf)


def empirical_noise_correlators(ensemble: EnsembleResult) -> dict:
    """Estimate the diffusion matrix entries from the recorded noise increments.

    Each trajectory contributes Z = sum_k dN_a^* dN_b (the time integral
    of D_ab) and the model prediction integrated along the same trajectory.
    """
    st = ensemble.noise_stats
    if st is None:
        raise ValueError("ensemble was run without track_noise=True")
    n = st["observed"].shape[1]
    if n < 1000:
        raise ValueError(f"need at least 1000 trajectories, got {n}")
    params = st["params"]
    unit_rate = {("100", "100"): params.mu_omega, ("010", "010"): params.mu_v}
    T = st["t_max"]
    out = {}
    for p, pair in enumerate(st["pairs"]):
        obs = st["observed"][p]
        pred = st["predicted"][p]
        diff = obs - pred
        se = math.sqrt((np.var(diff.real, ddof=1) + np.var(diff.imag, ddof=1)) / n)
        ratio = ratio_se = expected = None
        rate = unit_rate.get(pair)
        if rate:
            # ratio estimator D / <|C_110|^2> with a delta-method error
            base = pred.real / rate
            mo, mb = obs.real.mean(), base.mean()
            ratio = mo / mb
            resid = obs.real - ratio * base
            ratio_se = math.sqrt(np.var(resid, ddof=1) / n) / mb
            expected = rate
        out["%s,%s" % pair] = NoiseCorrelatorEstimate(
            pair, complex(obs.mean()) / T, complex(pred.mean()) / T, se / T,
            ratio, ratio_se, expected)
    return out


@dataclass
class Trajectory:
    t: np.ndarray
    amplitudes: np.ndarray  # (n_t, 5), rotating-frame


def simulate_trajectory(params: SystemParams, t_max: float, cfg: NoiseConfig, index: int = 0,
                        frame=None) -> Trajectory:
    """Single trajectory with the same random stream the ensemble uses for ``index``."""
    if frame is None:
        frame = (params.omega, params.omega_v)
    n_steps = int(round(t_max / cfg.dt))
    prop = _Propagator(params, cfg.dt, frame)
    f = draw_noise(trajectory_rng(cfg.seed, index), n_steps, cfg.dt)
    out = np.empty((n_steps + 1, 5), dtype=complex)
    psi = _initial(1)[0]
    out[0] = psi
    for k in range(n_steps):
        psi = prop.step(psi, *f[k])
        out[k + 1] = psi
    return Trajectory(np.arange(n_steps + 1) * cfg.dt, out)


def _lower(psi, field):
    out = np.zeros_like(psi)
    if field == "photon":
        out[..., I000] = psi[..., I010]
        out[..., I100] = psi[..., I110]
    elif field == "phonon":
        out[..., I000] = psi[..., I100]
        out[..., I010] = psi[..., I110]
    else:
        raise ValueError(f"field must be 'photon' or 'phonon', got {field!r}")
    return out


def correlator_mc(params: SystemParams, cfg: NoiseConfig, t_grid, tau_grid,
                  field: str = "photon"):
    """Monte-Carlo estimate of <A^+(t) A(t+tau)> with shared noise on [t, t+tau].

    Values are in the frame rotating at (omega, omega_v); the returned table
    carries the emitting mode's frequency as carrier.
    """
    from .lindblad_oracle import CorrelatorTable

    cfg.check(params)
    frame = (params.omega, params.omega_v)
    t_grid = np.asarray(t_grid, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    kt = _steps_for(t_grid, cfg.dt, "t_grid")
    ktau = _steps_for(tau_grid, cfg.dt, "tau_grid")
    n_steps = int(kt.max() + ktau.max())
    prop = _Propagator(params, cfg.dt, frame)
    nt, ntau = len(kt), len(ktau)
    s1 = np.zeros((nt, ntau), dtype=complex)
    s2r = np.zeros((nt, ntau))
    s2i = np.zeros((nt, ntau))
    n_good = n_bad = 0
    shift = None
    for start in range(0, cfg.n_trajectories, cfg.batch_size):
        stop = min(start + cfg.batch_size, cfg.n_trajectories)
        B = stop - start
        noise = _batch_noise(cfg, start, stop, n_steps)
        psi = _initial(B)
        phi = np.zeros((nt, B, 5), dtype=complex)
        started = np.zeros(nt, dtype=bool)
        K = np.zeros((nt, ntau, B), dtype=complex)

        def record(step):
            for i in np.nonzero(kt == step)[0]:
                phi[i] = _lower(psi, field)
                started[i] = True
            Apsi = _lower(psi, field)
            for i in np.nonzero(started)[0]:
                j = np.nonzero(ktau == step - kt[i])[0]
                if len(j):
                    K[i, j[0]] = np.einsum("bk,bk->b", phi[i].conj(), Apsi)

        record(0)
        for k in range(n_steps):
            f = noise[k]
            psi = prop.step(psi, f[:, 0], f[:, 1], f[:, 2])
            live = np.nonzero(started)[0]
            if len(live):
                phi[live] = prop.step(phi[live], f[None, :, 0], f[None, :, 1], f[None, :, 2])
            record(k + 1)
        alive = ~_bad(psi)
        K = K[:, :, alive]
        n_good += int(alive.sum())
        n_bad += B - int(alive.sum())
        if shift is None and K.shape[2]:
            shift = K[:, :, 0].copy()
        if shift is not None:
            dK = K - shift[:, :, None]
            s1 += dK.sum(axis=2)
            s2r += (dK.real ** 2).sum(axis=2)
            s2i += (dK.imag ** 2).sum(axis=2)
    if n_bad > MAX_ABORT_FRACTION * cfg.n_trajectories:
        raise EnsembleError(f"{n_bad} of {cfg.n_trajectories} trajectories aborted (NaN/overflow)")
    if shift is None:
        raise EnsembleError("all trajectories aborted")
    mr, ser = _se(s1.real, s2r, n_good, shift.real)
    mi, sei = _se(s1.imag, s2i, n_good, shift.imag)
    carrier = params.omega if field == "photon" else params.omega_v
    return CorrelatorTable(t_grid, tau_grid, mr + 1j * mi, carrier=carrier, field=field,
                           stderr=ser + 1j * sei)
