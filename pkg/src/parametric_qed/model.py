"""System parameters, truncated Fock space and Hamiltonians.

Units: hbar = 1 and every frequency or rate is an angular frequency in one
common (user-chosen) unit.  Kets are ordered |phonon>|photon>|fermion>, so
the label (alpha, n, i) reads "phonon number, photon number, electron level".
"""
from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterator, Mapping

import numpy as np

MAX_DIM = 4096
HERMITICITY_RTOL = 1e-12

KINDS = ("parametric", "molecular", "optomechanical")
MECHANISMS = ("gradient", "molecular", "optomechanical")


class ConfigError(ValueError):
    """Invalid parameter set; ``problems`` lists every violated constraint."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _as_complex(value, name):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"{name}: complex value must be [re, im]")
        value = complex(float(value[0]), float(value[1]))
    elif isinstance(value, Mapping):
        extra = set(value) - {"re", "im"}
        if extra:
            raise ConfigError(f"{name}: unknown keys {sorted(extra)} in complex value")
        value = complex(float(value.get("re", 0.0)), float(value.get("im", 0.0)))
    try:
        value = complex(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: not a number: {value!r}") from None
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise ConfigError(f"{name}: must be finite")
    return value


def _reject_unknown(data: Mapping, allowed, where):
    problems = []
    for key in data:
        if key in ("temperature", "T", "temperature_k", "n_thermal"):
            problems.append(
                f"{where}.{key}: finite reservoir temperature is not supported (T=0 only)"
            )
        elif key not in allowed:
            problems.append(f"{where}.{key}: unknown key")
    return problems


@dataclass(frozen=True)
class SystemParams:
    """Frequencies, relaxation rates and complex couplings of the three-mode system.

    ``omega_v`` is the phonon frequency, ``rabi2`` the two-wave (Jaynes-Cummings)
    coupling and ``rabi3`` the three-wave coupling.  Couplings left as ``None``
    are "not set", which matters for :func:`build_hamiltonian`.
    """

    omega_e: float
    omega: float
    omega_v: float
    gamma_e: float = 0.0
    mu_omega: float = 0.0
    mu_v: float = 0.0
    rabi2: complex | None = None
    rabi3: complex | None = None

    def __post_init__(self):
        problems = []
        for name in ("omega_e", "omega", "omega_v", "gamma_e", "mu_omega", "mu_v"):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                problems.append(f"{name}: not a number: {value!r}")
                continue
            object.__setattr__(self, name, value)
            if not math.isfinite(value):
                problems.append(f"{name}: must be finite")
            elif name in ("omega_e", "omega", "omega_v") and value <= 0:
                problems.append(f"{name}: must be > 0, got {value}")
            elif value < 0:
                problems.append(f"{name}: must be >= 0, got {value}")
        for name in ("rabi2", "rabi3"):
            try:
                object.__setattr__(self, name, _as_complex(getattr(self, name), name))
            except ConfigError as exc:
                problems.extend(exc.problems)
        if problems:
            raise ConfigError(problems)

    @property
    def detuning(self) -> float:
        """delta = omega + omega_v - omega_e, recomputed on every access."""
        return self.omega + self.omega_v - self.omega_e

    @property
    def rates(self) -> tuple[float, float, float]:
        return (self.mu_omega, self.mu_v, self.gamma_e)

    @property
    def theta(self) -> float:
        return cmath.phase(self.rabi3) if self.rabi3 is not None else 0.0

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def swapped_modes(self) -> "SystemParams":
        """Photon <-> phonon exchange: omega <-> omega_v and mu_omega <-> mu_v."""
        return replace(self, omega=self.omega_v, omega_v=self.omega,
                       mu_omega=self.mu_v, mu_v=self.mu_omega)

    def to_dict(self) -> dict:
        out = asdict(self)
        for name in ("rabi2", "rabi3"):
            if out[name] is not None:
                out[name] = [out[name].real, out[name].imag]
        return out

    @classmethod
    def from_dict(cls, data: Mapping, where="params") -> "SystemParams":
        allowed = {f for f in cls.__dataclass_fields__}
        problems = _reject_unknown(data, allowed, where)
        missing = [k for k in ("omega_e", "omega", "omega_v") if k not in data]
        problems += [f"{where}.{k}: required" for k in missing]
        # value checks still run on the known keys so every problem is reported at once
        known = {k: v for k, v in data.items() if k in allowed}
        known.update({k: 1.0 for k in missing})
        try:
            obj = cls(**known)
        except ConfigError as exc:
            problems += [f"{where}.{p}" for p in exc.problems]
        if problems:
            raise ConfigError(problems)
        return obj


@dataclass(frozen=True)
class CouplingSpec:
    """Microscopic origin of the three-wave coupling.

    Only the field belonging to ``mechanism`` is read: ``gradient_overlap`` is
    the precomputed field-gradient bracket (already divided by hbar),
    ``huang_rhys`` the dimensionless Huang-Rhys factor S and ``g_factor`` the
    optomechanical frequency-pull rate g.
    """

    mechanism: str = "gradient"
    huang_rhys: float | None = None
    g_factor: float | None = None
    gradient_overlap: complex | None = None

    def __post_init__(self):
        problems = []
        if self.mechanism not in MECHANISMS:
            problems.append(f"mechanism: must be one of {MECHANISMS}, got {self.mechanism!r}")
        if self.huang_rhys is not None:
            s = float(self.huang_rhys)
            object.__setattr__(self, "huang_rhys", s)
            if not math.isfinite(s) or s < 0:
                problems.append(f"huang_rhys: must be finite and >= 0, got {s}")
        if self.g_factor is not None:
            g = float(self.g_factor)
            object.__setattr__(self, "g_factor", g)
            if not math.isfinite(g):
                problems.append("g_factor: must be finite")
        try:
            object.__setattr__(self, "gradient_overlap",
                               _as_complex(self.gradient_overlap, "gradient_overlap"))
        except ConfigError as exc:
            problems.extend(exc.problems)
        required = {"gradient": "gradient_overlap", "molecular": "huang_rhys",
                    "optomechanical": "g_factor"}.get(self.mechanism)
        if required and getattr(self, required) is None:
            problems.append(f"{required}: required for mechanism {self.mechanism!r}")
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["gradient_overlap"] is not None:
            z = out["gradient_overlap"]
            out["gradient_overlap"] = [z.real, z.imag]
        return out

    @classmethod
    def from_dict(cls, data: Mapping, where="coupling") -> "CouplingSpec":
        allowed = set(cls.__dataclass_fields__)
        problems = _reject_unknown(data, allowed, where)
        try:
            obj = cls(**{k: v for k, v in data.items() if k in allowed})
        except ConfigError as exc:
            problems += [f"{where}.{p}" for p in exc.problems]
        if problems:
            raise ConfigError(problems)
        return obj


@dataclass(frozen=True)
class FockBasis:
    """Truncated product basis |alpha>|n>|i> with alpha <= n_phonon_max, n <= n_photon_max."""

    n_phonon_max: int
    n_photon_max: int

    @property
    def dim(self) -> int:
        return 2 * (self.n_photon_max + 1) * (self.n_phonon_max + 1)

    def index(self, alpha: int, n: int, i: int) -> int:
        if not (0 <= alpha <= self.n_phonon_max and 0 <= n <= self.n_photon_max and i in (0, 1)):
            raise IndexError(f"state ({alpha}, {n}, {i}) outside the truncated basis")
        return (alpha * (self.n_photon_max + 1) + n) * 2 + i

    def label(self, k: int) -> tuple[int, int, int]:
        if not 0 <= k < self.dim:
            raise IndexError(k)
        rest, i = divmod(k, 2)
        alpha, n = divmod(rest, self.n_photon_max + 1)
        return alpha, n, i

    def states(self) -> Iterator[tuple[int, int, int]]:
        for k in range(self.dim):
            yield self.label(k)

    def ket(self, alpha: int, n: int, i: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(alpha, n, i)] = 1.0
        return v

    def projector(self, alpha: int, n: int, i: int) -> np.ndarray:
        v = self.ket(alpha, n, i)
        return np.outer(v, v.conj())


def build_basis(n_phonon_max: int, n_photon_max: int) -> FockBasis:
    for name, value in (("n_phonon_max", n_phonon_max), ("n_photon_max", n_photon_max)):
        if int(value) != value or value < 1:
            raise ConfigError(f"{name}: cutoff must be an integer >= 1, got {value!r}")
    basis = FockBasis(int(n_phonon_max), int(n_photon_max))
    if basis.dim > MAX_DIM:
        raise ConfigError(
            f"basis dimension {basis.dim} exceeds the dense-matrix limit {MAX_DIM}; "
            "lower the cutoffs"
        )
    return basis


def _ladder(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)


@dataclass(frozen=True)
class Operators:
    basis: FockBasis
    sigma: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    def jump(self, name: str) -> np.ndarray:
        """Lowering operator by field name: 'photon'/'c', 'phonon'/'b', 'electron'/'sigma'."""
        key = {"photon": "c", "phonon": "b", "electron": "sigma"}.get(name, name)
        if key not in ("c", "b", "sigma"):
            raise ValueError(f"unknown field {name!r}")
        return getattr(self, key)


def build_operators(basis: FockBasis) -> Operators:
    eye_pn = np.eye(basis.n_phonon_max + 1)
    eye_ph = np.eye(basis.n_photon_max + 1)
    lower = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
    sigma = np.kron(eye_pn, np.kron(eye_ph, lower))
    c = np.kron(eye_pn, np.kron(_ladder(basis.n_photon_max), np.eye(2)))
    b = np.kron(_ladder(basis.n_phonon_max), np.kron(eye_ph, np.eye(2)))
    return Operators(basis, sigma, c, b)


def _dag(a):
    return a.conj().T


def frame_generator(ops: Operators, frame=(0.0, 0.0)) -> np.ndarray:
    """w_c (c^+c + s^+s) + w_b (b^+b + s^+s): the operator removed by a rotating frame.

    A frame rotating at the cavity frequency on the first excitation number is
    compatible with all three Hamiltonians; the second one only with the
    parametric Hamiltonian.
    """
    w_c, w_b = frame
    n_e = _dag(ops.sigma) @ ops.sigma
    return (w_c * (_dag(ops.c) @ ops.c + n_e)
            + w_b * (_dag(ops.b) @ ops.b + n_e))


def build_hamiltonian(kind: str, params: SystemParams, spec: CouplingSpec | None = None,
                      basis: FockBasis | None = None, *, ops: Operators | None = None,
                      frame=(0.0, 0.0)) -> np.ndarray:
    """Dense Hamiltonian of the parametric, molecular or optomechanical model.

    ``frame=(w_c, w_b)`` returns H - :func:`frame_generator`, i.e. the same
    model in a frame rotating at w_c (photon) and w_b (phonon); the frame must
    commute with H.
    """
    if kind not in KINDS:
        raise ConfigError(f"kind: must be one of {KINDS}, got {kind!r}")
    if ops is None:
        if basis is None:
            raise ValueError("either basis or ops is required")
        ops = build_operators(basis)
    s, c, b = ops.sigma, ops.c, ops.b
    H = (params.omega_e * _dag(s) @ s + params.omega * _dag(c) @ c
         + params.omega_v * _dag(b) @ b).astype(complex)

    if kind == "parametric":
        if params.rabi3 is None:
            raise ConfigError("rabi3: required for the parametric Hamiltonian")
        v = params.rabi3 * _dag(s) @ c @ b
        H += v + _dag(v)
    else:
        if params.rabi2 is None:
            raise ConfigError(f"rabi2: required for the {kind} Hamiltonian")
        if spec is None:
            raise ConfigError(f"coupling: a CouplingSpec is required for the {kind} Hamiltonian")
        jc = params.rabi2 * _dag(s) @ c
        H += jc + _dag(jc)
        displacement = b + _dag(b)
        if kind == "molecular":
            if spec.huang_rhys is None:
                raise ConfigError("huang_rhys: required for the molecular Hamiltonian")
            H += math.sqrt(spec.huang_rhys) * params.omega_v * (_dag(s) @ s) @ displacement
        else:
            if spec.g_factor is None:
                raise ConfigError("g_factor: required for the optomechanical Hamiltonian")
            H -= spec.g_factor * (_dag(c) @ c) @ displacement

    if any(frame):
        if frame[1] and kind != "parametric":
            raise ValueError("a phonon rotating frame is only exact for the parametric Hamiltonian")
        G = frame_generator(ops, frame)
        H = H - G
    check_hermitian(H)
    return H


def check_hermitian(H: np.ndarray, rtol: float = HERMITICITY_RTOL) -> None:
    scale = max(np.abs(H).max(), 1.0)
    err = np.abs(H - _dag(H)).max()
    if err > rtol * scale:
        raise AssertionError(f"Hamiltonian not Hermitian: max|H - H^+| = {err:.3e}")


def map_to_parametric(spec: CouplingSpec, params: SystemParams) -> complex:
    """Effective three-wave coupling of a given microscopic mechanism."""
    if spec.mechanism == "gradient":
        return complex(spec.gradient_overlap)
    if params.rabi2 is None:
        raise ConfigError(f"rabi2: required to map the {spec.mechanism} coupling")
    if spec.mechanism == "molecular":
        return -math.sqrt(spec.huang_rhys) * params.rabi2
    if params.omega_v == 0:
        raise ConfigError("omega_v: must be > 0 for the optomechanical mapping")
    return -(spec.g_factor / params.omega_v) * params.rabi2


@dataclass(frozen=True)
class RwaReport:
    detuning_ratio: float
    coupling_ratio: float
    threshold: float

    @property
    def detuning_ok(self) -> bool:
        return self.detuning_ratio < self.threshold

    @property
    def coupling_ok(self) -> bool:
        return self.coupling_ratio < self.threshold

    @property
    def passed(self) -> bool:
        return self.detuning_ok and self.coupling_ok

    def to_dict(self) -> dict:
        return {"detuning_ratio": self.detuning_ratio, "coupling_ratio": self.coupling_ratio,
                "threshold": self.threshold, "detuning_ok": self.detuning_ok,
                "coupling_ok": self.coupling_ok, "passed": self.passed}


def validate_rwa(params: SystemParams, threshold: float = 0.1) -> RwaReport:
    """Check that the three-wave resonance is isolated from the two-wave one."""
    two_wave = abs(params.omega_e - params.omega)
    three_wave = abs(params.omega_e - params.omega - params.omega_v)
    ratio1 = three_wave / two_wave if two_wave > 0 else math.inf
    coupling = max(abs(params.rabi2 or 0.0), abs(params.rabi3 or 0.0))
    ratio2 = coupling / params.omega_v
    return RwaReport(ratio1, ratio2, threshold)


def second_order_shift(H: np.ndarray, k: int, degeneracy_tol: float = 1e-9) -> float:
    """Rayleigh-Schroedinger level shift of basis state k from the off-diagonal part of H."""
    diag = np.real(np.diag(H))
    couplings = np.abs(H[:, k]) ** 2
    gaps = diag[k] - diag
    mask = (np.arange(len(diag)) != k) & (np.abs(gaps) > degeneracy_tol) & (couplings > 0)
    return float(np.sum(couplings[mask] / gaps[mask]))


def dressed_resonance(kind: str, params: SystemParams, spec: CouplingSpec | None,
                      basis: FockBasis, iterations: int = 4) -> SystemParams:
    """Shift omega_e so that |001> and |110> are degenerate after second-order level shifts.

    The molecular and optomechanical models carry Lamb/polaron shifts of order
    |rabi2|^2/(omega_e - omega) and S*omega_v that the first-order mapping onto
    the parametric Hamiltonian does not contain.
    """
    ops = build_operators(basis)
    k_up, k_lo = basis.index(0, 0, 1), basis.index(1, 1, 0)
    p = params
    for _ in range(iterations):
        H = build_hamiltonian(kind, p, spec, ops=ops)
        mismatch = (H[k_up, k_up].real + second_order_shift(H, k_up)
                    - H[k_lo, k_lo].real - second_order_shift(H, k_lo))
        p = p.replace(omega_e=p.omega_e - mismatch)
    return p
