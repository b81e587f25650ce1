"""Open-system dynamics and emission spectra at the electron-photon-phonon parametric resonance."""
from .model import (ConfigError, CouplingSpec, FockBasis, SystemParams, build_basis,
                    build_hamiltonian, build_operators, map_to_parametric, validate_rwa)

__all__ = ["ConfigError", "CouplingSpec", "FockBasis", "SystemParams", "build_basis",
           "build_hamiltonian", "build_operators", "map_to_parametric", "validate_rwa"]
__version__ = "0.1.0"
