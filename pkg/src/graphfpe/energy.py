"""Free energy and its variational derivative (inverse temperature 1)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import gibbs_density
from .graph import WeightedGraph


def _vals(x) -> np.ndarray:
    return np.asarray(x.values if hasattr(x, "values") else x, dtype=float)


@dataclass(frozen=True)
class EnergyReport:
    potential: float
    entropy: float
    total: float
    relative: float

    def as_dict(self) -> dict:
        return {
            "potential": self.potential,
            "entropy": self.entropy,
            "total": self.total,
            "relative": self.relative,
        }


def _energy_parts(r: np.ndarray, psi: np.ndarray, g: WeightedGraph) -> tuple[float, float]:
    w = g.measure * r
    return float(w @ psi), float(w @ np.log(r))


def free_energy(rho, psi, g: WeightedGraph) -> EnergyReport:
    """Potential energy, entropy, their sum and the excess over the Gibbs minimum."""
    r = _vals(rho)
    p = _vals(psi)
    f1, f2 = _energy_parts(r, p, g)
    star = gibbs_density(g, p).values
    s1, s2 = _energy_parts(star, p, g)
    total = f1 + f2
    return EnergyReport(f1, f2, total, total - (s1 + s2))


def free_energy_value(rho, psi, g: WeightedGraph) -> float:
    f1, f2 = _energy_parts(_vals(rho), _vals(psi), g)
    return f1 + f2


def free_energy_derivative(rho, psi, g: WeightedGraph) -> np.ndarray:
    """``Psi_i + 1 + log rho_i``."""
    return _vals(psi) + 1.0 + np.log(_vals(rho))
