"""Phase indicator and temperature-dependent coefficients.

All temperatures are in degrees Celsius. Scalar functions accept floats or
numpy arrays; the ``cell_*`` helpers evaluate per-triangle fields from nodal
temperatures at the centroid (mean of the three vertex values).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class LayerProperties:
    k_plus: float  # thawed conductivity, W/(m K)
    k_minus: float  # frozen conductivity
    c_rho_plus: float  # volumetric heat capacity, J/(m^3 K)
    c_rho_minus: float
    rhoL: float  # volumetric latent heat, J/m^3
    mobility: float  # rho_w * kappa / mu

    def __post_init__(self):
        for name in ("k_plus", "k_minus", "c_rho_plus", "c_rho_minus", "mobility"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.rhoL < 0:
            raise ConfigurationError(f"rhoL must be non-negative, got {self.rhoL}")


@dataclass(frozen=True)
class PhaseParams:
    T_star: float = 0.0
    delta: float = 0.5
    epsilon: float = 1e-3

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigurationError(f"delta must be positive, got {self.delta}")
        if not 0 < self.epsilon <= 1:
            raise ConfigurationError(f"epsilon must lie in (0, 1], got {self.epsilon}")


# Soil layers of the reference setup, top to bottom in the default raster order.
PAPER_LAYERS = (
    LayerProperties(1.37, 1.72, 2.397e6, 1.886e6, 75.33e6, 1.0e-13),
    LayerProperties(2.67, 3.37, 2.13e6, 2.09e6, 64.769e6, 10.0e-13),
    LayerProperties(1.4, 1.56, 2.96e6, 2.70e6, 130.544e6, 5.0e-13),
)


def phi_delta(T, params: PhaseParams):
    """Regularized liquid fraction: linear ramp over [T* - delta, T* + delta]."""
    s = (np.asarray(T, dtype=float) - params.T_star + params.delta) / (2.0 * params.delta)
    out = np.clip(s, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def dphi_dT(T, params: PhaseParams):
    """Derivative of :func:`phi_delta`; zero at the two kinks."""
    T = np.asarray(T, dtype=float)
    inside = np.abs(T - params.T_star) < params.delta
    out = np.where(inside, 1.0 / (2.0 * params.delta), 0.0)
    return float(out) if out.ndim == 0 else out


def capacity(T, layer: LayerProperties, params: PhaseParams):
    phi = phi_delta(T, params)
    alpha = layer.c_rho_minus + phi * (layer.c_rho_plus - layer.c_rho_minus)
    return alpha + layer.rhoL * dphi_dT(T, params)


def conductivity(T, layer: LayerProperties, params: PhaseParams):
    phi = phi_delta(T, params)
    return layer.k_minus + phi * (layer.k_plus - layer.k_minus)


def mobility_eps(T, layer: LayerProperties, params: PhaseParams):
    """Fictitious-domain mobility; ``T <= T*`` counts as frozen."""
    T = np.asarray(T, dtype=float)
    out = np.where(T > params.T_star, layer.mobility, layer.mobility * params.epsilon)
    return float(out) if out.ndim == 0 else out


def _layer_table(layers):
    names = ("k_plus", "k_minus", "c_rho_plus", "c_rho_minus", "rhoL", "mobility")
    return {n: np.array([getattr(l, n) for l in layers]) for n in names}


def cell_temperature(T_nodal: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    return T_nodal[triangles].mean(axis=1)


def cell_coefficients(T_nodal, triangles, layer_ids, layers, params: PhaseParams):
    """Per-cell capacity, conductivity and fictitious-domain mobility.

    Returns a dict with keys ``capacity``, ``conductivity``, ``mobility``,
    ``frozen``.
    """
    Tc = cell_temperature(np.asarray(T_nodal, dtype=float), triangles)
    tab = _layer_table(layers)
    phi = np.clip((Tc - params.T_star + params.delta) / (2.0 * params.delta), 0.0, 1.0)
    dphi = np.where(np.abs(Tc - params.T_star) < params.delta, 0.5 / params.delta, 0.0)
    cm, cp = tab["c_rho_minus"][layer_ids], tab["c_rho_plus"][layer_ids]
    km, kp = tab["k_minus"][layer_ids], tab["k_plus"][layer_ids]
    frozen = Tc <= params.T_star
    mob = tab["mobility"][layer_ids] * np.where(frozen, params.epsilon, 1.0)
    return {
        "capacity": cm + phi * (cp - cm) + tab["rhoL"][layer_ids] * dphi,
        "conductivity": km + phi * (kp - km),
        "mobility": mob,
        "frozen": frozen,
    }


def thawed_fields(layer_ids, layers):
    """Liquid-phase conductivity and unfrozen mobility per cell (offline stage)."""
    tab = _layer_table(layers)
    return tab["k_plus"][layer_ids], tab["mobility"][layer_ids]
