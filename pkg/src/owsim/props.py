"""Rock and fluid property evaluation with analytic derivatives.

All evaluators are pure, accept scalars or numpy arrays, and return the
value together with its pressure (or saturation) derivative so the
Jacobian assembly never needs numerical differentiation. Property objects
are immutable after the deck is loaded.
"""

from dataclasses import dataclass

import numpy as np

from .units import GRAV_HEAD


class DegeneratePropertyError(ValueError):
    """A property evaluated to a non-physical value (<= 0)."""


@dataclass(frozen=True)
class RockModel:
    """Rock compressibility c_r (1/psi) about reference pressure p_r (psi)."""

    c_r: float
    p_r: float

    def __post_init__(self):
        if self.c_r < 0.0:
            raise ValueError("rock compressibility must be >= 0")


@dataclass(frozen=True)
class PhasePvt:
    """Single-row PVT entry for one phase.

    Density and viscosity are affine in phase pressure about
    (p_ref, rho_ref, mu_ref): rho = rho_ref*(1 + c_comp*(p - p_ref)),
    mu = mu_ref + c_mu*(p - p_ref).
    """

    rho_ref: float
    p_ref: float
    c_comp: float
    mu_ref: float
    c_mu: float

    def __post_init__(self):
        if self.rho_ref <= 0.0:
            raise ValueError("reference density must be > 0")
        if self.mu_ref <= 0.0:
            raise ValueError("reference viscosity must be > 0")


@dataclass(frozen=True)
class SatFunctionTable:
    """Water-saturation function table (SWOF-style).

    Piecewise-linear krw(s_w), kro(s_w) and pc(s_w) over strictly
    increasing s_w nodes; evaluation clamps s_w to the node range and the
    derivative at an interior node is the left segment's slope.
    """

    sw_nodes: np.ndarray
    krw_nodes: np.ndarray
    kro_nodes: np.ndarray
    pc_nodes: np.ndarray

    def __post_init__(self):
        sw = np.asarray(self.sw_nodes, dtype=float)
        krw = np.asarray(self.krw_nodes, dtype=float)
        kro = np.asarray(self.kro_nodes, dtype=float)
        pc = np.asarray(self.pc_nodes, dtype=float)
        if sw.ndim != 1 or sw.size < 2:
            raise ValueError("saturation table needs at least two rows")
        if not (sw.size == krw.size == kro.size == pc.size):
            raise ValueError("saturation table columns have unequal lengths")
        if np.any(np.diff(sw) <= 0.0):
            raise ValueError("s_w nodes must be strictly increasing")
        if sw[0] < 0.0 or sw[-1] > 1.0:
            raise ValueError("s_w nodes must lie within [0, 1]")
        if np.any(np.diff(krw) < 0.0):
            raise ValueError("krw must be non-decreasing in s_w")
        if np.any(np.diff(kro) > 0.0):
            raise ValueError("kro must be non-increasing in s_w")
        for name, col in (("krw", krw), ("kro", kro)):
            if np.any(col < 0.0) or np.any(col > 1.0):
                raise ValueError(f"{name} must lie within [0, 1]")
        object.__setattr__(self, "sw_nodes", sw)
        object.__setattr__(self, "krw_nodes", krw)
        object.__setattr__(self, "kro_nodes", kro)
        object.__setattr__(self, "pc_nodes", pc)

    @property
    def sw_min(self):
        return float(self.sw_nodes[0])

    @property
    def sw_max(self):
        return float(self.sw_nodes[-1])


def porosity(p_o, rock, phi_ref):
    """phi = phi_ref*(1 + c_r*(p_o - p_r)); returns (phi, dphi/dp).

    dphi/dp broadcasts against phi_ref (constant in pressure).
    """
    phi = phi_ref * (1.0 + rock.c_r * (p_o - rock.p_r))
    if np.any(np.asarray(phi) <= 0.0):
        raise DegeneratePropertyError("porosity evaluated <= 0")
    return phi, phi_ref * rock.c_r


def density(p_a, pvt):
    """rho = rho_ref*(1 + c_comp*(p_a - p_ref)); returns (rho, drho/dp)."""
    rho = pvt.rho_ref * (1.0 + pvt.c_comp * (p_a - pvt.p_ref))
    if np.any(np.asarray(rho) <= 0.0):
        raise DegeneratePropertyError("density evaluated <= 0")
    return rho, pvt.rho_ref * pvt.c_comp


def viscosity(p_a, pvt):
    """mu = mu_ref + c_mu*(p_a - p_ref); returns (mu, dmu/dp)."""
    mu = pvt.mu_ref + pvt.c_mu * (p_a - pvt.p_ref)
    if np.any(np.asarray(mu) <= 0.0):
        raise DegeneratePropertyError("viscosity evaluated <= 0")
    return mu, pvt.c_mu


def phase_potential(p_a, rho, z):
    """Phase potential (total absolute pressure): p + rho*g*z, psi."""
    return p_a + rho * GRAV_HEAD * z


def _interp_with_slope(s_w, nodes, values):
    s = np.clip(s_w, nodes[0], nodes[-1])
    val = np.interp(s, nodes, values)
    seg_slopes = np.diff(values) / np.diff(nodes)
    # left segment slope at interior nodes; zero slope outside the table
    idx = np.searchsorted(nodes, s_w, side="left") - 1
    inside = (np.asarray(s_w) > nodes[0]) & (np.asarray(s_w) < nodes[-1]) | (
        np.asarray(s_w) == nodes[-1])
    idx = np.clip(idx, 0, seg_slopes.size - 1)
    slope = np.where(inside, seg_slopes[idx], 0.0)
    if np.ndim(s_w) == 0:
        return float(val), float(slope)
    return val, slope


def rel_perm(s_w, table):
    """Piecewise-linear (krw, kro) with segment-slope derivatives.

    Input saturation is clamped to the table range; outside-of-table
    slopes are zero.
    """
    krw, dkrw = _interp_with_slope(s_w, table.sw_nodes, table.krw_nodes)
    kro, dkro = _interp_with_slope(s_w, table.sw_nodes, table.kro_nodes)
    return krw, kro, dkrw, dkro


def capillary_pressure(s_w, table):
    """Piecewise-linear capillary pressure p_c(s_w); callers honor
    p_w = p_o - p_c."""
    return _interp_with_slope(s_w, table.sw_nodes, table.pc_nodes)


@dataclass(frozen=True)
class FluidSystem:
    """Bundle of rock model, oil/water PVT and the saturation table."""

    rock: RockModel
    oil: PhasePvt
    water: PhasePvt
    sat_table: SatFunctionTable
