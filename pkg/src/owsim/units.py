"""Field-unit constants.

All quantities in the simulator are carried in oilfield units: length ft,
pressure psi, permeability mD, viscosity cp, density lbm/ft3, time day.
Mass residuals are in lbm/day, surface volumetric rates in bbl/day
(stb/day for oil, converted through the phase reference density).
"""

# Darcy flow constant: (mD * ft * psi / cp) -> bbl/day
DARCY_BBL = 1.127e-3

FT3_PER_BBL = 5.614583

# Darcy flow constant in ft3/day, used wherever fluxes carry mass (lbm/day
# after multiplying by a density in lbm/ft3).
DARCY_FT3 = DARCY_BBL * FT3_PER_BBL

# Hydrostatic head: psi per (lbm/ft3 * ft)
GRAV_HEAD = 1.0 / 144.0


def mass_to_surface_bbl(mass_rate, rho_ref):
    """Convert a mass rate (lbm/day) to a surface volumetric rate (bbl/day)."""
    return mass_rate / (rho_ref * FT3_PER_BBL)


def surface_bbl_to_mass(vol_rate, rho_ref):
    """Convert a surface volumetric rate (bbl/day) to a mass rate (lbm/day)."""
    return vol_rate * rho_ref * FT3_PER_BBL
