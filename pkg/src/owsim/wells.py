"""Peaceman well model: perforation rates, operating constraints,
schedules and rate-to-BHP constraint switching.

Mass rates are lbm/day; surface rates are bbl/day (stb/day for oil),
converted through the phase reference density. Producers carry negative
mass rates (mass leaves the cell); reported production rates are the
positive magnitudes.
"""

import math
from dataclasses import dataclass
from enum import Enum

from . import props as pr
from .units import DARCY_FT3, FT3_PER_BBL, GRAV_HEAD


class ScheduleError(ValueError):
    """No applicable control for the requested time."""


class Mode(Enum):
    BHP = "bhp"
    ORAT = "orat"
    WRAT = "wrat"
    LRAT = "lrat"
    SHUTIN = "shutin"
    STOP = "stop"


RATE_MODES = (Mode.ORAT, Mode.WRAT, Mode.LRAT)
CLOSED_MODES = (Mode.SHUTIN, Mode.STOP)


@dataclass(frozen=True)
class WellControl:
    """One operating constraint: mode plus target and a BHP limit.

    target is psi for BHP mode and a positive surface rate for rate modes
    (stb/day oil, bbl/day water); SHUTIN/STOP carry no target. bhp_limit
    is the maximum BHP for injectors and the minimum for producers.
    """

    mode: Mode
    target: float = None
    bhp_limit: float = None

    def __post_init__(self):
        if self.mode in CLOSED_MODES:
            if self.target is not None:
                raise ValueError(f"{self.mode.name} carries no target")
        else:
            if self.target is None or not math.isfinite(self.target):
                raise ValueError(f"{self.mode.name} requires a finite target")


@dataclass(frozen=True)
class Perforation:
    cell: int
    wi: float
    depth: float

    def __post_init__(self):
        if self.wi <= 0.0:
            raise ValueError("well index must be > 0")


@dataclass(frozen=True)
class WellSpec:
    """A well: perforations, reference depth and its control schedule.

    schedule is an ordered tuple of (start_day, WellControl) with strictly
    increasing times; the first entry opens the region of applicability.
    """

    name: str
    injector: bool
    ref_depth: float
    perforations: tuple
    schedule: tuple
    radius: float = None

    def __post_init__(self):
        if not self.perforations:
            raise ValueError(f"well {self.name}: no perforations")
        times = [t for t, _ in self.schedule]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"well {self.name}: schedule times must increase")

    @property
    def primary_rate_mode(self):
        return Mode.WRAT if self.injector else Mode.ORAT


def peaceman_well_index(kx, ky, dx, dy, dz, radius):
    """Well index from the Peaceman equivalent radius for a vertical well.

    r_eq = 0.14*sqrt(dx^2 + dy^2); the Darcy constant is folded in so the
    result multiplies (rho*kr/mu)*drawdown directly into lbm/day.
    """
    if radius <= 0.0:
        raise ValueError("well radius must be > 0")
    r_eq = 0.14 * math.sqrt(dx * dx + dy * dy)
    k_bar = math.sqrt(kx * ky)
    return DARCY_FT3 * 2.0 * math.pi * k_bar * dz / math.log(r_eq / radius)


def apply_schedule(well, t):
    """Control in force at time t: the latest entry with start <= t."""
    if not well.schedule or t < well.schedule[0][0]:
        raise ScheduleError(
            f"well {well.name}: no control scheduled at t={t}")
    active = well.schedule[0][1]
    for start, control in well.schedule:
        if start <= t:
            active = control
        else:
            break
    return active


def schedule_from_tokens(injector, rows, bhp_limit, initial=None):
    """Normalize schedule tokens into concrete controls.

    Each row is (time, token) with token one of: a number (rate target in
    the well's primary mode, also reopening a shut-in well under the prior
    rate mode), 'shutin', 'stop', 'unchanged', or ('mode', value). STOP is
    permanent. 'unchanged' repeats the previous control. `initial` seeds
    the t=0 control (and the reopening mode) when the rows start later or
    reference prior state.
    """
    primary = Mode.WRAT if injector else Mode.ORAT
    entries = []
    prev = initial
    prev_rate_mode = primary
    if initial is not None and initial.mode in RATE_MODES:
        prev_rate_mode = initial.mode
    if initial is not None and (not rows or rows[0][0] > 0.0):
        entries.append((0.0, initial))
    stopped = False
    for t, token in rows:
        if stopped:
            raise ValueError(f"schedule entry after STOP at t={t}")
        if isinstance(token, tuple):
            mode = Mode(token[0].lower())
            if mode in CLOSED_MODES:
                control = WellControl(mode, None, bhp_limit)
            else:
                control = WellControl(mode, float(token[1]), bhp_limit)
                if mode in RATE_MODES:
                    prev_rate_mode = mode
        elif isinstance(token, str):
            word = token.lower()
            if word == "unchanged":
                if prev is None:
                    raise ValueError(
                        f"'unchanged' at t={t} with no prior control")
                control = prev
            elif word == "shutin":
                control = WellControl(Mode.SHUTIN, None, bhp_limit)
            elif word == "stop":
                control = WellControl(Mode.STOP, None, bhp_limit)
                stopped = True
            else:
                raise ValueError(f"unknown schedule token {token!r}")
        else:
            # bare rate: (re)open under the prior rate mode with new target
            control = WellControl(prev_rate_mode, float(token), bhp_limit)
        entries.append((float(t), control))
        prev = control
    return tuple(entries)


@dataclass
class PerfFlow:
    """Mass rates of one perforation and their analytic derivatives.

    Rates in lbm/day, positive into the cell. Derivatives are taken with
    respect to the cell oil pressure, the cell water saturation and the
    well bottom-hole pressure, with the upstream/frozen conventions of the
    fully implicit linearization.
    """

    q_o: float = 0.0
    q_w: float = 0.0
    dqo_dp: float = 0.0
    dqo_ds: float = 0.0
    dqo_dpb: float = 0.0
    dqw_dp: float = 0.0
    dqw_ds: float = 0.0
    dqw_dpb: float = 0.0


def perforation_rate(perf, injector, p, s_w, p_b, z_b, fluids):
    """Peaceman rate of a single perforation at the current cell state.

    Producers flow both phases with cell-centered mobilities; water
    injectors use the cell's total mobility with the injected-phase
    density, so injectivity survives connate-water conditions.
    """
    pc, dpc = pr.capillary_pressure(s_w, fluids.sat_table)
    krw, kro, dkrw, dkro = pr.rel_perm(s_w, fluids.sat_table)
    p_w = p - pc
    rho_o, drho_o = pr.density(p, fluids.oil)
    mu_o, dmu_o = pr.viscosity(p, fluids.oil)
    rho_w, drho_w = pr.density(p_w, fluids.water)
    mu_w, dmu_w = pr.viscosity(p_w, fluids.water)
    dz = z_b - perf.depth
    wi = perf.wi
    out = PerfFlow()

    if injector:
        mob = krw / mu_w + kro / mu_o
        lam = rho_w * mob
        dd = p_b - p_w - rho_w * GRAV_HEAD * dz
        dlam_dp = drho_w * mob + rho_w * (-krw * dmu_w / mu_w**2
                                          - kro * dmu_o / mu_o**2)
        # s-chain: mu_w and rho_w move through p_w = p - pc
        dmob_ds = (dkrw / mu_w + krw * dmu_w * dpc / mu_w**2
                   + dkro / mu_o)
        dlam_ds = -drho_w * dpc * mob + rho_w * dmob_ds
        ddd_dp = -1.0 - drho_w * GRAV_HEAD * dz
        ddd_ds = dpc * (1.0 + drho_w * GRAV_HEAD * dz)
        out.q_w = wi * lam * dd
        out.dqw_dp = wi * (dlam_dp * dd + lam * ddd_dp)
        out.dqw_ds = wi * (dlam_ds * dd + lam * ddd_ds)
        out.dqw_dpb = wi * lam
        return out

    # producer: oil phase
    lam_o = rho_o * kro / mu_o
    dd_o = p_b - p - rho_o * GRAV_HEAD * dz
    dlam_o_dp = (drho_o * kro / mu_o - rho_o * kro * dmu_o / mu_o**2)
    out.q_o = wi * lam_o * dd_o
    out.dqo_dp = wi * (dlam_o_dp * dd_o
                       + lam_o * (-1.0 - drho_o * GRAV_HEAD * dz))
    out.dqo_ds = wi * (rho_o * dkro / mu_o) * dd_o
    out.dqo_dpb = wi * lam_o

    # producer: water phase (through p_w = p - pc)
    lam_w = rho_w * krw / mu_w
    dd_w = p_b - p_w - rho_w * GRAV_HEAD * dz
    dlam_w_dp = (drho_w * krw / mu_w - rho_w * krw * dmu_w / mu_w**2)
    dlam_w_ds = (rho_w * dkrw / mu_w
                 + (drho_w * krw / mu_w
                    - rho_w * krw * dmu_w / mu_w**2) * (-dpc))
    ddw_dp = -1.0 - drho_w * GRAV_HEAD * dz
    ddw_ds = dpc * (1.0 + drho_w * GRAV_HEAD * dz)
    out.q_w = wi * lam_w * dd_w
    out.dqw_dp = wi * (dlam_w_dp * dd_w + lam_w * ddw_dp)
    out.dqw_ds = wi * (dlam_w_ds * dd_w + lam_w * ddw_ds)
    out.dqw_dpb = wi * lam_w
    return out


def surface_rates(flow, fluids):
    """(oil stb/day, water bbl/day) of a PerfFlow, signed into the cell."""
    qo = flow.q_o / (fluids.oil.rho_ref * FT3_PER_BBL)
    qw = flow.q_w / (fluids.water.rho_ref * FT3_PER_BBL)
    return qo, qw


def signed_target(well, control):
    """Rate target with the into-cell sign convention.

    Injection is positive mass into the reservoir; production targets are
    therefore negative sums of perforation surface rates.
    """
    return control.target if well.injector else -control.target


def hydrostatic_pin(well, p_first, rho_o_first, drho_o_first, z_first):
    """BHP pin for closed wells: the oil-phase hydrostatic pressure shifted
    from the first perforation to the reference depth. Returns the pin and
    its derivative with respect to the first-perforation cell pressure."""
    dz = well.ref_depth - z_first
    pin = p_first + rho_o_first * GRAV_HEAD * dz
    dpin_dp = 1.0 + drho_o_first * GRAV_HEAD * dz
    return pin, dpin_dp


def constraint_residual(well, control, p_b, p_cells, sw_cells, z_cells,
                        fluids, flows=None):
    """Scalar residual of the well's bottom-hole-pressure equation.

    BHP mode: p_b - c. Rate modes: sum of perforation surface rates minus
    the signed target. Closed wells: p_b minus the hydrostatic reference
    at the first perforation (all perforation flow is zero).
    """
    if control.mode == Mode.BHP:
        return p_b - control.target
    if control.mode in CLOSED_MODES:
        rho_o, drho_o = pr.density(p_cells[0], fluids.oil)
        pin, _ = hydrostatic_pin(well, p_cells[0], rho_o, drho_o, z_cells[0])
        return p_b - pin
    if flows is None:
        flows = [perforation_rate(perf, well.injector, p, sw, p_b,
                                  well.ref_depth, fluids)
                 for perf, p, sw in zip(well.perforations, p_cells, sw_cells)]
    total = 0.0
    for flow in flows:
        qo, qw = surface_rates(flow, fluids)
        if control.mode == Mode.ORAT:
            total += qo
        elif control.mode == Mode.WRAT:
            total += qw
        else:
            total += qo + qw
    return total - signed_target(well, control)


def implied_bhp(well, control, p_cells, sw_cells, z_cells, fluids):
    """BHP that would deliver the scheduled rate with frozen mobilities.

    The perforation rate is affine in p_b at fixed cell state; solving the
    rate-constraint equation for p_b gives the implied pressure. Returns
    None when every perforation has vanished mobility.
    """
    assert control.mode in RATE_MODES
    tgt = signed_target(well, control)
    slope = 0.0
    offset = 0.0
    for perf, p, sw, z in zip(well.perforations, p_cells, sw_cells, z_cells):
        zero = perforation_rate(perf, well.injector, p, sw, 0.0,
                                well.ref_depth, fluids)
        unit = perforation_rate(perf, well.injector, p, sw, 1.0,
                                well.ref_depth, fluids)
        qo0, qw0 = surface_rates(zero, fluids)
        qo1, qw1 = surface_rates(unit, fluids)
        if control.mode == Mode.ORAT:
            offset += qo0
            slope += qo1 - qo0
        elif control.mode == Mode.WRAT:
            offset += qw0
            slope += qw1 - qw0
        else:
            offset += qo0 + qw0
            slope += (qo1 - qo0) + (qw1 - qw0)
    if slope <= 0.0:
        return None
    return (tgt - offset) / slope


def resolve_active_constraint(well, scheduled, p_cells, sw_cells, z_cells,
                              fluids):
    """Switch a rate-controlled well to BHP control when its implied BHP
    violates the limit; re-evaluated at every time step."""
    if scheduled.mode not in RATE_MODES or scheduled.bhp_limit is None:
        return scheduled
    pb = implied_bhp(well, scheduled, p_cells, sw_cells, z_cells, fluids)
    if pb is None:
        return WellControl(Mode.BHP, scheduled.bhp_limit, scheduled.bhp_limit)
    if well.injector and pb > scheduled.bhp_limit:
        return WellControl(Mode.BHP, scheduled.bhp_limit, scheduled.bhp_limit)
    if not well.injector and pb < scheduled.bhp_limit:
        return WellControl(Mode.BHP, scheduled.bhp_limit, scheduled.bhp_limit)
    return scheduled


def well_index_from_deck(entry, grid, cell):
    """Well index of a COMPDAT entry: explicit value, or Peaceman from the
    well radius and the cell geometry when the deck omits it."""
    wi, radius = entry
    if wi is not None:
        if wi <= 0.0:
            raise ValueError("explicit well index must be > 0")
        return float(wi)
    i, j, k = grid.ijk(cell)
    return peaceman_well_index(grid.kx[cell], grid.ky[cell],
                               grid.dx[i], grid.dy[j], grid.dz[k],
                               radius)
