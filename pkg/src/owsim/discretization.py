"""Fully implicit residual and analytic Jacobian assembly.

Unknown ordering (block layout of the linear system): indices [0, n) hold
cell oil pressures, [n, 2n) water saturations, [2n, 2n+tau) well
bottom-hole pressures. Row i is the oil-component mass balance of cell i,
row n+i the water balance, row 2n+l the constraint equation of well l.
Mass residuals are lbm/day; well rows are psi (BHP/closed modes) or
surface bbl/day (rate modes).

Face fluxes are computed once per face with identical arithmetic
regardless of the partitioning, and every row is written by exactly one
owner, so assemblies are bit-identical for any worker count; partitioning
influences only the Schwarz subdomains and the per-worker reordering.
Property evaluation is pure and per-cell, so evaluating globally after the
halo exchange of (p, s_w) is equivalent to per-worker local evaluation.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import props as pr
from . import wells as wl
from .grid import face_table
from .units import DARCY_FT3, FT3_PER_BBL, GRAV_HEAD


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class BlockMap:
    """Index ranges of the pressure/saturation/well blocks."""

    n_cells: int
    n_wells: int

    @property
    def n_total(self):
        return 2 * self.n_cells + self.n_wells

    @property
    def pressure(self):
        return slice(0, self.n_cells)

    @property
    def saturation(self):
        return slice(self.n_cells, 2 * self.n_cells)

    @property
    def well(self):
        return slice(2 * self.n_cells, self.n_total)

    def well_row(self, well_index):
        return 2 * self.n_cells + well_index


@dataclass
class SimulationState:
    """Unknown vector (p, s_w, p_b) at simulation time t (days)."""

    p: np.ndarray
    sw: np.ndarray
    pbh: np.ndarray
    t: float = 0.0

    def pack(self):
        return np.concatenate([self.p, self.sw, self.pbh])

    @classmethod
    def unpack(cls, x, n_cells, n_wells, t=0.0):
        return cls(p=x[:n_cells].copy(),
                   sw=x[n_cells:2 * n_cells].copy(),
                   pbh=x[2 * n_cells:2 * n_cells + n_wells].copy(),
                   t=t)

    def copy(self):
        return SimulationState(self.p.copy(), self.sw.copy(),
                               self.pbh.copy(), self.t)

    @property
    def so(self):
        so = 1.0 - self.sw
        assert np.all(np.abs(so + self.sw - 1.0) <= 1e-12)
        return so


@dataclass
class JacobianSystem:
    """Sparse Jacobian with the 3x3 block structure plus the Newton rhs."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    block_map: BlockMap


@dataclass
class ReservoirModel:
    """Static problem definition: grid, fluids, wells, partitioning and the
    precomputed face transmissibility table."""

    grid: object
    fluids: pr.FluidSystem
    wells: tuple
    partition: object
    face_lo: np.ndarray = field(default=None, repr=False)
    face_hi: np.ndarray = field(default=None, repr=False)
    face_gf: np.ndarray = field(default=None, repr=False)
    block_map: BlockMap = None

    def __post_init__(self):
        if self.face_lo is None:
            lo, hi, gf = face_table(self.grid)
            self.face_lo, self.face_hi, self.face_gf = lo, hi, gf
        if self.block_map is None:
            self.block_map = BlockMap(self.grid.n_cells, len(self.wells))
        self._face_index = {(int(a), int(b)): k for k, (a, b) in
                            enumerate(zip(self.face_lo, self.face_hi))}
        for w in self.wells:
            for perf in w.perforations:
                if not (0 <= perf.cell < self.grid.n_cells):
                    raise AssemblyError(
                        f"well {w.name}: perforation cell {perf.cell} "
                        f"outside grid")

    def well_owner(self, well_index):
        """Worker owning a well's constraint row: the owner of its first
        perforation cell."""
        return int(self.partition.owner[
            self.wells[well_index].perforations[0].cell])

    def row_owner(self):
        """Owning worker of every matrix row (cells by partition, wells by
        first perforation)."""
        bm = self.block_map
        owner = np.empty(bm.n_total, dtype=np.int64)
        owner[bm.pressure] = self.partition.owner
        owner[bm.saturation] = self.partition.owner
        for l in range(bm.n_wells):
            owner[bm.well_row(l)] = self.well_owner(l)
        return owner


class _PropsEval:
    """Vectorized per-cell property evaluation at (p, s_w).

    Water-phase pressure-derivatives are with respect to p_w; consumers
    chain through dp_w/dp = 1 and dp_w/ds_w = -dpc.
    """

    def __init__(self, model, p, sw):
        fl = model.fluids
        full = lambda v: np.full(np.shape(p), v) if np.ndim(v) == 0 else v
        self.pc, self.dpc = pr.capillary_pressure(sw, fl.sat_table)
        self.p_w = p - self.pc
        self.phi, self.dphi = pr.porosity(p, fl.rock, model.grid.phi_ref)
        self.dphi = full(self.dphi)
        self.rho_o, drho_o = pr.density(p, fl.oil)
        self.mu_o, dmu_o = pr.viscosity(p, fl.oil)
        self.rho_w, drho_w = pr.density(self.p_w, fl.water)
        self.mu_w, dmu_w = pr.viscosity(self.p_w, fl.water)
        self.drho_o, self.dmu_o = full(drho_o), full(dmu_o)
        self.drho_w, self.dmu_w = full(drho_w), full(dmu_w)
        self.krw, self.kro, self.dkrw, self.dkro = pr.rel_perm(sw, fl.sat_table)
        z = model.grid.depth
        self.phi_o = p + self.rho_o * GRAV_HEAD * z
        self.phi_w = self.p_w + self.rho_w * GRAV_HEAD * z
        self.dphio_dp = 1.0 + self.drho_o * GRAV_HEAD * z
        self.dphiw_dp = 1.0 + self.drho_w * GRAV_HEAD * z
        self.dphio_ds = np.zeros_like(np.asarray(p, dtype=float))
        self.dphiw_ds = -self.dpc * (1.0 + self.drho_w * GRAV_HEAD * z)
        # upstream mobilities rho*kr/mu and their (p, s) derivatives
        self.lam_o = self.rho_o * self.kro / self.mu_o
        self.lam_w = self.rho_w * self.krw / self.mu_w
        self.dlamo_dp = (self.drho_o * self.kro / self.mu_o
                         - self.rho_o * self.kro * self.dmu_o / self.mu_o**2)
        self.dlamo_ds = self.rho_o * self.dkro / self.mu_o
        dlamw_dpw = (self.drho_w * self.krw / self.mu_w
                     - self.rho_w * self.krw * self.dmu_w / self.mu_w**2)
        self.dlamw_dp = dlamw_dpw
        self.dlamw_ds = (self.rho_w * self.dkrw / self.mu_w
                         + dlamw_dpw * (-self.dpc))


def accumulation_mass(model, state):
    """Per-cell (phi*rho*s) of each phase at a state, times cell volume.

    Used both for the backward-difference accumulation term and for
    in-place-mass audits.
    """
    ev = _PropsEval(model, state.p, state.sw)
    vol = model.grid.volume
    m_o = vol * ev.phi * ev.rho_o * (1.0 - state.sw)
    m_w = vol * ev.phi * ev.rho_w * state.sw
    return m_o, m_w


def upstream_transmissibility(model, state, cell_a, cell_b, phase):
    """Face transmissibility with upstream weighting, plus the upstream tag.

    Returns (T, upstream_cell): T is the mass transmissibility (lbm/day/psi)
    of the face between the two cells; the upstream cell is the one with
    the larger phase potential, ties going to the lower global index.
    A boundary face (cell_b None or outside the grid) is no-flow: (0, None).
    """
    n = model.grid.n_cells
    if cell_b is None or not (0 <= cell_b < n):
        return 0.0, None
    a, b = min(cell_a, cell_b), max(cell_a, cell_b)
    face = model._face_index.get((a, b))
    if face is None:
        raise AssemblyError(f"cells {cell_a} and {cell_b} share no face")
    ev = _PropsEval(model, state.p, state.sw)
    phi = ev.phi_o if phase == "oil" else ev.phi_w
    lam = ev.lam_o if phase == "oil" else ev.lam_w
    up = b if phi[b] > phi[a] else a
    t_face = DARCY_FT3 * model.face_gf[face] * lam[up]
    return float(t_face), int(up)


def assemble_residual(model, state, prev_state, dt, controls):
    """Residual F(x) of the fully implicit system (length 2n+tau)."""
    F, _ = _assemble(model, state, prev_state, dt, controls,
                     want_jacobian=False)
    return F


def assemble_jacobian(model, state, prev_state, dt, controls):
    """Analytic Jacobian and Newton right-hand side b = -F."""
    F, A = _assemble(model, state, prev_state, dt, controls,
                     want_jacobian=True)
    return JacobianSystem(matrix=A, rhs=-F, block_map=model.block_map)


def _assemble(model, state, prev_state, dt, controls, want_jacobian):
    if dt <= 0.0:
        raise AssemblyError(f"time step must be > 0, got {dt}")
    grid = model.grid
    bm = model.block_map
    n = bm.n_cells
    N = bm.n_total
    p, sw = state.p, state.sw

    ev = _PropsEval(model, p, sw)
    vol_dt = grid.volume / dt

    old_o, old_w = accumulation_mass(model, prev_state)
    F = np.zeros(N)
    F[bm.pressure] = vol_dt * ev.phi * ev.rho_o * (1.0 - sw) - old_o / dt
    F[bm.saturation] = vol_dt * ev.phi * ev.rho_w * sw - old_w / dt

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(np.asarray(r, dtype=np.int64))
        cols.append(np.asarray(c, dtype=np.int64))
        vals.append(np.asarray(v, dtype=np.float64))

    cells = np.arange(n)
    if want_jacobian:
        dacc_o_dp = vol_dt * (ev.dphi * ev.rho_o + ev.phi * ev.drho_o) \
            * (1.0 - sw)
        dacc_o_ds = -vol_dt * ev.phi * ev.rho_o
        dacc_w_dp = vol_dt * (ev.dphi * ev.rho_w + ev.phi * ev.drho_w) * sw
        dacc_w_ds = vol_dt * ev.phi * (ev.rho_w + sw * ev.drho_w * (-ev.dpc))
        add(cells, cells, dacc_o_dp)
        add(cells, n + cells, dacc_o_ds)
        add(n + cells, cells, dacc_w_dp)
        add(n + cells, n + cells, dacc_w_ds)

    # interior faces; flux is positive into the lower-index cell
    lo, hi, gf = model.face_lo, model.face_hi, model.face_gf
    if lo.size:
        tgeo = DARCY_FT3 * gf
        for phase in ("oil", "water"):
            if phase == "oil":
                phi_pot, dphi_dp, dphi_ds = ev.phi_o, ev.dphio_dp, ev.dphio_ds
                lam, dlam_dp, dlam_ds = ev.lam_o, ev.dlamo_dp, ev.dlamo_ds
                row_of = lambda c: c
            else:
                phi_pot, dphi_dp, dphi_ds = ev.phi_w, ev.dphiw_dp, ev.dphiw_ds
                lam, dlam_dp, dlam_ds = ev.lam_w, ev.dlamw_dp, ev.dlamw_ds
                row_of = lambda c: n + c
            dpot = phi_pot[hi] - phi_pot[lo]
            take_hi = dpot > 0.0          # ties go to the lower index
            up = np.where(take_hi, hi, lo)
            lam_up = lam[up]
            flux = tgeo * lam_up * dpot   # into lo
            np.subtract.at(F, row_of(lo), flux)
            np.add.at(F, row_of(hi), flux)
            if want_jacobian:
                up_is_lo = ~take_hi
                dflux_dp_lo = tgeo * (-lam_up * dphi_dp[lo]
                                      + np.where(up_is_lo, dlam_dp[lo], 0.0)
                                      * dpot)
                dflux_ds_lo = tgeo * (-lam_up * dphi_ds[lo]
                                      + np.where(up_is_lo, dlam_ds[lo], 0.0)
                                      * dpot)
                dflux_dp_hi = tgeo * (lam_up * dphi_dp[hi]
                                      + np.where(take_hi, dlam_dp[hi], 0.0)
                                      * dpot)
                dflux_ds_hi = tgeo * (lam_up * dphi_ds[hi]
                                      + np.where(take_hi, dlam_ds[hi], 0.0)
                                      * dpot)
                r_lo, r_hi = row_of(lo), row_of(hi)
                add(r_lo, lo, -dflux_dp_lo)
                add(r_lo, n + lo, -dflux_ds_lo)
                add(r_lo, hi, -dflux_dp_hi)
                add(r_lo, n + hi, -dflux_ds_hi)
                add(r_hi, lo, dflux_dp_lo)
                add(r_hi, n + lo, dflux_ds_lo)
                add(r_hi, hi, dflux_dp_hi)
                add(r_hi, n + hi, dflux_ds_hi)

    # wells
    for l, well in enumerate(model.wells):
        control = controls[l]
        row = bm.well_row(l)
        pb = state.pbh[l]
        pb_col = row
        if control.mode in wl.CLOSED_MODES:
            first = well.perforations[0]
            i = first.cell
            pin, dpin_dp = wl.hydrostatic_pin(
                well, p[i], ev.rho_o[i], ev.drho_o[i], grid.depth[i])
            F[row] = pb - pin
            if want_jacobian:
                add([row], [pb_col], [1.0])
                add([row], [i], [-dpin_dp])
                # keep the sparsity pattern schedule-independent
                for perf in well.perforations:
                    c = perf.cell
                    add([c, c, n + c, n + c], [c, n + c, c, n + c],
                        [0.0, 0.0, 0.0, 0.0])
                    add([c, n + c], [pb_col, pb_col], [0.0, 0.0])
                    add([row, row], [n + i, pb_col], [0.0, 0.0])
                    if c != i:
                        add([row, row], [c, n + c], [0.0, 0.0])
            continue

        cvt_o = 1.0 / (model.fluids.oil.rho_ref * FT3_PER_BBL)
        cvt_w = 1.0 / (model.fluids.water.rho_ref * FT3_PER_BBL)
        rate_sum = 0.0
        drow_dpb = 0.0
        for perf in well.perforations:
            i = perf.cell
            flow = wl.perforation_rate(perf, well.injector, p[i], sw[i], pb,
                                       well.ref_depth, model.fluids)
            F[i] -= flow.q_o
            F[n + i] -= flow.q_w
            if want_jacobian:
                add([i, i, i], [i, n + i, pb_col],
                    [-flow.dqo_dp, -flow.dqo_ds, -flow.dqo_dpb])
                add([n + i, n + i, n + i], [i, n + i, pb_col],
                    [-flow.dqw_dp, -flow.dqw_ds, -flow.dqw_dpb])
            if control.mode == wl.Mode.BHP:
                continue
            if control.mode == wl.Mode.ORAT:
                rate_sum += flow.q_o * cvt_o
                d_dp = flow.dqo_dp * cvt_o
                d_ds = flow.dqo_ds * cvt_o
                drow_dpb += flow.dqo_dpb * cvt_o
            elif control.mode == wl.Mode.WRAT:
                rate_sum += flow.q_w * cvt_w
                d_dp = flow.dqw_dp * cvt_w
                d_ds = flow.dqw_ds * cvt_w
                drow_dpb += flow.dqw_dpb * cvt_w
            else:  # LRAT
                rate_sum += flow.q_o * cvt_o + flow.q_w * cvt_w
                d_dp = flow.dqo_dp * cvt_o + flow.dqw_dp * cvt_w
                d_ds = flow.dqo_ds * cvt_o + flow.dqw_ds * cvt_w
                drow_dpb += flow.dqo_dpb * cvt_o + flow.dqw_dpb * cvt_w
            if want_jacobian:
                add([row, row], [i, n + i], [d_dp, d_ds])
        if control.mode == wl.Mode.BHP:
            F[row] = pb - control.target
            if want_jacobian:
                add([row], [pb_col], [1.0])
                for perf in well.perforations:
                    add([row, row], [perf.cell, n + perf.cell], [0.0, 0.0])
        else:
            F[row] = rate_sum - wl.signed_target(well, control)
            if want_jacobian:
                add([row], [pb_col], [drow_dpb])

    if not want_jacobian:
        return F, None

    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N)).tocsr()
    A.sort_indices()
    return F, A


def well_flow_report(model, state, controls):
    """Per-well surface rates (oil stb/day, water bbl/day, signed into the
    reservoir) and BHP at a state; used by the reporter."""
    out = []
    for l, well in enumerate(model.wells):
        control = controls[l]
        qo = qw = 0.0
        if control.mode not in wl.CLOSED_MODES:
            for perf in well.perforations:
                i = perf.cell
                flow = wl.perforation_rate(perf, well.injector, state.p[i],
                                           state.sw[i], state.pbh[l],
                                           well.ref_depth, model.fluids)
                so, sw_ = wl.surface_rates(flow, model.fluids)
                qo += so
                qw += sw_
        out.append({"name": well.name, "mode": control.mode.name,
                    "oil_rate": qo, "water_rate": qw,
                    "bhp": float(state.pbh[l])})
    return out


def initialize_equilibrium(model, p_ref, z_ref, z_woc):
    """Hydrostatic equilibrium state at t=0.

    Pressure integrates dp/dz = rho(p)*g downward from (z_ref, p_ref) with
    the oil density above the water-oil contact and the water density
    below; the affine rho(p) gives a closed-form solution per segment.
    Water saturation is the table minimum above the contact and the table
    maximum below.
    """
    if not (math.isfinite(p_ref) and math.isfinite(z_ref)
            and math.isfinite(z_woc)):
        raise AssemblyError("equilibration needs finite p_ref, z_ref, z_woc")
    grid = model.grid
    fl = model.fluids

    def segment(p0, z0, z1, pvt):
        a = pvt.rho_ref * (1.0 - pvt.c_comp * pvt.p_ref)
        b = pvt.rho_ref * pvt.c_comp
        dz = z1 - z0
        if b == 0.0:
            return p0 + GRAV_HEAD * a * dz
        return (p0 + a / b) * math.exp(GRAV_HEAD * b * dz) - a / b

    def pressure_at(z):
        phase0 = fl.oil if z_ref < z_woc else fl.water
        if (z - z_woc) * (z_ref - z_woc) >= 0.0 or z == z_ref:
            return segment(p_ref, z_ref, z, phase0)
        p_woc = segment(p_ref, z_ref, z_woc, phase0)
        phase1 = fl.water if z >= z_woc else fl.oil
        return segment(p_woc, z_woc, z, phase1)

    depth = grid.depth
    p = np.array([pressure_at(float(z)) for z in depth])
    sw = np.where(depth < z_woc, fl.sat_table.sw_min, fl.sat_table.sw_max)

    pbh = np.empty(len(model.wells))
    for l, well in enumerate(model.wells):
        first = well.perforations[0]
        i = first.cell
        rho_o, drho_o = pr.density(p[i], fl.oil)
        pbh[l], _ = wl.hydrostatic_pin(well, p[i], rho_o, drho_o, depth[i])
    return SimulationState(p=p, sw=sw.astype(float), pbh=pbh, t=0.0)


def residual_scales(model, dt, controls):
    """Per-row scales making the residual dimensionless for convergence
    tests: accumulation scale for mass rows, target/pressure scale for
    well rows."""
    grid = model.grid
    bm = model.block_map
    scales = np.empty(bm.n_total)
    pv = grid.volume * grid.phi_ref / dt
    scales[bm.pressure] = pv * model.fluids.oil.rho_ref
    scales[bm.saturation] = pv * model.fluids.water.rho_ref
    for l, well in enumerate(model.wells):
        control = controls[l]
        if control.mode in wl.RATE_MODES:
            scales[bm.well_row(l)] = max(abs(control.target), 1.0)
        elif control.mode == wl.Mode.BHP:
            scales[bm.well_row(l)] = max(abs(control.target), 1.0)
        else:
            scales[bm.well_row(l)] = 1.0
    return scales


def phase_balance_defect(model, F, dt, mass_ref):
    """Per-phase global balance defect of a residual: |sum of the phase's
    cell rows| * dt relative to the reference in-place mass."""
    bm = model.block_map
    m_o, m_w = mass_ref
    d_o = abs(float(np.sum(F[bm.pressure]))) * dt / max(m_o, 1e-30)
    d_w = abs(float(np.sum(F[bm.saturation]))) * dt / max(m_w, 1e-30)
    return d_o, d_w
