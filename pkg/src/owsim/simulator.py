"""Simulation orchestration: the time loop over the well schedule, the
per-step Newton solve through the matrix-processing and preconditioning
stack, and the material-balance audit.

Workers are virtual: the partitioning drives the Schwarz subdomains, the
per-worker reordering and the row-ownership bookkeeping, while execution
is sequential and deterministic, so repeated runs with identical inputs
and worker counts produce byte-identical reports.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import discretization as dz
from . import matproc as mp
from . import nonlinear as nl
from . import precond as pc
from . import sparse as sparse_mod
from . import wells as wl
from .grid import partition_grid
from .units import FT3_PER_BBL

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    """Solver stack configuration: Newton mode, Krylov solver and caps,
    preconditioner composition and matrix processing choices."""

    newton: nl.NewtonConfig = field(default_factory=nl.NewtonConfig)
    controller: nl.TimeStepController = field(
        default_factory=nl.TimeStepController)
    linear_solver: str = "bicgstab"     # bicgstab | gmres
    restart: int = 50
    max_linear_iters: int = None        # default 300 bicgstab / 100 gmres
    precond: str = "cpr-fpf"            # none | ras | cpr-fpf
    overlap: int = 1
    decoupling: str = "qi"              # none | qi | abf
    reorder: bool = True

    def linear_cap(self):
        if self.max_linear_iters is not None:
            return self.max_linear_iters
        return 300 if self.linear_solver == "bicgstab" else 100


def config_from_deck(deck, overrides=None):
    """SolverConfig from defaults, deck SOLVER options, then overrides."""
    opts = {k.lower(): v for k, v in deck.solver_options.items()}
    if overrides:
        opts.update({k.lower(): v for k, v in overrides.items()
                     if v is not None})

    newton_kw = {}
    ctrl_kw = {}
    cfg_kw = {}
    mapping = {
        "newton": ("newton", "mode", str),
        "nltol": ("newton", "epsilon", float),
        "mbtol": ("newton", "mb_tol", float),
        "maxnewton": ("newton", "max_newton", int),
        "lintol": ("newton", "linear_tol_fixed", float),
        "forcing": ("newton", "forcing_variant", int),
        "dtinit": ("ctrl", "dt_init", float),
        "maxdt": ("ctrl", "dt_max", float),
        "mindt": ("ctrl", "dt_min", float),
        "growth": ("ctrl", "growth", float),
        "cut": ("ctrl", "cut", float),
        "solver": ("cfg", "linear_solver", str),
        "restart": ("cfg", "restart", int),
        "maxliniters": ("cfg", "max_linear_iters", int),
        "precond": ("cfg", "precond", str),
        "overlap": ("cfg", "overlap", int),
        "decoupling": ("cfg", "decoupling", str),
        "reorder": ("cfg", "reorder",
                    lambda v: str(v).lower() in ("on", "true", "1", "yes")),
    }
    for key, value in opts.items():
        if key not in mapping:
            raise ValueError(f"unknown solver option {key!r}")
        group, name, conv = mapping[key]
        target = {"newton": newton_kw, "ctrl": ctrl_kw, "cfg": cfg_kw}[group]
        target[name] = conv(value)
    if "dt_init" not in ctrl_kw:
        ctrl_kw["dt_init"] = min(1.0, ctrl_kw.get("dt_max", 100.0))
    return SolverConfig(newton=nl.NewtonConfig(**newton_kw),
                        controller=nl.TimeStepController(**ctrl_kw),
                        **cfg_kw)


@dataclass
class SimulationResult:
    """In-memory run results: time series rows, per-iteration log rows,
    summary totals and the exit status (0 success, 1 failure)."""

    report_rows: list
    iteration_rows: list
    summary: dict
    status: int
    warnings: tuple = ()


class _LinearHandle:
    """One transformed linear system ready for the Krylov solver."""

    def __init__(self, A, b, M, perm, cfg, diagnostics):
        self.A = A
        self.b = b
        self.M = M
        self.perm = perm
        self.cfg = cfg
        self.norm_b = float(np.linalg.norm(b))
        self.diagnostics = diagnostics

    def solve(self, eta):
        cfg = self.cfg
        if cfg.linear_solver == "bicgstab":
            res = sparse_mod.bicgstab(self.A, self.b, M=self.M, tol=eta,
                                      max_iter=cfg.linear_cap())
        else:
            res = sparse_mod.gmres(self.A, self.b, M=self.M, tol=eta,
                                   restart=cfg.restart,
                                   max_iter=cfg.linear_cap())
        y = mp.unpermute_solution(self.perm, res.x)
        rel = res.residual_norm / self.norm_b if self.norm_b > 0 else 0.0
        info = {"iterations": res.iterations,
                "resid_rel": rel,
                "resid_norm": res.residual_norm,
                "flag": res.flag}
        info.update(self.diagnostics)
        return y, info


class _StepProblem:
    """Newton problem adapter for one time step: assembly, transforms,
    preconditioning and safeguarded updates."""

    def __init__(self, model, prev_state, dt, controls, cfg, mass_ref,
                 row_owner):
        self.model = model
        self.prev = prev_state
        self.dt = dt
        self.controls = controls
        self.cfg = cfg
        self.mass_ref = mass_ref
        self.row_owner = row_owner
        self.scales = dz.residual_scales(model, dt, controls)
        self.bm = model.block_map

    def _state(self, x):
        return dz.SimulationState.unpack(x, self.bm.n_cells, self.bm.n_wells,
                                         t=self.prev.t + self.dt)

    def residual(self, x):
        return dz.assemble_residual(self.model, self._state(x), self.prev,
                                    self.dt, self.controls)

    def converged(self, F):
        scaled = float(np.max(np.abs(F / self.scales)))
        d_o, d_w = dz.phase_balance_defect(self.model, F, self.dt,
                                           self.mass_ref)
        newton = self.cfg.newton
        ok = (scaled <= newton.epsilon and d_o <= newton.mb_tol
              and d_w <= newton.mb_tol)
        return ok, scaled

    def linear_system(self, x, F):
        cfg = self.cfg
        model = self.model
        state = self._state(x)
        system = dz.assemble_jacobian(model, state, self.prev, self.dt,
                                      self.controls)
        A, b = system.matrix, system.rhs
        dec = mp.build_decoupler(A, self.bm, cfg.decoupling)
        A, b = mp.apply_decoupling(dec, A, b)
        diagnostics = {}
        if cfg.reorder:
            perm = mp.build_potential_permutation(model, state)
            diagnostics["ss_upper_pre"] = mp.strictly_upper_fraction(
                A, self.bm)
            A, b = mp.apply_permutation(perm, A, b)
            diagnostics["ss_upper_post"] = mp.strictly_upper_fraction(
                A, self.bm)
        else:
            perm = mp.identity_permutation(self.bm)
        owner = perm.permute_vector(self.row_owner)
        M = pc.make_preconditioner(cfg.precond, A, self.bm, owner,
                                   model.partition.num_workers, cfg.overlap)
        return _LinearHandle(A, b, M, perm, cfg, diagnostics)

    def apply_update(self, x, y):
        newton = self.cfg.newton
        n = self.bm.n_cells
        dsw = y[n:2 * n]
        max_dsw = float(np.max(np.abs(dsw))) if n else 0.0
        scale = 1.0
        if max_dsw > newton.max_sw_change:
            scale = newton.max_sw_change / max_dsw
        x2 = x + scale * y
        np.clip(x2[n:2 * n], 0.0, 1.0, out=x2[n:2 * n])
        return x2


def build_model(deck, num_workers=1):
    """ReservoirModel from a parsed deck and a worker count."""
    partition = partition_grid(deck.grid, num_workers)
    return dz.ReservoirModel(grid=deck.grid, fluids=deck.fluids,
                             wells=deck.wells, partition=partition)


def _schedule_boundaries(deck):
    times = {deck.end_time}
    times.update(t for t in deck.report_times if 0.0 < t <= deck.end_time)
    for well in deck.wells:
        times.update(t for t, _ in well.schedule if 0.0 < t <= deck.end_time)
    return sorted(times)


def _scheduled_controls(model, t):
    controls = []
    for well in model.wells:
        controls.append(wl.apply_schedule(well, t))
    return controls


def _resolved_controls(model, state, t):
    """Schedule lookup plus rate-to-BHP constraint switching."""
    controls = []
    for well, sched in zip(model.wells, _scheduled_controls(model, t)):
        cells = [perf.cell for perf in well.perforations]
        p_cells = [float(state.p[c]) for c in cells]
        sw_cells = [float(state.sw[c]) for c in cells]
        z_cells = [float(model.grid.depth[c]) for c in cells]
        controls.append(wl.resolve_active_constraint(
            well, sched, p_cells, sw_cells, z_cells, model.fluids))
    return controls


def _report_row(model, state, controls, cum, mass_ref):
    m_o, m_w = dz.accumulation_mass(model, state)
    m_o_tot, m_w_tot = float(np.sum(m_o)), float(np.sum(m_w))
    pv = model.grid.volume * model.grid.phi_ref
    row = {"time_days": state.t,
           "avg_pressure_pv_psi": float(np.sum(state.p * pv) / np.sum(pv)),
           "avg_pressure_cell_psi": float(np.mean(state.p)),
           "oil_in_place_lbm": m_o_tot,
           "water_in_place_lbm": m_w_tot}
    for flow, well in zip(dz.well_flow_report(model, state, controls),
                          model.wells):
        name = flow["name"]
        # producers report production as positive, injectors injection
        sign = 1.0 if well.injector else -1.0
        row[f"{name}_oil_rate_stb"] = sign * flow["oil_rate"]
        row[f"{name}_water_rate_bbl"] = sign * flow["water_rate"]
        row[f"{name}_bhp_psi"] = flow["bhp"]
        row[f"{name}_mode"] = flow["mode"]
    row.update({
        "cum_oil_prod_stb": cum["oil_prod"],
        "cum_water_prod_bbl": cum["water_prod"],
        "cum_water_inj_bbl": cum["water_inj"],
        "cum_oil_inj_stb": cum["oil_inj"],
    })
    mb_o, mb_w = _balance_errors(model, cum, mass_ref, (m_o_tot, m_w_tot))
    row["mb_oil"] = mb_o
    row["mb_water"] = mb_w
    return row


def _balance_errors(model, cum, mass_ref, mass_now):
    rho_o = model.fluids.oil.rho_ref
    rho_w = model.fluids.water.rho_ref
    net_o = (cum["oil_inj"] - cum["oil_prod"]) * rho_o * FT3_PER_BBL
    net_w = (cum["water_inj"] - cum["water_prod"]) * rho_w * FT3_PER_BBL
    thru_o = (cum["oil_inj"] + cum["oil_prod"]) * rho_o * FT3_PER_BBL
    thru_w = (cum["water_inj"] + cum["water_prod"]) * rho_w * FT3_PER_BBL
    m_o0, m_w0 = mass_ref
    err_o = abs((mass_now[0] - m_o0) - net_o) / max(m_o0, thru_o, 1e-30)
    err_w = abs((mass_now[1] - m_w0) - net_w) / max(m_w0, thru_w, 1e-30)
    return err_o, err_w


def material_balance(result, deck=None):
    """Final per-phase relative balance errors of a run (from the last
    report row's running audit columns)."""
    last = result.report_rows[-1]
    return last["mb_oil"], last["mb_water"]


def run_simulation(deck, num_workers=1, overrides=None, config=None):
    """Run the deck's schedule horizon; returns a SimulationResult.

    Schedule boundary times are always hit exactly; on an unrecoverable
    time-step abort the partial results are returned with status 1.
    """
    cfg = config if config is not None else config_from_deck(deck, overrides)
    model = build_model(deck, num_workers)
    state = dz.initialize_equilibrium(model, *deck.equil)
    row_owner = model.row_owner()

    m_o, m_w = dz.accumulation_mass(model, state)
    mass_ref = (float(np.sum(m_o)), float(np.sum(m_w)))

    boundaries = _schedule_boundaries(deck)
    cum = {"oil_prod": 0.0, "water_prod": 0.0, "water_inj": 0.0,
           "oil_inj": 0.0}

    report_rows = []
    iteration_rows = []
    counters = {"steps": 0, "newton": 0, "linear": 0, "cuts": 0,
                "wasted_newton": 0}
    status = 0
    failure_note = ""

    controls0 = (_scheduled_controls(model, 0.0) if deck.wells else [])
    report_rows.append(_report_row(model, state, controls0, cum, mass_ref))

    dt = min(cfg.controller.dt_init, cfg.controller.dt_max)
    end = deck.end_time

    def solve_step(state_in, dt_eff):
        controls = _resolved_controls(model, state_in, state_in.t) \
            if deck.wells else []
        problem = _StepProblem(model, state_in, dt_eff, controls, cfg,
                               mass_ref, row_owner)
        x, rep = nl.newton_solve(problem, state_in.pack(), cfg.newton)
        new_state = dz.SimulationState.unpack(
            x, model.block_map.n_cells, model.block_map.n_wells,
            t=state_in.t + dt_eff)
        return rep.converged, new_state, (rep, controls, dt_eff)

    while state.t < end - 1e-9:
        t_before = state.t
        try:
            state, dt, attempts = nl.advance_timestep(
                solve_step, state, dt, cfg.controller, boundaries)
        except nl.TimeStepAbort as exc:
            status = 1
            failure_note = str(exc)
            log.error("simulation aborted: %s", exc)
            break
        for b in boundaries:
            if abs(state.t - b) < 1e-6:
                state.t = b
                break
        counters["steps"] += 1
        counters["cuts"] += len(attempts) - 1
        step_no = counters["steps"]
        for rep, controls, dt_eff in attempts:
            accepted = 1 if rep.converged else 0
            if not rep.converged:
                counters["wasted_newton"] += rep.iterations
            for rec in rep.records:
                counters["newton"] += 1
                counters["linear"] += rec.linear_iters
                iteration_rows.append({
                    "step": step_no,
                    "time_days": t_before + dt_eff,
                    "dt_days": dt_eff,
                    "accepted": accepted,
                    "newton_iter": rec.newton_iter,
                    "resid_scaled_max": rec.resid_scaled,
                    "norm_b_linear": rec.norm_b_linear,
                    "eta": rec.eta,
                    "linear_iters": rec.linear_iters,
                    "linear_resid_rel": rec.linear_resid_rel,
                    "linear_flag": rec.linear_flag,
                    "ss_upper_pre": rec.ss_upper_pre,
                    "ss_upper_post": rec.ss_upper_post,
                })
        _, controls, dt_eff = attempts[-1]
        for flow, well in zip(dz.well_flow_report(model, state, controls),
                              model.wells):
            qo, qw = flow["oil_rate"], flow["water_rate"]
            cum["oil_prod"] += max(-qo, 0.0) * dt_eff
            cum["water_prod"] += max(-qw, 0.0) * dt_eff
            cum["oil_inj"] += max(qo, 0.0) * dt_eff
            cum["water_inj"] += max(qw, 0.0) * dt_eff
        report_rows.append(_report_row(model, state, controls, cum,
                                       mass_ref))

    mb_o, mb_w = (report_rows[-1]["mb_oil"], report_rows[-1]["mb_water"])
    newton_total = counters["newton"]
    summary = {
        "end_time_days": state.t,
        "steps": counters["steps"],
        "newton_iterations": newton_total,
        "linear_iterations": counters["linear"],
        "avg_linear_per_newton": (counters["linear"] / newton_total
                                  if newton_total else 0.0),
        "timestep_cuts": counters["cuts"],
        "wasted_newton_iterations": counters["wasted_newton"],
        "material_balance_oil": mb_o,
        "material_balance_water": mb_w,
        "status": status,
        "failure": failure_note,
        "workers": num_workers,
    }
    return SimulationResult(report_rows=report_rows,
                            iteration_rows=iteration_rows,
                            summary=summary, status=status,
                            warnings=deck.warnings)
