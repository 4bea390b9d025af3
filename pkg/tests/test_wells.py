import numpy as np
import pytest

from owsim import wells as wl
from owsim.props import FluidSystem, PhasePvt, RockModel, SatFunctionTable
from owsim.units import FT3_PER_BBL, GRAV_HEAD


@pytest.fixture
def fluids():
    return FluidSystem(
        rock=RockModel(c_r=3e-6, p_r=1000.0),
        oil=PhasePvt(rho_ref=46.244, p_ref=1000.0, c_comp=0.0,
                     mu_ref=2.0, c_mu=0.0),
        water=PhasePvt(rho_ref=62.419, p_ref=1000.0, c_comp=0.0,
                       mu_ref=0.5, c_mu=0.0),
        sat_table=SatFunctionTable(
            sw_nodes=np.array([0.2, 0.5, 0.8]),
            krw_nodes=np.array([0.0, 0.1, 0.4]),
            kro_nodes=np.array([1.0, 0.25, 0.0]),
            pc_nodes=np.zeros(3)))


def make_well(injector=False, wi=1.0e5, cell=0, depth=926.0, ref_depth=926.0,
              schedule=None, name="W"):
    if schedule is None:
        schedule = ((0.0, wl.WellControl(wl.Mode.BHP, 1000.0, None)),)
    return wl.WellSpec(name=name, injector=injector, ref_depth=ref_depth,
                       perforations=(wl.Perforation(cell, wi, depth),),
                       schedule=schedule)


# Table 1 of the bundled validation case, normalized through the same path
# the deck parser uses.
TABLE1_INJ = [(0.0, 1000.0), (1000.0, 10000.0), (1200.0, "shutin"),
              (2000.0, "unchanged"), (8000.0, 5000.0), (9000.0, "shutin"),
              (17000.0, 5000.0), (20000.0, "stop")]
TABLE1_PROD = [(0.0, "shutin"), (1000.0, 10000.0), (1200.0, "unchanged"),
               (2000.0, 20000.0), (8000.0, "shutin"), (9000.0, 25000.0),
               (17000.0, "shutin"), (20000.0, "stop")]


class TestPerforationRate:
    def test_zero_drawdown_gives_zero_rate(self, fluids):
        well = make_well()
        perf = well.perforations[0]
        p, sw = 1500.0, 0.5
        rho_o = 46.244
        dz = well.ref_depth - perf.depth
        pb = p + rho_o * GRAV_HEAD * dz  # dz = 0 here, pb = p
        flow = wl.perforation_rate(perf, False, p, sw, pb, well.ref_depth,
                                   fluids)
        assert flow.q_o == pytest.approx(0.0, abs=1e-9)

    def test_unit_mobility_rate_equals_well_index(self, fluids):
        # lambda*rho = 1 with unit drawdown gives q = W_i
        table = SatFunctionTable(
            sw_nodes=np.array([0.0, 1.0]),
            krw_nodes=np.array([0.0, 1.0]),
            kro_nodes=np.array([1.0, 0.0]),
            pc_nodes=np.zeros(2))
        unit = FluidSystem(
            rock=fluids.rock,
            oil=PhasePvt(rho_ref=2.0, p_ref=0.0, c_comp=0.0, mu_ref=2.0,
                         c_mu=0.0),
            water=fluids.water, sat_table=table)
        well = make_well(wi=1.0e5)
        perf = well.perforations[0]
        # kro = 1 at sw=0: lambda_o = rho*kro/mu = 2*1/2 = 1
        flow = wl.perforation_rate(perf, False, 100.0, 0.0, 101.0,
                                   well.ref_depth, unit)
        assert flow.q_o == pytest.approx(1.0e5)

    def test_zero_relperm_blocks_flow(self, fluids):
        well = make_well()
        perf = well.perforations[0]
        # sw at connate: krw = 0, so no water flows regardless of drawdown
        flow = wl.perforation_rate(perf, False, 1000.0, 0.2, 4000.0,
                                   well.ref_depth, fluids)
        assert flow.q_w == 0.0

    def test_injector_uses_total_mobility(self, fluids):
        well = make_well(injector=True)
        perf = well.perforations[0]
        # connate water: krw = 0 but the injector must keep injectivity
        flow = wl.perforation_rate(perf, True, 1000.0, 0.2, 1001.0,
                                   well.ref_depth, fluids)
        assert flow.q_w > 0.0
        assert flow.q_o == 0.0


class TestConstraintResidual:
    def test_bhp_mode(self, fluids):
        well = make_well()
        control = wl.WellControl(wl.Mode.BHP, 1000.0, None)
        r = wl.constraint_residual(well, control, 1000.0, [1500.0], [0.5],
                                   [926.0], fluids)
        assert r == 0.0
        r = wl.constraint_residual(well, control, 1250.0, [1500.0], [0.5],
                                   [926.0], fluids)
        assert r == pytest.approx(250.0)

    def test_wrat_residual_zero_at_target(self, fluids):
        well = make_well(injector=True,
                         schedule=((0.0, wl.WellControl(wl.Mode.WRAT, 1000.0,
                                                        2.0e4)),))
        control = well.schedule[0][1]
        pb = wl.implied_bhp(well, control, [1000.0], [0.5], [926.0], fluids)
        r = wl.constraint_residual(well, control, pb, [1000.0], [0.5],
                                   [926.0], fluids)
        assert abs(r) < 1e-8 * 1000.0

    def test_orat_two_perforations_split(self, fluids):
        perfs = (wl.Perforation(0, 5.0e4, 926.0),
                 wl.Perforation(1, 5.0e4, 926.0))
        well = wl.WellSpec(name="P", injector=False, ref_depth=926.0,
                           perforations=perfs,
                           schedule=((0.0, wl.WellControl(wl.Mode.ORAT,
                                                          200.0, 100.0)),))
        control = well.schedule[0][1]
        pb = wl.implied_bhp(well, control, [1500.0, 1500.0], [0.5, 0.5],
                            [926.0, 926.0], fluids)
        flows = [wl.perforation_rate(p, False, 1500.0, 0.5, pb, 926.0,
                                     fluids) for p in perfs]
        # identical cells: each perforation delivers half the target
        qo_surf = [wl.surface_rates(f, fluids)[0] for f in flows]
        assert qo_surf[0] == pytest.approx(qo_surf[1])
        assert qo_surf[0] == pytest.approx(-100.0, rel=1e-9)
        r = wl.constraint_residual(well, control, pb,
                                   [1500.0, 1500.0], [0.5, 0.5],
                                   [926.0, 926.0], fluids)
        assert abs(r) < 1e-8 * 200.0

    def test_closed_well_pins_bhp(self, fluids):
        well = make_well(ref_depth=1000.0, depth=926.0)
        control = wl.WellControl(wl.Mode.SHUTIN, None, None)
        p_cell = 1500.0
        rho_o = 46.244
        pin = p_cell + rho_o * GRAV_HEAD * (1000.0 - 926.0)
        r = wl.constraint_residual(well, control, pin, [p_cell], [0.5],
                                   [926.0], fluids)
        assert r == pytest.approx(0.0, abs=1e-12)


class TestApplySchedule:
    def _well(self, injector, rows):
        schedule = wl.schedule_from_tokens(injector, rows, 2.0e4)
        return make_well(injector=injector, schedule=schedule)

    def test_table1_at_500_days(self):
        inj = self._well(True, TABLE1_INJ)
        control = wl.apply_schedule(inj, 500.0)
        assert control.mode == wl.Mode.WRAT
        assert control.target == 1000.0

    def test_table1_at_1500_days(self):
        inj = self._well(True, TABLE1_INJ)
        prod = self._well(False, TABLE1_PROD)
        assert wl.apply_schedule(inj, 1500.0).mode == wl.Mode.SHUTIN
        c = wl.apply_schedule(prod, 1500.0)
        # 'unchanged' at 1200 keeps the 10000 sto target
        assert c.mode == wl.Mode.ORAT
        assert c.target == 10000.0

    def test_table1_beyond_last_entry(self):
        inj = self._well(True, TABLE1_INJ)
        prod = self._well(False, TABLE1_PROD)
        assert wl.apply_schedule(inj, 20000.0).mode == wl.Mode.STOP
        assert wl.apply_schedule(prod, 25000.0).mode == wl.Mode.STOP

    def test_reopening_uses_prior_rate_mode(self):
        inj = self._well(True, TABLE1_INJ)
        c = wl.apply_schedule(inj, 8500.0)
        assert c.mode == wl.Mode.WRAT
        assert c.target == 5000.0

    def test_time_before_first_entry(self):
        schedule = wl.schedule_from_tokens(True, [(10.0, 500.0)], None)
        well = make_well(injector=True, schedule=schedule)
        with pytest.raises(wl.ScheduleError):
            wl.apply_schedule(well, 5.0)


class TestResolveActiveConstraint:
    def test_rate_mode_kept_below_limit(self, fluids):
        well = make_well(injector=True, wi=1.0e5)
        sched = wl.WellControl(wl.Mode.WRAT, 1000.0, 2.0e4)
        out = wl.resolve_active_constraint(well, sched, [1000.0], [0.5],
                                           [926.0], fluids)
        assert out is sched

    def test_switches_to_bhp_at_limit(self, fluids):
        # a low-injectivity completion cannot take the rate below the cap
        well = make_well(injector=True, wi=1.0e-3)
        sched = wl.WellControl(wl.Mode.WRAT, 1000.0, 2.0e4)
        out = wl.resolve_active_constraint(well, sched, [1000.0], [0.5],
                                           [926.0], fluids)
        assert out.mode == wl.Mode.BHP
        assert out.target == 2.0e4

    def test_bhp_mode_unchanged(self, fluids):
        well = make_well()
        sched = wl.WellControl(wl.Mode.BHP, 900.0, 100.0)
        out = wl.resolve_active_constraint(well, sched, [1000.0], [0.5],
                                           [926.0], fluids)
        assert out is sched

    def test_producer_switch_at_floor(self, fluids):
        well = make_well(injector=False, wi=1.0)
        sched = wl.WellControl(wl.Mode.ORAT, 1.0e6, 100.0)
        out = wl.resolve_active_constraint(well, sched, [1000.0], [0.5],
                                           [926.0], fluids)
        assert out.mode == wl.Mode.BHP
        assert out.target == 100.0


class TestWellIndex:
    def test_peaceman_formula(self):
        wi = wl.peaceman_well_index(kx=200.0, ky=200.0, dx=1000.0, dy=1000.0,
                                    dz=50.0, radius=0.25)
        from owsim.units import DARCY_FT3
        r_eq = 0.14 * np.sqrt(2.0) * 1000.0
        expected = DARCY_FT3 * 2.0 * np.pi * 200.0 * 50.0 / np.log(r_eq / 0.25)
        assert wi == pytest.approx(expected)

    def test_invalid_radius(self):
        with pytest.raises(ValueError):
            wl.peaceman_well_index(1.0, 1.0, 1.0, 1.0, 1.0, 0.0)


class TestScheduleNormalization:
    def test_stop_is_permanent(self):
        with pytest.raises(ValueError, match="STOP"):
            wl.schedule_from_tokens(True, [(0.0, 100.0), (5.0, "stop"),
                                           (10.0, 200.0)], None)

    def test_unchanged_without_prior_fails(self):
        with pytest.raises(ValueError, match="unchanged"):
            wl.schedule_from_tokens(True, [(0.0, "unchanged")], None)

    def test_explicit_mode_tokens(self):
        sched = wl.schedule_from_tokens(
            False, [(0.0, ("bhp", 250.0)), (10.0, ("lrat", 1200.0))], 50.0)
        assert sched[0][1].mode == wl.Mode.BHP
        assert sched[1][1].mode == wl.Mode.LRAT
        assert sched[1][1].bhp_limit == 50.0

    def test_initial_seed_prepended(self):
        initial = wl.WellControl(wl.Mode.WRAT, 111.0, 1e4)
        sched = wl.schedule_from_tokens(True, [(100.0, 222.0)], 1e4,
                                        initial=initial)
        assert sched[0] == (0.0, initial)
        assert sched[1][1].target == 222.0
