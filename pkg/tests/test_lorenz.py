import dataclasses
import math

import numpy as np
import pytest

from suspflow import (
    LeftTrap,
    LorenzParams,
    NoReturn,
    OdeState,
    TraceNotFound,
    TrapBox,
    escape_volume,
    flow_deviation_volume,
    flow_space_average,
    geometric_lorenz_2d,
    integrate,
    leafwise_average_gap,
    locate_section_trace,
    occupation_fraction,
    poincare_return,
    return_time_profile,
    trap_violation_fraction,
    vector_field,
)

H_COARSE = 2e-3  # desk-scale step for statistical tests; accuracy covered separately


class TestVectorField:
    def test_zero_exactly_at_equilibria(self):
        p = LorenzParams()
        for eq in p.equilibria():
            fx, fy, fz = vector_field(p, eq)
            assert abs(fx) <= 1e-12 and abs(fy) <= 1e-12 and abs(fz) <= 1e-12

    def test_equilibria_values(self):
        p = LorenzParams()
        eqs = p.equilibria()
        assert eqs[0] == (0.0, 0.0, 0.0)
        c = math.sqrt(72.0)
        assert eqs[1] == pytest.approx((c, c, 27.0))
        assert eqs[2] == pytest.approx((-c, -c, 27.0))

    def test_classic_field_components(self):
        p = LorenzParams()
        fx, fy, fz = vector_field(p, (1.0, 2.0, 3.0))
        assert fx == 10.0 * (2.0 - 1.0)
        assert fy == 1.0 * (28.0 - 3.0) - 2.0
        assert fz == 1.0 * 2.0 - (8.0 / 3.0) * 3.0

    def test_param_validation(self):
        with pytest.raises(ValueError):
            LorenzParams(sigma=-1.0)
        with pytest.raises(ValueError):
            LorenzParams(beta=0.0)


class TestIntegrate:
    def test_zero_time_is_identity(self):
        p = LorenzParams()
        s0 = OdeState(1.0, 2.0, 3.0, 5.0)
        s1 = integrate(p, s0, 0.0)
        assert (s1.x, s1.y, s1.z, s1.t) == (1.0, 2.0, 3.0, 5.0)

    def test_time_accumulates(self):
        p = LorenzParams()
        s = integrate(p, OdeState(1.0, 1.0, 20.0, 2.0), 1.5, h=1e-3)
        assert s.t == 3.5

    def test_fourth_order_convergence(self):
        p = LorenzParams()
        s0 = OdeState(1.0, 1.0, 20.0, 0.0)
        outs = [integrate(p, s0, 1.0, h=h) for h in (1e-3, 5e-4, 2.5e-4)]
        d12 = sum(abs(a - b) for a, b in
                  [(outs[0].x, outs[1].x), (outs[0].y, outs[1].y), (outs[0].z, outs[1].z)])
        d23 = sum(abs(a - b) for a, b in
                  [(outs[1].x, outs[2].x), (outs[1].y, outs[2].y), (outs[1].z, outs[2].z)])
        assert d12 / d23 == pytest.approx(16.0, rel=0.5)

    def test_short_step_matches_field_direction(self):
        p = LorenzParams()
        s0 = OdeState(1.0, 2.0, 3.0, 0.0)
        f = vector_field(p, (1.0, 2.0, 3.0))
        t = 1e-5
        s1 = integrate(p, s0, t, h=t)
        # the gap to the Euler prediction is the curvature term ~ |f''| t^2/2
        assert s1.x == pytest.approx(1.0 + t * f[0], abs=5e-8)
        assert s1.y == pytest.approx(2.0 + t * f[1], abs=5e-8)
        assert s1.z == pytest.approx(3.0 + t * f[2], abs=5e-8)

    def test_equilibrium_is_fixed(self):
        p = LorenzParams()
        c = math.sqrt(72.0)
        s = integrate(p, OdeState(c, c, 27.0, 0.0), 5.0, h=1e-3)
        assert (s.x, s.y, s.z) == pytest.approx((c, c, 27.0), abs=1e-9)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            integrate(LorenzParams(), OdeState(1.0, 1.0, 20.0, 0.0), -1.0)


class TestSection:
    def test_crossing_lands_on_section(self):
        p = LorenzParams()
        cr = poincare_return(p, 2.0, 3.0)
        assert cr.return_time > 0.0
        landed = integrate(p, OdeState(2.0, 3.0, 27.0, 0.0), cr.return_time)
        assert abs(landed.z - 27.0) <= 1e-9
        assert landed.x == pytest.approx(cr.x, abs=1e-8)
        assert landed.y == pytest.approx(cr.y, abs=1e-8)

    def test_symmetric_starts_cross_symmetrically(self):
        # the field is odd under (x,y,z) -> (-x,-y,z), exactly in floats
        p = LorenzParams()
        cr1 = poincare_return(p, 2.0, 3.0)
        cr2 = poincare_return(p, -2.0, -3.0)
        assert cr1.x == -cr2.x
        assert cr1.y == -cr2.y
        assert cr1.return_time == cr2.return_time

    def test_upward_start_rejected(self):
        with pytest.raises(ValueError):
            poincare_return(LorenzParams(), 9.0, 9.0)

    def test_start_outside_box_rejected(self):
        with pytest.raises(LeftTrap):
            poincare_return(LorenzParams(), 100.0, 0.0)

    def test_no_return_within_budget(self):
        with pytest.raises(NoReturn):
            poincare_return(LorenzParams(), 2.0, 3.0, max_time=0.01)

    def test_trace_sits_at_zero_by_symmetry(self):
        assert locate_section_trace(LorenzParams()) == 0.0

    def test_trace_found_from_asymmetric_bracket(self):
        got = locate_section_trace(LorenzParams(), x_lo=-0.37, x_hi=0.53)
        assert abs(got) <= 1e-11

    def test_one_sided_bracket_rejected(self):
        with pytest.raises(TraceNotFound):
            locate_section_trace(LorenzParams(), x_lo=0.1, x_hi=0.4)

    def test_return_time_profile_is_logarithmic(self):
        prof = return_time_profile(LorenzParams(), n_points=6)
        assert prof.b > 0.0
        assert prof.r_squared >= 0.99
        assert len(prof.distances) == 6
        # times grow as the start approaches the trace
        assert prof.times[0] > prof.times[-1]

    def test_profile_range_validation(self):
        with pytest.raises(ValueError):
            return_time_profile(LorenzParams(), d_lo=1e-8, d_hi=1e-2)
        with pytest.raises(ValueError):
            return_time_profile(LorenzParams(), n_points=2)


class TestTrapBox:
    def test_membership(self):
        box = TrapBox()
        assert box.contains(0.0, 0.0, 0.0)
        assert box.contains(-30.0, 30.0, 60.0)
        assert not box.contains(0.0, 0.0, 61.0)
        assert not box.contains(31.0, 0.0, 0.0)

    def test_degenerate_box_rejected(self):
        with pytest.raises(ValueError):
            TrapBox(xlo=1.0, xhi=-1.0)


class TestFlowAverages:
    def test_z_average_near_reference(self):
        est = flow_space_average(LorenzParams(), coord="z", n_orbits=8,
                                 burn_in=20.0, horizon=2000.0, h=H_COARSE, seed=71)
        assert est.value == pytest.approx(23.55, abs=0.2)
        assert est.aborted == 0

    def test_x_average_near_zero_by_symmetry(self):
        est = flow_space_average(LorenzParams(), coord="x", n_orbits=8,
                                 burn_in=20.0, horizon=2000.0, h=H_COARSE, seed=72)
        assert abs(est.value) < 0.5

    def test_unknown_coord_rejected(self):
        with pytest.raises(ValueError):
            flow_space_average(LorenzParams(), coord="w")

    def test_seed_determinism(self):
        kw = dict(coord="z", n_orbits=4, burn_in=5.0, horizon=100.0, h=H_COARSE)
        a = flow_space_average(LorenzParams(), seed=3, **kw)
        b = flow_space_average(LorenzParams(), seed=3, **kw)
        assert a == b


class TestVolumes:
    def test_loose_epsilon_means_no_deviation(self):
        est = flow_deviation_volume(LorenzParams(), "z", 23.55, 1e3, 10.0,
                                    400, seed=73, h=H_COARSE)
        assert est.value == 0.0
        assert est.aborted == 0

    def test_volume_shrinks_with_horizon(self):
        kw = dict(n_samples=1500, seed=74, h=H_COARSE)
        v10 = flow_deviation_volume(LorenzParams(), "z", 23.55, 3.0, 10.0, **kw)
        v40 = flow_deviation_volume(LorenzParams(), "z", 23.55, 3.0, 40.0, **kw)
        assert v10.value > v40.value > 0.0

    def test_callable_observable_matches_coordinate(self):
        kw = dict(n_samples=300, seed=75, h=H_COARSE)
        a = flow_deviation_volume(LorenzParams(), "z", 23.55, 3.0, 10.0, **kw)
        b = flow_deviation_volume(LorenzParams(), lambda x, y, z: z, 23.55,
                                  3.0, 10.0, **kw)
        assert a.hits == b.hits

    def test_full_box_is_invariant_for_settled_orbits(self):
        est = escape_volume(LorenzParams(), TrapBox(), 50.0, 400, seed=76,
                            h=H_COARSE, settle=10.0)
        assert est.value == 1.0

    def test_raw_box_leaks_through_corners(self):
        frac = trap_violation_fraction(LorenzParams(), n_orbits=1500,
                                       horizon=100.0, settle=0.0, seed=77,
                                       h=H_COARSE)
        assert 0.10 < frac < 0.25

    def test_truncated_region_drains(self):
        region = dataclasses.replace(TrapBox(), xhi=5.0)
        kw = dict(n_samples=1200, seed=78, h=H_COARSE)
        s2 = escape_volume(LorenzParams(), region, 2.0, **kw)
        s6 = escape_volume(LorenzParams(), region, 6.0, **kw)
        assert s2.value > s6.value > 0.0
        assert s2.value < 0.2

    def test_zero_horizon_counts_initial_membership(self):
        est = escape_volume(LorenzParams(), TrapBox(), 0.0, 200, seed=79)
        assert est.value == 1.0

    def test_occupation_fraction_separates_regions(self):
        full = occupation_fraction(LorenzParams(), TrapBox(),
                                   total_time=500.0, h=H_COARSE)
        cut = occupation_fraction(LorenzParams(),
                                  dataclasses.replace(TrapBox(), xhi=5.0),
                                  total_time=500.0, h=H_COARSE)
        assert full == 1.0
        assert 0.5 < cut < 0.95


class TestLeafwiseGap:
    def test_gap_bounded_by_contraction(self, gl2_model):
        lam = gl2_model.params.lambda_s
        L = 0.8
        phi = lambda x, y: math.sin(x) + L * y
        for n in (1, 3, 10):
            gap = leafwise_average_gap(gl2_model, phi, 0.37, -0.5, 0.25, n)
            assert gap <= L * 0.75 / (n * (1.0 - lam)) + 1e-15

    def test_gap_shrinks_like_one_over_n(self, gl2_model):
        phi = lambda x, y: y
        g1 = leafwise_average_gap(gl2_model, phi, 0.61, -0.3, 0.3, 1)
        g10 = leafwise_average_gap(gl2_model, phi, 0.61, -0.3, 0.3, 10)
        assert g10 < g1 / 5.0

    def test_identical_points_have_zero_gap(self, gl2_model):
        assert leafwise_average_gap(gl2_model, lambda x, y: y, 0.5, 0.2, 0.2, 7) == 0.0

    def test_needs_positive_n(self, gl2_model):
        with pytest.raises(ValueError):
            leafwise_average_gap(gl2_model, lambda x, y: y, 0.5, 0.0, 0.1, 0)
