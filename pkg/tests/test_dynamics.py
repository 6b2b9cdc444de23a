from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.optimize import brentq

from curvens import dynamics as dyn
from curvens.errors import InvalidParam, NoConvergence, SpacelikeSegment


def line(xs):
    return [[x, 0.0, 0.0] for x in xs]


def single(dt, dx, mass=1.0, kappa=1.0):
    return dyn.SystemState([0.0, dt], [line([0.0, dx])], [[mass]], kappa)


class TestIntervalQuantities:
    @pytest.mark.parametrize("dt,dx,expected", [(2.0, 0.0, 2.0), (1.0, 0.6, 0.8)])
    def test_xi_interval(self, dt, dx, expected):
        assert_allclose(dyn.xi_interval(single(dt, dx), 0), expected, rtol=1e-15)

    def test_kappa_scales(self):
        assert_allclose(dyn.xi_interval(single(1.0, 0.6, kappa=3.0), 0), 2.4, rtol=1e-15)

    @pytest.mark.parametrize("dx", [1.0, 1.5])
    def test_null_or_spacelike_rejected(self, dx):
        with pytest.raises(SpacelikeSegment):
            dyn.xi_interval(single(1.0, dx), 0)
        with pytest.raises(SpacelikeSegment):
            dyn.WorldlineSegment(0.0, 1.0, (0, 0, 0), (dx, 0, 0), 1.0).proper_time

    def test_massless_spacelike_segment_ignored(self):
        s = dyn.SystemState([0.0, 1.0], [line([0, 0]), line([0, 5])], [[1.0], [0.0]])
        assert dyn.xi_interval(s, 0) == 1.0

    @pytest.mark.parametrize("dx,expected", [(0.0, 1.0), (0.6, 1.25)])
    def test_energy(self, dx, expected):
        assert_allclose(dyn.energy(single(1.0, dx), 0), expected, rtol=1e-15)

    def test_energy_additive(self):
        s = dyn.SystemState([0.0, 1.0], [line([0, 0]), line([0, 0.6])], [[1.0], [1.0]])
        assert_allclose(dyn.energy(s, 0), 2.25, rtol=1e-15)

    def test_interval_out_of_range(self):
        with pytest.raises(InvalidParam):
            dyn.energy(single(1.0, 0.0), 1)

    def test_segment_view(self):
        seg = dyn.scenario_wall_bounce().segments(1)[0]
        assert seg.t_start == 1.9 and seg.x_end == (0.0, 0.0, 0.0)
        assert_allclose(seg.speed, 1 / 1.1)


class TestResidual:
    def test_inertial_is_zero(self):
        s = dyn.SystemState([0.0, 1.0, 3.0], [line([0, 0.3, 0.9])], [[1.0, 1.0]])
        assert abs(dyn.stationarity_residual(s, 0, 1)) < 1e-15

    def test_wall_bounce_is_zero(self):
        s = dyn.SystemState([0.0, 1.5, 3.0], [line([0, 1, 0])], [[1.0, 1.0]])
        assert abs(dyn.stationarity_residual(s, 0, 1)) < 1e-15

    def test_by_hand_derivative(self):
        # Xi = k (sqrt(t^2 - a^2) + sqrt((T - t)^2 - b^2)); dXi/dt = k (t / T_a - (T - t) / T_b)
        k, t, T, a, b = 2.0, 0.7, 2.0, 0.3, 0.7
        s = dyn.SystemState([0.0, t, T], [line([0, a, a + b])], [[1.0, 1.0]], k)
        by_hand = k * (t / math.sqrt(t * t - a * a) - (T - t) / math.sqrt((T - t) ** 2 - b * b))
        e = dyn.energies(s)
        assert_allclose(dyn.stationarity_residual(s, 0, 1), k * (e[1] - e[0]), rtol=1e-15)
        assert_allclose(dyn.xi_gradient(s)[0], by_hand, rtol=1e-13)

    @given(
        st.lists(st.floats(0.2, 1.0), min_size=3, max_size=6),
        st.lists(st.floats(-0.15, 0.15), min_size=6, max_size=6),
        st.floats(0.5, 3.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_gradient_matches_finite_differences(self, dts, steps, kappa):
        times = np.concatenate([[0.0], np.cumsum(dts)])
        xs = np.concatenate([[0.0], np.cumsum(np.asarray(steps[: len(dts)]) * np.asarray(dts))])
        s = dyn.SystemState(times, [line(xs)], [[1.5] * len(dts)], kappa)
        analytic = dyn.xi_gradient(s)
        fd = dyn.xi_gradient_fd(s, 1e-6)
        assert_allclose(fd, analytic, rtol=1e-6, atol=1e-6 * np.max(np.abs(dyn.energies(s))) * kappa)


def speed_change_oracle() -> float:
    s = dyn.scenario_speed_change()

    def mismatch(t1):
        e = dyn.energies(s, np.array([0.0, t1, 2.0]))
        return e[1] - e[0]

    # both particles need t1 > 0.5 and 2 - t1 > 0.7
    return brentq(mismatch, 0.5 + 1e-9, 1.3 - 1e-9, xtol=1e-15)


class TestRelax:
    def test_stationary_state_takes_no_iterations(self):
        s = dyn.SystemState([0.0, 1.0, 2.0], [line([0, 0.5, 1.0])], [[1.0, 1.0]])
        tr = dyn.relax_trace(s)
        assert tr.iterations == 0
        assert np.array_equal(tr.state.times, s.times)

    def test_speed_change_against_root_finder(self):
        tr = dyn.relax_trace(dyn.scenario_speed_change())
        assert_allclose(tr.state.times[1], speed_change_oracle(), rtol=1e-10)
        assert tr.residual <= 1e-10

    @pytest.mark.parametrize("name", sorted(dyn.SCENARIOS))
    def test_builtin_scenarios_conserve_energy(self, name):
        s = dyn.SCENARIOS[name]()
        tr = dyn.relax_trace(s)
        e = dyn.energies(tr.state)
        assert np.max(np.abs(e[:, None] - e[None, :])) <= 1e-9 * e.max()
        assert tr.state.times[0] == s.times[0] and tr.state.times[-1] == s.times[-1]
        assert all(b >= a for a, b in zip(tr.xi_history, tr.xi_history[1:]))

    def test_known_stationary_times(self):
        assert_allclose(dyn.relax_to_stationary(dyn.scenario_free_flight()).times, [0, 1, 2, 3], atol=1e-9)
        assert_allclose(dyn.relax_to_stationary(dyn.scenario_wall_bounce()).times, [0, 1.5, 3], atol=1e-9)

    def test_merge_conserves_energy(self):
        out = dyn.relax_to_stationary(dyn.scenario_merge())
        before, after = dyn.energies(out)
        assert_allclose(before, after, rtol=1e-9)
        # one body after the event, two before
        assert np.count_nonzero(out.masses[:, 1]) == 1

    def test_stationary_point_maximises_xi(self):
        out = dyn.relax_to_stationary(dyn.scenario_free_flight())
        best = dyn.xi_total(out)
        for j in (1, 2):
            for d in (-1e-3, 1e-3):
                t = out.times.copy()
                t[j] += d
                assert dyn.xi_total(out, t) < best

    def test_no_convergence(self):
        with pytest.raises(NoConvergence):
            dyn.relax_trace(dyn.scenario_free_flight(), max_iter=1)

    def test_single_interval(self):
        tr = dyn.relax_trace(single(1.0, 0.2))
        assert tr.iterations == 0 and tr.residual == 0.0

    def test_rest_mass_change_has_no_stationary_point(self):
        # at rest E = M on each interval whatever the boundary times are
        s = dyn.SystemState([0.0, 1.0, 2.0], [line([0, 0, 0])], [[1.0, 0.5]])
        with pytest.raises(NoConvergence):
            dyn.relax_trace(s)

    @given(
        st.lists(st.floats(0.4, 1.0), min_size=2, max_size=5),
        st.lists(st.floats(0.05, 0.3), min_size=5, max_size=5),
        st.lists(st.booleans(), min_size=5, max_size=5),
        st.floats(0.5, 2.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_random_chains_relax(self, dts, ds, flips, m):
        # equal energies need dt_j proportional to |dx_j|, feasible since sum |dx| < total time
        n = len(dts)
        steps = [d if f else -d for d, f in zip(ds[:n], flips)]
        times = np.concatenate([[0.0], np.cumsum(dts)])
        xs = np.concatenate([[0.0], np.cumsum(steps)])
        s = dyn.SystemState(times, [line(xs)], [[m] * n])
        tr = dyn.relax_trace(s)
        e = dyn.energies(tr.state)
        assert (e.max() - e.min()) <= 1e-9 * e.max()
        assert all(b >= a for a, b in zip(tr.xi_history, tr.xi_history[1:]))
        # E depends on the times only through u^2, so slow chains pin them less tightly than E itself
        assert_allclose(np.diff(tr.state.times), np.abs(steps) * times[-1] / np.sum(np.abs(steps)), rtol=1e-6)


class TestFrame:
    @given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1))
    @settings(max_examples=25, deadline=None)
    def test_boost_keeps_balance(self, wx, wy):
        base = dyn.relax_to_stationary(dyn.scenario_wall_bounce())
        boosted = dyn.relax_to_stationary(dyn.galilean_boost(base, [wx, wy, 0.0]))
        e0, e = dyn.energies(base), dyn.energies(boosted)
        assert (e.max() - e.min()) <= 1e-9 * e.max()
        # smooth in w: a 0.1 boost of a particle moving at 2/3 cannot move E by more than O(w)
        assert abs(e[0] - e0[0]) <= 3.0 * math.hypot(wx, wy) * e0[0] + 1e-12

    def test_inertial_boost_stays_stationary(self):
        base = dyn.relax_to_stationary(dyn.scenario_free_flight())
        boosted = dyn.galilean_boost(base, [0.05, -0.03, 0.02])
        assert np.max(np.abs(dyn.xi_gradient(boosted))) < 1e-12

    def test_energy_smooth_in_boost(self):
        base = dyn.relax_to_stationary(dyn.scenario_free_flight())
        ws = np.linspace(-0.1, 0.1, 21)
        E = np.array([dyn.energies(dyn.galilean_boost(base, [w, 0, 0]))[0] for w in ws])
        second = np.diff(E, 2)
        assert np.max(np.abs(second)) < 1e-3

    def test_bad_boost(self):
        with pytest.raises(InvalidParam):
            dyn.galilean_boost(dyn.scenario_merge(), [0.1, 0.0])


class TestScenarioIO:
    def test_yaml_round_trip(self, tmp_path):
        s = dyn.scenario_merge()
        path = tmp_path / "s.yaml"
        path.write_text(dyn.dump_scenario(s))
        back = dyn.load_scenario(path)
        assert np.array_equal(back.times, s.times)
        assert np.array_equal(back.positions, s.positions)
        assert np.array_equal(back.masses, s.masses)

    def test_short_form(self, tmp_path):
        path = tmp_path / "s.yaml"
        path.write_text("kappa: 2\ntimes: [0, 1, 2]\nparticles:\n  - mass: 1\n    breakpoints: [[0], [0.5], [1]]\n")
        s = dyn.load_scenario(path)
        assert s.kappa == 2.0 and s.masses.tolist() == [[1.0, 1.0]]
        assert s.positions[0, 1].tolist() == [0.5, 0.0, 0.0]

    @pytest.mark.parametrize(
        "data",
        [
            {"times": [0, 1], "particles": [{"mass": 1, "breakpoints": [[0], [0]]}], "extra": 1},
            {"times": [0, 1], "particles": [{"mass": 1, "colour": "red", "breakpoints": [[0], [0]]}]},
            {"times": [0, 1], "particles": [{"mass": 1, "masses": [1], "breakpoints": [[0], [0]]}]},
            {"times": [0, 1], "particles": [{"mass": 1, "breakpoints": [[0]]}]},
            {"times": [0, 1], "particles": []},
            {"particles": []},
            {"times": [1, 0], "particles": [{"mass": 1, "breakpoints": [[0], [0]]}]},
            {"times": [0, 1], "particles": [{"mass": -1, "breakpoints": [[0], [0]]}]},
            {"kappa": 0, "times": [0, 1], "particles": [{"mass": 1, "breakpoints": [[0], [0]]}]},
        ],
    )
    def test_rejects_bad_scenarios(self, data):
        with pytest.raises(InvalidParam):
            dyn.state_from_dict(data)

    def test_documented_example(self):
        s = dyn.load_scenario(Path(__file__).resolve().parents[1] / "docs" / "example.yaml")
        assert s.masses[1].tolist() == [1.0, 1.0, 0.0]
        assert dyn.energy_mismatch(dyn.relax_to_stationary(s)) <= 1e-9

    def test_non_mapping_file(self, tmp_path):
        path = tmp_path / "s.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(InvalidParam):
            dyn.load_scenario(path)

    def test_report_is_json(self):
        s = dyn.scenario_wall_bounce()
        tr = dyn.relax_trace(s)
        d = json.loads(json.dumps(dyn.report(tr.state, tr)))
        assert len(d["energies"]) == 2 and d["energy_mismatch"] < 1e-9
        assert d["iterations"] == tr.iterations
