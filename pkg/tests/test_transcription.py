import math
from dataclasses import replace

import numpy as np
import pytest

from laptime.conic import ConicSolution, Status, residuals, solve
from laptime.conic.program import Cone
from laptime.fixtures import corner_track, cvt_setup, flat_track, long_track, sr_setup
from laptime.powertrain import TransmissionSpec, psd_factor
from laptime.transcription import (
    NODE_QUANTITIES,
    TranscriptionError,
    TranscriptionOptions,
    build_problem2,
    build_problem3,
    effective_budget,
    extract_trajectories,
)


def _args(setup):
    return setup.vehicle, setup.transmission, setup.motor, setup.battery


def _solution(x, status=Status.OPTIMAL):
    return ConicSolution(status, x, np.zeros(0), np.zeros(0), np.zeros(0), 0.0, 0.0, {}, 0)


@pytest.fixture(scope="module")
def binding_lap():
    """Speed-independent program on the corner track with a binding 2.5 MJ budget."""
    su = cvt_setup(budget=2.5e6)
    track = corner_track()
    prog, vm = build_problem2(track, *_args(su))
    sol = solve(prog)
    assert sol.status is Status.OPTIMAL
    return su, track, prog, vm, sol, extract_trajectories(sol, vm, track, su.vehicle)


# -- structure ----------------------------------------------------------------


def test_three_node_cone_counts():
    su = cvt_setup()
    track = flat_track(length=20.0)
    prog, vm = build_problem2(track, *_args(su))
    assert track.num_nodes == 3
    # lethargy, kinetic energy, motor and battery cones at every node
    assert prog.count(Cone.SECOND_ORDER, 3) == 4 * 3
    prog3, _ = build_problem3(track, *_args(su), v_bar=np.full(3, 40.0))
    assert prog3.count(Cone.SECOND_ORDER, 3) == 3 * 3
    assert prog3.count(Cone.SECOND_ORDER, 5) == 3


@pytest.mark.parametrize("n_int", [2, 7, 30])
def test_variable_counts(n_int):
    track = flat_track(length=10.0 * n_int)
    n = track.num_nodes
    _, vm = build_problem2(track, *_args(cvt_setup()))
    assert vm.num_vars == 10 * n + n
    _, vm3 = build_problem3(track, *_args(cvt_setup()), v_bar=np.full(n, 30.0))
    assert vm3.num_vars == 12 * n
    _, vm_sr = build_problem2(track, *_args(sr_setup()))
    assert vm_sr.num_vars == 10 * n + 1
    _, vm_fixed = build_problem2(track, *_args(sr_setup(optimize=False)))
    assert vm_fixed.num_vars == 10 * n


def test_indices_dense_and_disjoint():
    track = flat_track(length=50.0)
    _, vm = build_problem3(track, *_args(cvt_setup()), v_bar=np.full(track.num_nodes, 30.0))
    used = np.concatenate([vm.index[q] for q in NODE_QUANTITIES] + [vm.gamma, vm.omega])
    assert sorted(used.tolist()) == list(range(vm.num_vars))


def test_long_fixture_program_validates():
    track = long_track()
    prog, vm = build_problem2(track, *_args(cvt_setup(budget=15e6)))
    prog.validate()
    assert vm.num_vars == 11 * 1358
    assert prog.G.shape[0] == prog.num_cone_rows


def test_speed_variable_depends_on_ratio_only():
    track = flat_track(length=40.0)
    prog, vm = build_problem3(track, *_args(cvt_setup()), v_bar=np.full(track.num_nodes, 50.0))
    A = prog.A.tocsr()
    for k in range(track.num_nodes):
        rows = np.unique(A[:, int(vm.omega[k])].nonzero()[0])
        assert rows.size == 1
        cols = set(A[rows[0]].indices.tolist())
        assert cols == {int(vm.omega[k]), int(vm.gamma[k])}


def test_input_errors():
    track = flat_track(length=40.0)
    su = cvt_setup()
    with pytest.raises(TranscriptionError, match="positive"):
        build_problem3(track, *_args(su), v_bar=np.zeros(track.num_nodes))
    with pytest.raises(TranscriptionError, match="one entry per node"):
        build_problem3(track, *_args(su), v_bar=np.ones(2))
    with pytest.raises(TranscriptionError, match="bound_margin"):
        build_problem2(track, *_args(su), options=TranscriptionOptions(bound_margin=0.5))
    with pytest.raises(ValueError, match="not PSD"):
        psd_factor(np.diag([1.0, -1.0, 1.0]))


def test_sr_and_cvt_flags_exclusive():
    with pytest.raises(ValueError):
        TransmissionSpec("cvt", optimize_sr_ratio=True)


def test_infinite_budget_cap_is_finite_and_generous():
    su = cvt_setup()
    track = corner_track()
    cap = effective_budget(track, su.vehicle, su.motor, su.battery, TranscriptionOptions())
    assert math.isfinite(cap)
    assert cap > 100 * 2.5e6


# -- extraction ---------------------------------------------------------------


def _synthetic_x(vm, values):
    x = np.zeros(vm.num_vars)
    for name, val in values.items():
        x[vm.index[name]] = val / vm.scale[name]
    return x


def test_extract_lap_time_and_power():
    su = cvt_setup()
    track = flat_track(length=20.0)
    _, vm = build_problem2(track, *_args(su))
    x = _synthetic_x(vm, {"dtds": 0.02, "v": 50.0, "F_m": 1000.0, "F_gb": 0.0, "F_p": 0.0})
    traj = extract_trajectories(_solution(x), vm, track, su.vehicle)
    assert traj.lap_time == pytest.approx(0.4)
    np.testing.assert_allclose(traj.P_m, 5e4)
    np.testing.assert_array_equal(traj.F_brk, 0.0)
    np.testing.assert_allclose(traj.time, [0.0, 0.2, 0.4])


def test_extract_recovers_braking():
    su = cvt_setup()
    track = flat_track(length=20.0)
    _, vm = build_problem2(track, *_args(su))
    x = _synthetic_x(vm, {"dtds": 0.02, "v": 50.0, "F_gb": 1000.0, "F_p": -500.0})
    traj = extract_trajectories(_solution(x), vm, track, su.vehicle)
    np.testing.assert_allclose(traj.F_brk, 0.99 * 1000.0 + 500.0)


def test_extract_refuses_non_optimal():
    su = cvt_setup()
    track = flat_track(length=20.0)
    _, vm = build_problem2(track, *_args(su))
    with pytest.raises(TranscriptionError, match="max_iters"):
        extract_trajectories(_solution(np.zeros(vm.num_vars), Status.MAX_ITERS), vm, track, su.vehicle)


# -- solved-program invariants ------------------------------------------------


def test_solution_feasible(binding_lap):
    _, _, prog, _, sol, _ = binding_lap
    r = residuals(prog, sol.x)
    assert r["eq_violation"] <= 1e-6
    assert r["cone_violation"] <= 1e-6


def test_energy_accounting(binding_lap):
    _, track, _, _, _, traj = binding_lap
    chain = np.concatenate([[0.0], np.cumsum(track.step_length * traj.F_i[:-1])])
    np.testing.assert_allclose(traj.dE_b, chain, rtol=0, atol=1e-6 * 2.5e6)
    assert traj.dE_b[-1] == pytest.approx(2.5e6, rel=1e-6)


def test_periodicity_and_envelope(binding_lap):
    su, track, _, _, _, traj = binding_lap
    m = su.vehicle.m_tot
    E_max = 0.5 * m * track.v_max**2
    assert abs(traj.E_kin[0] - traj.E_kin[-1]) <= 1e-6 * E_max.max()
    assert np.all(traj.E_kin <= E_max + 1e-6 * E_max.max())


def test_binding_relaxations_tight(binding_lap):
    su, _, _, _, _, traj = binding_lap
    m = su.vehicle.m_tot
    assert np.max(np.abs(traj.dtds * traj.v - 1.0)) <= 1e-4
    assert np.max(np.abs(traj.E_kin - 0.5 * m * traj.v**2) / traj.E_kin) <= 1e-4
    em_loss = su.motor.alpha_m * traj.F_m**2 / traj.dtds
    scale = np.max(np.abs(traj.F_dc))
    assert np.max(np.abs(traj.F_dc - traj.F_m - em_loss)) <= 1e-4 * scale


def test_problem3_matches_problem2_with_speed_independent_map(binding_lap):
    su, track, _, _, _, traj2 = binding_lap
    motor = replace(su.motor, Q=np.diag([0.0, 0.0, su.motor.alpha_m]))
    prog3, vm3 = build_problem3(track, su.vehicle, su.transmission, motor, su.battery, v_bar=traj2.v)
    sol3 = solve(prog3)
    assert sol3.status is Status.OPTIMAL
    traj3 = extract_trajectories(sol3, vm3, track, su.vehicle)
    # the speed-independent optimum is feasible here, and freezing the loss speed can only help
    assert traj3.lap_time <= traj2.lap_time * (1 + 1e-7)
    assert traj3.lap_time == pytest.approx(traj2.lap_time, rel=1e-4)


def test_lossless_motor_has_no_dc_slack():
    su = cvt_setup(budget=2.5e6)
    track = corner_track()
    motor = replace(su.motor, Q=np.zeros((3, 3)))
    v_bar = np.clip(track.v_max, 20.0, None)
    prog, vm = build_problem3(track, su.vehicle, su.transmission, motor, su.battery, v_bar=v_bar)
    sol = solve(prog)
    assert sol.status is Status.OPTIMAL
    traj = extract_trajectories(sol, vm, track, su.vehicle)
    np.testing.assert_allclose(traj.F_dc, traj.F_m, atol=1e-4 * np.max(np.abs(traj.F_m)))
