import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laptime.conic import (
    Affine,
    ConeKind,
    ProgramBuilder,
    ProgramError,
    SolverSettings,
    Status,
    dump,
    load,
    residuals,
    solve,
)
from laptime.conic.program import Cone

TOL = 1e-8


def _lower_bound_program():
    pb = ProgramBuilder(1)
    pb.set_objective([1.0])
    pb.add_nonneg([pb.var(0) - 3.0])
    return pb.finalize()


def _disc_program():
    pb = ProgramBuilder(2)
    u, v = pb.var(0), pb.var(1)
    pb.set_objective([-1.0, -1.0])
    pb.add_cone([2.0, u, v], ConeKind.soc(3))
    return pb.finalize()


def _norm_program():
    pb = ProgramBuilder(1)
    pb.set_objective([1.0])
    pb.add_cone([pb.var(0), 3.0, 4.0], ConeKind.soc(3))
    return pb.finalize()


def _infeasible_program():
    pb = ProgramBuilder(1)
    x = pb.var(0)
    pb.set_objective([1.0])
    pb.add_nonneg([x - 1.0, -x])
    return pb.finalize()


def _assert_optimal(sol):
    # residuals are the termination test; iterates are accurate to a few times the tolerance
    assert sol.status is Status.OPTIMAL
    assert sol.residuals["primal"] <= TOL
    assert sol.residuals["dual"] <= TOL


def test_lp_corner():
    sol = solve(_lower_bound_program())
    _assert_optimal(sol)
    assert sol.x[0] == pytest.approx(3.0, abs=1e-7)


def test_disc_symmetric_optimum():
    sol = solve(_disc_program())
    _assert_optimal(sol)
    np.testing.assert_allclose(sol.x, [math.sqrt(2), math.sqrt(2)], atol=1e-7)
    assert sol.objective_value == pytest.approx(-2 * math.sqrt(2), abs=1e-7)


def test_norm_evaluation():
    sol = solve(_norm_program())
    _assert_optimal(sol)
    assert sol.x[0] == pytest.approx(5.0, abs=1e-7)


def test_linear_system():
    A = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]])
    b = np.array([1.0, -2.0, 3.0])
    pb = ProgramBuilder(3)
    pb.add_equality([sum(A[i, j] * pb.var(j) for j in range(3)) - b[i] for i in range(3)])
    sol = solve(pb.finalize())
    _assert_optimal(sol)
    np.testing.assert_allclose(sol.x, np.linalg.solve(A, b), atol=1e-9)


def test_primal_infeasible_certificate():
    prog = _infeasible_program()
    sol = solve(prog)
    assert sol.status is Status.PRIMAL_INFEASIBLE
    y, z = sol.y, sol.z
    assert np.linalg.norm(prog.A.T @ y + prog.G.T @ z) <= 1e-8
    assert np.all(z >= -1e-10)
    assert prog.b @ y + prog.h @ z < 0


def test_infeasible_soc_certificate():
    # ||(x, 1)|| <= x - 1 is impossible
    pb = ProgramBuilder(1)
    x = pb.var(0)
    pb.add_cone([x - 1.0, x, 1.0], ConeKind.soc(3))
    prog = pb.finalize()
    sol = solve(prog)
    assert sol.status is Status.PRIMAL_INFEASIBLE
    z = sol.z
    assert np.linalg.norm(prog.G.T @ z) <= 1e-7
    assert z[0] >= np.linalg.norm(z[1:]) - 1e-8
    assert prog.h @ z < 0


def test_unbounded_ray():
    pb = ProgramBuilder(2)
    pb.set_objective([1.0, 0.0])
    pb.add_nonneg([-pb.var(0)])
    pb.add_equality([pb.var(1) - 1.0])
    prog = pb.finalize()
    sol = solve(prog)
    assert sol.status is Status.DUAL_INFEASIBLE
    assert prog.c @ sol.x == pytest.approx(-1.0)
    assert np.linalg.norm(prog.A @ sol.x) <= 1e-8
    assert np.all(-(prog.G @ sol.x) >= -1e-8)


def test_determinism():
    from laptime.fixtures import corner_track, cvt_setup
    from laptime.transcription import build_problem2

    su = cvt_setup(budget=2.5e6)
    prog, _ = build_problem2(corner_track(), su.vehicle, su.transmission, su.motor, su.battery)
    a, b = solve(prog), solve(prog)
    assert a.status is Status.OPTIMAL
    assert a.iterations == b.iterations
    assert a.x.tobytes() == b.x.tobytes()
    assert a.z.tobytes() == b.z.tobytes()
    assert [r["gap"] for r in a.info] == [r["gap"] for r in b.info]


def test_objective_scaling_keeps_argmin():
    from laptime.fixtures import corner_track, cvt_setup
    from laptime.transcription import build_problem2, extract_trajectories

    su = cvt_setup(budget=2.5e6)
    track = corner_track()
    prog, vm = build_problem2(track, su.vehicle, su.transmission, su.motor, su.battery)
    base = extract_trajectories(solve(prog), vm, track, su.vehicle)
    for k in (1e-3, 1e3):
        scaled = type(prog)(**{**prog.__dict__, "c": k * prog.c})
        sol = solve(scaled)
        assert sol.status is Status.OPTIMAL
        traj = extract_trajectories(sol, vm, track, su.vehicle)
        assert traj.lap_time == pytest.approx(base.lap_time, rel=10 * TOL)
        np.testing.assert_allclose(traj.v, base.v, rtol=1e-5)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=4, max_size=4),
    st.lists(st.floats(-5, 5), min_size=4, max_size=4),
    st.floats(0.1, 10.0),
)
def test_ball_linear_objective(c, a, r):
    c, a = np.array(c), np.array(a)
    if np.linalg.norm(c) < 1e-3:
        return
    pb = ProgramBuilder(4)
    pb.set_objective(c)
    pb.add_cone([r] + [pb.var(i) - a[i] for i in range(4)], ConeKind.soc(5))
    sol = solve(pb.finalize())
    _assert_optimal(sol)
    expected = a - r * c / np.linalg.norm(c)
    np.testing.assert_allclose(sol.x, expected, atol=1e-6 * (1 + r))
    # weak duality
    assert sol.objective_value >= sol.dual_objective - 1e-8 * (1 + abs(sol.objective_value))


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(tol_feas=0.0)
    with pytest.raises(ValueError):
        SolverSettings(max_iters=0)


def test_max_iters_status():
    sol = solve(_disc_program(), SolverSettings(max_iters=2))
    assert sol.status is Status.MAX_ITERS


# -- builder ------------------------------------------------------------------


def test_builder_soc_structure():
    pb = ProgramBuilder(3)
    pb.add_cone([pb.var(0), pb.var(1), pb.var(2)], ConeKind.soc(3))
    prog = pb.finalize()
    assert prog.count(Cone.SECOND_ORDER, 3) == 1
    assert prog.G.shape == (3, 3)


def test_builder_errors():
    pb = ProgramBuilder(2)
    with pytest.raises(ProgramError, match="out of range"):
        pb.var(2)
    with pytest.raises(ProgramError, match="out of range"):
        pb.add_equality([Affine.var(5)])
    with pytest.raises(ProgramError, match="dim >= 2"):
        ConeKind.soc(1)
    with pytest.raises(ProgramError, match="rows but cone dimension"):
        pb.add_cone([pb.var(0)], ConeKind.soc(2))
    with pytest.raises(ProgramError, match="shape"):
        pb.set_objective([1.0])
    pb.finalize()
    with pytest.raises(ProgramError, match="already finalized"):
        pb.finalize()


def test_affine_arithmetic():
    e = 2 * Affine.var(0) - Affine.var(1) / 4 + 3
    assert e.value(np.array([1.0, 8.0])) == pytest.approx(3.0)
    assert (e - e).value(np.array([5.0, -2.0])) == 0.0
    n = (Affine.var(0, 4.0) + Affine.var(1, -8.0)).normalized()
    assert n.terms == {0: 0.5, 1: -1.0}


# -- residuals ----------------------------------------------------------------


def test_residuals_feasible():
    assert residuals(_lower_bound_program(), np.array([3.0])) == {"eq_violation": 0.0, "cone_violation": 0.0}


def test_residuals_equality_violation():
    pb = ProgramBuilder(1)
    pb.add_equality([pb.var(0) - 1.0])
    assert residuals(pb.finalize(), np.array([1.5]))["eq_violation"] == 0.5


def test_residuals_soc_violation():
    pb = ProgramBuilder(3)
    pb.add_cone([pb.var(0), pb.var(1), pb.var(2)], ConeKind.soc(3))
    assert residuals(pb.finalize(), np.array([1.0, 2.0, 0.0]))["cone_violation"] == 1.0


def test_residuals_shape_check():
    with pytest.raises(ProgramError):
        residuals(_lower_bound_program(), np.zeros(2))


# -- text format --------------------------------------------------------------


@pytest.mark.parametrize("make", [_lower_bound_program, _disc_program, _norm_program, _infeasible_program])
def test_dump_load_round_trip(make):
    prog = make()
    buf = io.StringIO()
    dump(prog, buf)
    back = load(io.StringIO(buf.getvalue()))
    assert back.num_vars == prog.num_vars
    assert back.cones == prog.cones
    np.testing.assert_array_equal(back.c, prog.c)
    np.testing.assert_array_equal(back.A.toarray(), prog.A.toarray())
    np.testing.assert_array_equal(back.G.toarray(), prog.G.toarray())
    np.testing.assert_array_equal(back.h, prog.h)
    np.testing.assert_array_equal(back.b, prog.b)
    assert solve(back).status is solve(prog).status
