import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pencilci.continuation import (
    EigenPoint,
    init_decomposition,
    predict,
    secant_guard,
    sign_correct,
    step_control,
    trace,
    trace_loop,
    write_trace_csv,
)
from pencilci.errors import (
    AmbiguousSign,
    DegenerateStart,
    GapTooSmall,
    LoopUnresolvable,
    StepUnderflow,
)
from pencilci.linalg import gen_eig_ordered
from pencilci.pencil import (
    FunctionPath,
    analytic_ci_pencil,
    box_perimeter,
    circle,
    segment,
    sgplus_generate,
    sgplus_pencil,
)

from conftest import rand_spd


def _sg_pencil(n=6, seed=2024):
    return sgplus_pencil(sgplus_generate(n, n - 1, 0.45, seed))


def test_init_decomposition_canonical_signs():
    pen = _sg_pencil()
    path = segment((0.3, 0.9), (1.1, 1.7))
    st1 = init_decomposition(pen, path, 0.0)
    st2 = init_decomposition(pen, path, 0.0)
    assert np.array_equal(st1.V, st2.V)
    # largest-magnitude entry of each column is positive
    idx = np.argmax(np.abs(st1.V), axis=0)
    assert np.all(st1.V[idx, np.arange(st1.V.shape[1])] > 0)
    x, y = path.point(0.0)
    A, B = pen.eval(x, y)
    assert np.allclose(st1.V.T @ B @ st1.V, np.eye(pen.n), atol=1e-12)


def test_init_decomposition_degenerate_start():
    pen = analytic_ci_pencil(0.0)
    with pytest.raises(DegenerateStart):
        init_decomposition(pen, segment((0.0, 0.0), (1.0, 0.0)), 0.0)


def test_predict_local_orders():
    # eigenvalue and eigenvector predictors are both locally second order
    pen = _sg_pencil()
    path = segment((0.3, 0.9), (1.1, 1.7))
    state = init_decomposition(pen, path, 0.2)
    lam_errs, vec_errs = [], []
    for k in range(4):
        h = 0.04 / 2**k
        x, y = path.point(0.2 + h)
        A, B = pen.eval(x, y)
        lam_pred, V_pred = predict(state, A, B, h)
        ref = gen_eig_ordered(A, B)
        V_ref, _, _ = sign_correct(ref.vectors, B, V_pred)
        lam_errs.append(np.linalg.norm(lam_pred - ref.values))
        vec_errs.append(np.linalg.norm(V_pred - V_ref))
    for errs in (lam_errs, vec_errs):
        for a, b in zip(errs, errs[1:]):
            assert 3.0 <= a / b <= 5.0


def test_predict_rejects_tiny_gap():
    state = EigenPoint(
        t=0.0, V=np.eye(2), lam=np.array([1.0, 1.0 - 1e-16]), h_next=0.1
    )
    with pytest.raises(GapTooSmall):
        predict(state, np.eye(2), np.eye(2), 0.1)


@given(st.integers(0, 2**32 - 1))
def test_sign_correct_recovers_flips(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 8))
    B = rand_spd(rng, n)
    ep = gen_eig_ordered(np.diag(np.arange(n, dtype=float)), B)
    signs = rng.choice([-1.0, 1.0], size=n)
    V_pred = ep.vectors * signs + 1e-6 * rng.standard_normal((n, n))
    V_corr, s, overlap = sign_correct(ep.vectors, B, V_pred)
    assert np.array_equal(s, signs)
    assert overlap > 0.9
    assert np.allclose(V_corr, ep.vectors * signs)


def test_sign_correct_warns_on_ambiguous_overlap():
    B = np.eye(2)
    V_raw = np.eye(2)
    V_pred = np.array([[0.0, 1.0], [1.0, 0.0]])  # orthogonal to V_raw columns
    with pytest.warns(AmbiguousSign):
        _, s, overlap = sign_correct(V_raw, B, V_pred)
    assert overlap == 0.0
    assert np.all(s == 1.0)  # zero overlap resolves to +1


def test_step_control_worked_example():
    # prediction off by 0.03 against budget 0.01 gives rho 3: reject, h/3
    lam_new = np.array([0.0])
    lam_pred = np.array([0.03])
    V = np.eye(1)
    dec = step_control(lam_new, lam_pred, V, V, np.eye(1), h=1.0)
    assert dec.rho == pytest.approx(3.0)
    assert not dec.accept
    assert dec.h_new == pytest.approx(1.0 / 3.0)
    assert dec.rho_lambda == pytest.approx(0.03)
    assert dec.rho_V == 0.0


def test_step_control_growth_cap():
    lam = np.array([1.0, -1.0])
    V = np.eye(2)
    dec = step_control(lam, lam, V, V, np.eye(2), h=0.1)
    assert dec.accept
    assert dec.h_new == pytest.approx(0.2)  # exact prediction doubles h at most


def test_step_control_underflow():
    with pytest.raises(StepUnderflow):
        step_control(
            np.array([0.0]), np.array([1.0]), np.eye(1), np.eye(1), np.eye(1),
            h=1e-10, h_min=1e-8,
        )


def test_secant_guard_worked_example():
    # gap 1, secant slopes -1 and +1, candidate h=1: crossing at 1/2, keep 0.45
    lam_prev = np.array([2.0, -1.0])
    lam_new = np.array([1.0, 0.0])
    assert secant_guard(lam_prev, lam_new, 1.0, h_taken=1.0) == pytest.approx(0.45)


def test_secant_guard_no_violation():
    lam_prev = np.array([1.0, 0.0])
    lam_new = np.array([2.0, -1.0])  # diverging eigenvalues
    assert secant_guard(lam_prev, lam_new, 5.0, h_taken=1.0) == 5.0


@given(st.integers(0, 2**32 - 1))
def test_secant_guard_never_grows(seed):
    rng = np.random.default_rng(seed)
    lam_new = np.sort(rng.standard_normal(5))[::-1]
    lam_prev = np.sort(lam_new + 0.5 * rng.standard_normal(5))[::-1]
    h = float(rng.uniform(0.01, 2.0))
    assert secant_guard(lam_prev, lam_new, h, h_taken=0.3) <= h


def test_trace_invariants_and_determinism():
    pen = analytic_ci_pencil(0.0)
    loop = circle(0.0, 0.0, 1.0)
    res = trace(pen, loop)
    assert res.D is None
    ts = [p.t for p in res.points]
    assert ts == sorted(ts) and ts[0] == 0.0 and ts[-1] == 1.0
    det_signs = set()
    for p in res.points:
        x, y = loop.point(p.t)
        A, B = pen.eval(x, y)
        assert np.linalg.norm(p.V.T @ B @ p.V - np.eye(2)) <= 1e-9
        assert np.linalg.norm(A @ p.V - B @ p.V @ np.diag(p.lam)) <= 1e-9
        det_signs.add(np.sign(np.linalg.det(p.V)))
    assert len(det_signs) == 1
    res2 = trace(pen, loop)
    assert all(
        np.array_equal(p.lam, q.lam) and np.array_equal(p.V, q.V)
        for p, q in zip(res.points, res2.points)
    )


def test_trace_validates_arguments():
    pen = analytic_ci_pencil(0.0)
    with pytest.raises(ValueError):
        trace(pen, circle(0.0, 0.0, 1.0), t0=1.0, t1=0.0)
    with pytest.raises(ValueError):
        trace(pen, circle(0.0, 0.0, 1.0), h0=-0.1)


def test_loop_signature_shapes_around_origin():
    # the sign flip is a property of the enclosed point, not the loop shape
    pen = analytic_ci_pencil(0.0)
    ellipse = FunctionPath(
        lambda t: (0.8 * math.cos(2 * math.pi * (t % 1.0)),
                   1.3 * math.sin(2 * math.pi * (t % 1.0))),
        closed=True,
    )
    for loop in (
        circle(0.0, 0.0, 1.0),
        box_perimeter(-0.6, -0.7, 1.3, 1.2),
        ellipse,
    ):
        res = trace_loop(pen, loop)
        assert res.D.tolist() == [-1, -1]
    res = trace_loop(pen, circle(2.0, 0.0, 0.5))
    assert res.D.tolist() == [1, 1]


def test_double_loop_gives_identity():
    pen = analytic_ci_pencil(0.0)
    base = circle(0.0, 0.0, 1.0)
    doubled = FunctionPath(lambda t: base.point(2.0 * t), closed=True)
    res = trace_loop(pen, doubled)
    assert res.D.tolist() == [1, 1]


def test_trace_loop_requires_closed_path():
    with pytest.raises(ValueError):
        trace_loop(analytic_ci_pencil(0.0), segment((1.0, 0.0), (2.0, 0.0)))


def test_loop_through_coalescence_unresolvable():
    pen = analytic_ci_pencil(0.0)
    # coalescence on the starting corner
    with pytest.raises(LoopUnresolvable):
        trace_loop(pen, box_perimeter(0.0, 0.0, 1.0, 1.0))
    # coalescence mid-edge
    with pytest.raises(LoopUnresolvable):
        trace_loop(pen, box_perimeter(-0.3, 0.0, 1.0, 1.0))


def test_veering_near_miss_keeps_signature():
    # edge passing 5e-11 from the coalescence: the signature must still tell
    # inside from outside, with a veering interval on that edge
    pen = analytic_ci_pencil(0.0)
    outside = trace_loop(pen, box_perimeter(5e-11, -0.5, 1.0, 1.0))
    assert outside.D.tolist() == [1, 1]
    assert len(outside.veering_events) >= 1
    inside = trace_loop(pen, box_perimeter(-1.0 + 5e-11, -0.5, 1.0, 1.0))
    assert inside.D.tolist() == [-1, -1]
    assert len(inside.veering_events) >= 1
    t_lo, t_hi, pair = outside.veering_events[0]
    assert pair == 1
    assert 0.75 <= t_lo <= t_hi <= 1.0


def test_sgplus_loop_signature_properties():
    pen = sgplus_pencil(sgplus_generate(8, 7, 0.45, 31))
    res = trace_loop(pen, circle(1.0, 2.0, 0.6))
    assert set(np.unique(res.D)).issubset({-1, 1})
    assert int(np.prod(res.D)) == 1
    assert np.max(np.abs(np.abs(res.signature_raw) - 1.0)) <= 1e-6


def test_write_trace_csv_roundtrip(tmp_path):
    pen = _sg_pencil(n=4, seed=9)
    res = trace_loop(pen, circle(0.5, 0.5, 0.3))
    out = tmp_path / "trace.csv"
    write_trace_csv(res, out)
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "t", "h", "lambda_1", "lambda_2", "lambda_3", "lambda_4",
        "rho_lambda", "rho_V", "veering",
    ]
    assert len(rows) - 1 == len(res.records)
    # 17 significant digits round-trip losslessly
    assert float(rows[1][2]) == res.points[1].lam[0]
    assert all(r[-1] in ("0", "1") for r in rows[1:])
