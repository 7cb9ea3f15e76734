import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import load_fixture, max_diff
from qwhile.gates import H, X, Z, custom
from qwhile.lang import (Apply, BoundedWhile, Decl, If, QubitGuard, Skip, While,
                         parse, seq)
from qwhile.semantics import (AncillaBudgetError, EvalConfig, Mode, UnboundedLoopError,
                              eval_linear_n, eval_unitary_n, evaluate, fixpoint, loop_step,
                              report_to_json, still_running_projector, terminated_mass, trace)
from qwhile.state import BasisLabel, Ket, ProjectorSpec, inner, norm, project

R2 = 1 / math.sqrt(2)
Q = [Decl.qubit("q")]
GQ = QubitGuard("q")
PLUS = Ket({BasisLabel(0, (0,)): R2, BasisLabel(0, (1,)): R2})
ONE = Ket({BasisLabel(0, (1,)): 1.0})


def ket(*terms):
    return Ket({BasisLabel.from_string(t, regs): a for t, regs, a in terms})


def test_skip_is_identity():
    r = evaluate(Q, Skip(), PLUS)
    assert r.final == PLUS and r.iterations_run == 0


def test_x_loop_bounded_two():
    r = evaluate(Q, BoundedWhile(2, GQ, Apply(X, ("q",))), PLUS)
    assert max_diff(r.final, ket(("", [0], R2), ("1", [0], R2))) < 1e-12


def test_skip_loop_bounded_three():
    r = evaluate(Q, BoundedWhile(3, GQ, Skip()), ONE)
    assert r.final == ket(("111", [1], 1.0))


def test_unbounded_while_in_unitary_mode_needs_a_bound():
    with pytest.raises(UnboundedLoopError):
        evaluate(Q, While(GQ, Skip()), ONE)


def test_loop_step_h_loop_first_iteration():
    out = loop_step(Q, GQ, Apply(H, ("q",)), PLUS, 1)
    assert max_diff(out, ket(("", [0], R2), ("1", [0], 0.5), ("1", [1], -0.5))) < 1e-12


def test_loop_step_companion_first_two_iterations():
    decls, p = load_fixture("coin_counter.qw")
    body = p.body
    k0 = Ket({BasisLabel(0, (0, 2)): 1.0})
    k1 = loop_step(decls, p.guard, body, k0, 1)
    assert max_diff(k1, ket(("1", [0, 1], R2), ("1", [1, 3], R2))) < 1e-12
    k2 = loop_step(decls, p.guard, body, k1, 2)
    want = ket(("11", [0, 0], .5), ("11", [1, 2], .5), ("11", [0, 2], .5), ("11", [1, 4], -.5))
    assert max_diff(k2, want) < 1e-12


def test_loop_step_rejects_allocating_bodies():
    with pytest.raises(ValueError):
        loop_step(Q, GQ, If(GQ, Skip()), PLUS, 1)
    with pytest.raises(ValueError):
        loop_step(Q, GQ, Skip(), PLUS, 0)


def test_still_running_projector():
    assert still_running_projector(2) == ProjectorSpec(((1, 1), (2, 1)))
    with pytest.raises(ValueError):
        still_running_projector(0)


def test_still_running_part_of_h_loop_w2():
    # the displayed W_2 line has the opposite overall sign on this component
    # (see the decisions ledger); linearity of H fixes it as below
    w2 = eval_unitary_n(Q, GQ, Apply(H, ("q",)), PLUS, 2)
    run = project(w2, still_running_projector(2))
    r8 = 1 / math.sqrt(8)
    assert max_diff(run, ket(("11", [0], -r8), ("11", [1], r8))) < 1e-12


def test_still_running_part_of_terminated_x_loop_is_empty():
    w2 = eval_unitary_n(Q, GQ, Apply(X, ("q",)), PLUS, 2)
    assert not project(w2, still_running_projector(2))


def test_linear_examples():
    l1 = eval_linear_n(Q, GQ, Apply(X, ("q",)), PLUS, 1)
    assert max_diff(l1, ket(("", [0], R2))) < 1e-12
    for n in range(6):
        assert not eval_linear_n(Q, GQ, Skip(), ONE, n)
    l3 = eval_linear_n(Q, GQ, Apply(H, ("q",)), PLUS, 3)
    assert [abs(a) for _, a in l3.items()] == pytest.approx([R2, 0.5, 1 / math.sqrt(8)])
    assert not eval_linear_n(Q, GQ, Apply(H, ("q",)), PLUS, 0)
    with pytest.raises(ValueError):
        eval_linear_n(Q, GQ, Skip(), ONE, -1)


def test_h_loop_signs_alternate():
    # H(r|1>) = r/sqrt2 |0> - r/sqrt2 |1>, so every exit after the first flips sign
    w = eval_unitary_n(Q, GQ, Apply(H, ("q",)), PLUS, 6)
    for i in range(1, 6):
        want = R2 ** (i + 1) * (-1) ** (i - 1)
        assert w[BasisLabel((1 << i) - 1, (0,))] == pytest.approx(want, abs=1e-15)


def test_terminated_mass_examples():
    assert terminated_mass(Q, GQ, Apply(H, ("q",)), PLUS, 3) == pytest.approx(0.875, abs=1e-12)
    decls, p = load_fixture("coin_counter.qw")
    k0 = Ket({BasisLabel(0, (0, 2)): 1.0})
    assert terminated_mass(decls, p.guard, p.body, k0, 3) == pytest.approx(0.25, abs=1e-12)
    assert terminated_mass(decls, p.guard, p.body, k0, 5) == pytest.approx(0.5, abs=1e-12)


def test_fixpoint_x_loop():
    r = fixpoint(Q, GQ, Apply(X, ("q",)), PLUS, eps=1e-9, window=1)
    assert r.converged and r.iterations_run == 2
    assert r.terminated_mass == pytest.approx(1.0, abs=1e-12)
    assert max_diff(r.final, ket(("", [0], R2), ("1", [0], R2))) < 1e-12


def test_fixpoint_skip_loop_is_zero():
    r = fixpoint(Q, GQ, Skip(), ONE)
    assert r.converged and not r.final and r.terminated_mass == 0.0


def test_fixpoint_h_loop_reaches_the_mass_bound():
    r = fixpoint(Q, GQ, Apply(H, ("q",)), PLUS, eps=1e-6)
    assert r.converged and r.terminated_mass >= 1 - 1e-6


def test_fixpoint_reports_max_iter_honestly():
    r = fixpoint(Q, GQ, Apply(H, ("q",)), PLUS, eps=1e-9, window=8, max_iter=5)
    assert not r.converged and r.iterations_run == 5
    assert any("max_iter" in n for n in r.notes)


def test_counter_loop_jump_happens_at_the_sixth_guard_check():
    decls, p = load_fixture("counter.qw")
    masses = [evaluate(decls, BoundedWhile(n, p.guard, p.body),
                       cfg=EvalConfig(mode="linear")).terminated_mass for n in range(8)]
    assert masses == [0, 0, 0, 0, 0, 0, 1, 1]


def test_counter_loop_window_one_is_flagged():
    decls, p = load_fixture("counter.qw")
    r = evaluate(decls, p, cfg=EvalConfig.converging(1e-9, 1))
    assert r.iterations_run == 1 and r.notes and "window" in r.notes[0]


def test_ancilla_frugality():
    decls, p = load_fixture("counter.qw")
    r = evaluate(decls, BoundedWhile(20, p.guard, p.body))
    assert r.ancillas_used == 6 and r.iterations_run == 6
    r = evaluate(decls, BoundedWhile(3, p.guard, p.body))
    assert r.ancillas_used == 3


def test_ancilla_budget():
    with pytest.raises(AncillaBudgetError):
        evaluate(Q, BoundedWhile(10, GQ, Skip()), ONE, EvalConfig(max_ancillas=4))


def test_eval_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(bound=2, eps=1e-3, window=1, max_iter=3)
    with pytest.raises(ValueError):
        EvalConfig(eps=1e-3)
    with pytest.raises(ValueError):
        EvalConfig.converging(eps=0.0)
    with pytest.raises(ValueError):
        EvalConfig.converging(window=0)
    with pytest.raises(ValueError):
        EvalConfig.bounded(-1)
    with pytest.raises(ValueError):
        EvalConfig(mode="quantum")


def test_nested_loops_share_the_global_tape():
    decls = [Decl.qubit("a"), Decl.qubit("b")]
    _, p = parse("qubit a; qubit b; x a; while<2> a { x b; while<2> b { x b; } x a; }")
    r = evaluate(decls, p)
    assert norm(r.final) == pytest.approx(1.0)
    # outer iteration 1, inner two iterations (second exits), outer iteration 2 exits
    assert r.ancillas_used == 4


def test_if_inside_loop_allocates_per_iteration():
    _, p = parse("qubit q; qubit c; h c; while<3> q { if c { x q; } }")
    decls = [Decl.qubit("q"), Decl.qubit("c")]
    r = evaluate(decls, p, Ket({BasisLabel(0, (1, 0)): 1.0}))
    assert norm(r.final) == pytest.approx(1.0)
    assert r.ancillas_used == 6


def test_trace_labels():
    decls, p = load_fixture("h_loop.qw")
    _, frames = trace(decls, p, cfg=EvalConfig.bounded(3))
    assert [lab for lab, _ in frames] == ["W_0", "W_1", "W_2", "W_3"]
    _, frames = trace(decls, p, cfg=EvalConfig.bounded(2, "linear"))
    assert [lab for lab, _ in frames] == ["L_0", "L_1", "L_2"]
    assert not frames[0][1]
    _, frames = trace(Q, Skip(), PLUS)
    assert frames == [("final", PLUS)]
    _, p2 = parse("qubit q; while<1> q { x q; } while<1> q { x q; }")
    _, frames = trace(Q, p2, ONE)
    assert [lab for lab, _ in frames] == ["loop0:W_0", "loop0:W_1", "loop1:W_0", "loop1:W_1"]


def test_report_json_shape():
    decls, p = load_fixture("h_loop.qw")
    r = evaluate(decls, p, cfg=EvalConfig.bounded(2, "linear"))
    j = report_to_json(r, ["q"])
    assert j["schema_version"] == "1" and j["mode"] == "linear"
    assert j["terminated_mass"] == pytest.approx(0.75)
    assert [row["ancillas"] for row in j["state"]] == ["", "1"]


def test_prune_drops_small_amplitudes():
    decls, p = load_fixture("h_loop.qw")
    r = evaluate(decls, p, cfg=EvalConfig.bounded(20, prune_eps=1e-3))
    assert all(abs(a) > 1e-3 for a in r.final.raw().values())


def test_evaluation_is_deterministic():
    decls, p = load_fixture("coin_counter.qw")
    a = report_to_json(evaluate(decls, p), ["c", "q"])
    b = report_to_json(evaluate(decls, p), ["c", "q"])
    assert a == b


# -- invariants over random bodies and inputs --------------------------------------

def _unitary2(a, b, c):
    return np.array([[np.cos(a), -np.exp(1j * c) * np.sin(a)],
                     [np.exp(1j * b) * np.sin(a), np.exp(1j * (b + c)) * np.cos(a)]])


bodies = st.one_of(
    st.sampled_from([Skip(), Apply(X, ("q",)), Apply(H, ("q",)), Apply(Z, ("q",)),
                     seq(Apply(H, ("q",)), Apply(X, ("q",)))]),
    st.tuples(*[st.floats(-3, 3, allow_nan=False)] * 3).map(
        lambda t: Apply(custom(_unitary2(*t)), ("q",))),
)
inputs = st.tuples(st.floats(-1, 1, allow_nan=False), st.floats(-1, 1, allow_nan=False),
                   st.floats(-1, 1, allow_nan=False), st.floats(-1, 1, allow_nan=False)).filter(
    lambda v: sum(x * x for x in v) > 1e-3).map(
    lambda v: (lambda s: Ket({BasisLabel(0, (0,)): complex(v[0], v[1]) / s,
                              BasisLabel(0, (1,)): complex(v[2], v[3]) / s}))(
        math.sqrt(sum(x * x for x in v))))


@given(bodies, inputs)
@settings(max_examples=60, deadline=None)
def test_linear_semantics_invariants(body, psi):
    ls = [eval_linear_n(Q, GQ, body, psi, n) for n in range(7)]
    ws = [eval_unitary_n(Q, GQ, body, psi, n) for n in range(7)]
    diffs = [ls[n] - ls[n - 1] for n in range(1, 7)]
    for n in range(7):
        assert abs(norm(ws[n]) - 1.0) <= 1e-9
        assert norm(ls[n]) <= 1 + 1e-12
        if n:
            run = project(ws[n], still_running_projector(n))
            assert max_diff(ls[n], ws[n] - run) <= 1e-12
            if not run and n < 6:
                assert max_diff(ls[n + 1], ws[n]) <= 1e-12
        if n < 6:
            assert norm(ls[n]) ** 2 <= norm(ls[n + 1]) ** 2 + 1e-12
        tele = Ket()
        for d in diffs[:n]:
            tele = tele + d
        assert max_diff(ls[n], tele) <= 1e-12
    for i in range(len(diffs)):
        for j in range(i + 1, len(diffs)):
            assert abs(inner(diffs[i], diffs[j])) <= 1e-10


@given(bodies, inputs, st.integers(1, 8))
@settings(max_examples=40, deadline=None)
def test_report_increments_match_linear_differences(body, psi, n):
    r = evaluate(Q, BoundedWhile(n, GQ, body), psi, EvalConfig(mode=Mode.LINEAR))
    ls = [eval_linear_n(Q, GQ, body, psi, i) for i in range(n + 1)]
    want = [norm(ls[i] - ls[i - 1]) for i in range(1, n + 1)]
    assert r.increments == pytest.approx(want, abs=1e-12)
    assert r.terminated_mass == pytest.approx(norm(r.final) ** 2, abs=1e-15)
    assert r.ancillas_used <= r.iterations_run
