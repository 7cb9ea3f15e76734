"""Dense-matrix oracle on a truncated program space.

Everything here is built by explicit matrix algebra (Kronecker-style
extension, projector sums, basis permutations) and never calls the sparse
evaluator, so the two can be compared against each other.

Basis ordering: qubit positions are ``t_1 .. t_a`` followed by every register
most-significant bit first; position 0 is the most significant bit of the
basis index.  This matches the lexicographic label order of :mod:`qwhile.state`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import unitary_group

from . import semantics
from .gates import custom, matrix_of
from .lang import (Apply, BoundedWhile, GuardCopy, QubitGuard, Seq, Skip, While, desugar,
                   is_core, seq)
from .gates import H, X, Z
from .state import Anc, BasisLabel, Ket, RegBit, RegisterLayout

__all__ = [
    "SpaceSpec", "DenseOperator", "MAX_DIM",
    "vector_of", "ket_of", "extend", "controlled", "projector", "guard_copy", "shift",
    "dense_of_program", "dense_w", "dense_l", "still_running_matrix",
    "operator_norm", "basis_increments", "check_suite", "suite_passed", "report_json",
    "TOLERANCES",
]

MAX_DIM = 4096


@dataclass(frozen=True)
class SpaceSpec:
    """``a`` ancillas plus the declared registers, ``2^(a + sum widths)`` dims."""

    ancilla_count: int
    decls: tuple

    def __post_init__(self):
        object.__setattr__(self, "decls", tuple(self.decls))
        if self.ancilla_count < 0:
            raise ValueError("ancilla_count must be nonnegative")
        if self.dim > MAX_DIM:
            raise ValueError(f"space of dimension {self.dim} exceeds the oracle cap {MAX_DIM}")

    @property
    def layout(self) -> RegisterLayout:
        return RegisterLayout(self.decls)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(d.width for d in self.decls)

    @property
    def n_qubits(self) -> int:
        return self.ancilla_count + sum(self.widths)

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def position(self, c) -> int:
        if isinstance(c, Anc):
            if not 1 <= c.index <= self.ancilla_count:
                raise ValueError(f"ancilla t_{c.index} is outside the truncated space")
            return c.index - 1
        off = self.ancilla_count + sum(self.widths[:c.reg])
        return off + self.widths[c.reg] - 1 - c.bit

    def label(self, index: int) -> BasisLabel:
        nq = self.n_qubits
        bits = [(index >> (nq - 1 - p)) & 1 for p in range(nq)]
        anc = sum(b << i for i, b in enumerate(bits[:self.ancilla_count]))
        regs, p = [], self.ancilla_count
        for w in self.widths:
            v = 0
            for b in bits[p:p + w]:
                v = (v << 1) | b
            regs.append(v)
            p += w
        return BasisLabel(anc, tuple(regs))

    def index(self, label: BasisLabel) -> int:
        if label.ancillas >> self.ancilla_count:
            raise ValueError("label uses ancillas outside the truncated space")
        idx = 0
        for i in range(self.ancilla_count):
            idx = (idx << 1) | ((label.ancillas >> i) & 1)
        for v, w in zip(label.regs, self.widths):
            idx = (idx << w) | v
        return idx


@dataclass
class DenseOperator:
    entries: np.ndarray
    space: SpaceSpec = field(repr=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("operator has non-finite entries")

    def apply(self, k: Ket) -> Ket:
        return ket_of(self.entries @ vector_of(k, self.space), self.space)


def vector_of(k: Ket, space: SpaceSpec) -> np.ndarray:
    v = np.zeros(space.dim, dtype=complex)
    for lab, a in k.raw().items():
        v[space.index(lab)] += a
    return v


def ket_of(v: np.ndarray, space: SpaceSpec, prune_eps: float = 0.0) -> Ket:
    return Ket({space.label(int(i)): v[i] for i in np.flatnonzero(v)}, prune_eps=prune_eps)


# -- building blocks -------------------------------------------------------------

def extend(m, positions: Sequence[int], n_qubits: int) -> np.ndarray:
    """``I (x) m (x) I`` with ``m`` acting on qubit ``positions`` (first = MSB of m)."""
    m = np.asarray(m, dtype=complex)
    r = len(positions)
    d = 1 << n_qubits
    eye = np.eye(d, dtype=complex).reshape([2] * n_qubits + [d])
    mt = m.reshape([2] * (2 * r))
    out = np.tensordot(mt, eye, axes=(list(range(r, 2 * r)), list(positions)))
    out = np.moveaxis(out, list(range(r)), list(positions))
    return out.reshape(d, d)


def _control_mask(space: SpaceSpec, pos: Sequence[int], neg: Sequence[int]) -> np.ndarray:
    nq = space.n_qubits
    idx = np.arange(space.dim)
    ok = np.ones(space.dim, dtype=bool)
    for p in pos:
        ok &= ((idx >> (nq - 1 - p)) & 1) == 1
    for p in neg:
        ok &= ((idx >> (nq - 1 - p)) & 1) == 0
    return ok


def controlled(m, targets: Sequence, space: SpaceSpec, pos: Sequence = (), neg: Sequence = ()) -> np.ndarray:
    """``(I - P) + P . U_ext`` where ``P`` projects on the control condition."""
    tpos = [space.position(c) for c in targets]
    u = extend(m, tpos, space.n_qubits)
    p = np.diag(_control_mask(space, [space.position(c) for c in pos],
                              [space.position(c) for c in neg]).astype(complex))
    return np.eye(space.dim) - p + p @ u


def projector(space: SpaceSpec, constraints: Sequence[tuple[int, int]]) -> np.ndarray:
    """Diagonal matrix of ``prod P_{j_{t_i}}``."""
    pos = [i - 1 for i, j in constraints if j == 1]
    neg = [i - 1 for i, j in constraints if j == 0]
    for i, _ in constraints:
        if not 1 <= i <= space.ancilla_count:
            raise ValueError(f"ancilla t_{i} is outside the truncated space")
    return np.diag(_control_mask(space, pos, neg).astype(complex))


def guard_copy(guard, n: int, space: SpaceSpec, pos: Sequence = (), neg: Sequence = ()) -> np.ndarray:
    """Dense guard copy into ``t_n``: CNOT for a qubit guard, a basis permutation otherwise."""
    layout = space.layout
    if isinstance(guard, QubitGuard):
        q = RegBit(layout.index(guard.name), 0)
        return controlled(matrix_of(X), [Anc(n)], space, [q, *pos], neg)
    r = layout.index(guard.name)
    nq = space.n_qubits
    tp = space.position(Anc(n))
    ok = _control_mask(space, [space.position(c) for c in pos], [space.position(c) for c in neg])
    perm = np.zeros((space.dim, space.dim), dtype=complex)
    for j in range(space.dim):
        i = j
        if ok[j] and guard.holds(space.label(j).regs[r]):
            i = j ^ (1 << (nq - 1 - tp))
        perm[i, j] = 1
    return perm


def shift(m: np.ndarray, space: SpaceSpec) -> np.ndarray:
    """Relabel ``t_i -> t_{i+1}``; ``m`` must act trivially on ``t_a``.

    Implemented as conjugation by the cyclic ancilla permutation, so the freed
    ``t_1`` (formerly ``t_a``) is acted on as the identity.
    """
    a, nq = space.ancilla_count, space.n_qubits
    if a == 0:
        raise ValueError("cannot shift without ancillas")
    idx = np.arange(space.dim)
    rest_bits = nq - a
    anc = idx >> rest_bits
    rest = idx & ((1 << rest_bits) - 1)
    # t_1 is the MSB of anc: shifting t_i -> t_{i+1} is a right rotation of the a-bit field
    rot = (anc >> 1) | ((anc & 1) << (a - 1))
    perm = (rot << rest_bits) | rest
    out = np.empty_like(m)
    out[np.ix_(perm, perm)] = m
    return out


# -- programs --------------------------------------------------------------------

def dense_of_program(decls, program, space: SpaceSpec, first_ancilla: int = 1) -> DenseOperator:
    """Matrix of a loop-free program: ``[s1; s2] = [s2] . [s1]``."""
    if not is_core(program):
        program = desugar(program)
    layout = RegisterLayout(decls)
    slots: dict[str, Anc] = {}
    counter = [first_ancilla]

    def coord(name):
        return slots[name] if name.startswith("%") else RegBit(layout.index(name), 0)

    def go(p) -> np.ndarray:
        if isinstance(p, Seq):
            first = go(p.left)
            return go(p.right) @ first
        if isinstance(p, Skip):
            return np.eye(space.dim, dtype=complex)
        if isinstance(p, Apply):
            targets = [c for op in p.operands for c in layout.bits(op)]
            width = sum(layout.width(op) for op in p.operands)
            m = matrix_of(p.gate, width if p.gate.kind in ("inc", "dec") else None)
            return controlled(m, targets, space, [coord(c) for c in p.ctrls],
                              [coord(c) for c in p.nctrls])
        if isinstance(p, GuardCopy):
            t = Anc(counter[0])
            counter[0] += 1
            slots[p.slot] = t
            return guard_copy(p.guard, t.index, space, [coord(c) for c in p.ctrls],
                              [coord(c) for c in p.nctrls])
        if isinstance(p, (While, BoundedWhile)):
            raise ValueError("dense_of_program handles loop-free programs only")
        raise TypeError(f"not a statement: {p!r}")

    return DenseOperator(go(program), space)


def _body_matrix(decls, body, space: SpaceSpec) -> np.ndarray:
    if isinstance(body, np.ndarray):
        return body
    if isinstance(body, DenseOperator):
        return body.entries
    if not is_core(body):
        body = desugar(body)
    if any(isinstance(s, GuardCopy) for s in _walk(body)):
        raise ValueError("oracle loop bodies must not allocate ancillas")
    return dense_of_program(decls, body, space).entries


def _walk(p):
    if isinstance(p, Seq):
        yield from _walk(p.left)
        yield from _walk(p.right)
    else:
        yield p


def _check_loop(guard, n: int, space: SpaceSpec):
    if not isinstance(guard, QubitGuard):
        raise ValueError("the oracle only supports single-qubit guards")
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n > space.ancilla_count:
        raise ValueError(f"n={n} exceeds the {space.ancilla_count} ancillas of the space")


def _g_index(n: int, i: int) -> int:
    return n - i


def _recursive(n: int, g1, s, p0, p1, base, space) -> np.ndarray:
    if n == 0:
        return base
    inner = _recursive(n - 1, g1, s, p0, p1, base, space)
    return (p0 + p1 @ shift(inner, space) @ s) @ g1


def _closed_terms(n, guard, s, space) -> list[np.ndarray]:
    """The ``h = 1..n`` summands shared by the closed forms of ``W_n`` and ``L_n``."""
    eye = np.eye(space.dim, dtype=complex)
    g = {k: guard_copy(guard, k, space) for k in range(1, n + 1)}
    terms = []
    for h in range(1, n + 1):
        proj = projector(space, [(i, 1) for i in range(1, h)] + [(h, 0)])
        prod = eye
        for i in range(n - h, n - 1):
            prod = prod @ (g[_g_index(n, i)] @ s)
        terms.append(proj @ prod @ g[1])
    return terms


def _closed_w(n, guard, s, space) -> np.ndarray:
    eye = np.eye(space.dim, dtype=complex)
    if n == 0:
        return eye
    out = sum(_closed_terms(n, guard, s, space))
    tail = eye
    for i in range(0, n):
        tail = tail @ (s @ guard_copy(guard, _g_index(n, i), space))
    return out + still_running_matrix(n, space) @ tail


def _closed_l(n, guard, s, space) -> np.ndarray:
    if n == 0:
        return np.zeros((space.dim, space.dim), dtype=complex)
    return sum(_closed_terms(n, guard, s, space))


def still_running_matrix(n: int, space: SpaceSpec) -> np.ndarray:
    return projector(space, [(i, 1) for i in range(1, n + 1)])


def dense_w(n: int, guard, body, space: SpaceSpec, variant: str = "recursive", decls=None) -> DenseOperator:
    """``w_n`` (``variant="recursive"``) or ``W_n`` (``variant="closed"``)."""
    _check_loop(guard, n, space)
    decls = space.decls if decls is None else decls
    s = _body_matrix(decls, body, space)
    if variant == "recursive":
        eye = np.eye(space.dim, dtype=complex)
        m = _recursive(n, guard_copy(guard, 1, space), s, projector(space, [(1, 0)]),
                       projector(space, [(1, 1)]), eye, space) if n else eye
    elif variant == "closed":
        m = _closed_w(n, guard, s, space)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return DenseOperator(m, space)


def dense_l(n: int, guard, body, space: SpaceSpec, variant: str = "recursive", decls=None) -> DenseOperator:
    """``l_n`` (``variant="recursive"``) or ``L_n`` (``variant="closed"``)."""
    _check_loop(guard, n, space)
    decls = space.decls if decls is None else decls
    s = _body_matrix(decls, body, space)
    if variant == "recursive":
        zero = np.zeros((space.dim, space.dim), dtype=complex)
        m = _recursive(n, guard_copy(guard, 1, space), s, projector(space, [(1, 0)]),
                       projector(space, [(1, 1)]), zero, space) if n else zero
    elif variant == "closed":
        m = _closed_l(n, guard, s, space)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return DenseOperator(m, space)


def operator_norm(m: np.ndarray, rtol: float = 1e-12, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest singular value by power iteration on ``m^dagger m``."""
    m = np.asarray(m, dtype=complex)
    a = m.conj().T @ m
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[0]) + 1j * rng.standard_normal(a.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = a @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(nw - lam) <= rtol * nw:
            lam = nw
            break
        lam = nw
    return math.sqrt(lam)


def basis_increments(guard, body, space: SpaceSpec, n_max: int, decls=None) -> np.ndarray:
    """``||(L_n - L_{n-1}) e_i||`` for ``n = 1..n_max`` (rows) and every basis vector (columns)."""
    ls = [dense_l(n, guard, body, space, decls=decls).entries for n in range(n_max + 1)]
    return np.array([np.linalg.norm(ls[n] - ls[n - 1], axis=0) for n in range(1, n_max + 1)])


# -- property suite ----------------------------------------------------------------

TOLERANCES = {
    "closed_vs_recursive_w": 1e-9,
    "closed_vs_recursive_l": 1e-9,
    "unitarity_w": 1e-9,
    "boundedness_l": 1e-9,
    "substate": 1e-10,
    "controlled_identity": 1e-12,
    "orthogonal_increments": 1e-10,
    "monotone_norms": 1e-12,
    "contraction": 1e-12,
    "telescoping": 1e-12,
    "cauchy_partial_sums": 1e-12,
    "operational_vs_dense_w": 1e-10,
    "operational_vs_dense_l": 1e-10,
}


def _random_body(rng: np.random.Generator, decls) -> object:
    qubits = [d.name for d in decls if d.width == 1]
    choice = int(rng.integers(7))
    q = qubits[int(rng.integers(len(qubits)))]
    if choice == 0:
        return Skip()
    if choice == 1:
        return Apply(X, (q,))
    if choice == 2:
        return Apply(H, (q,))
    if choice == 3:
        return Apply(Z, (q,))
    if choice == 4:
        return seq(Apply(H, (q,)), Apply(X, (q,)))
    if choice == 5 and len(qubits) > 1:
        a, b = rng.choice(len(qubits), size=2, replace=False)
        u = unitary_group.rvs(4, random_state=rng)
        return Apply(custom(u), (qubits[a], qubits[b]))
    return Apply(custom(unitary_group.rvs(2, random_state=rng)), (q,))


def _random_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _deviation(reference: np.ndarray, build: Callable, n, guard, body) -> float:
    # a construction that cannot even be built counts as an unbounded deviation
    try:
        return float(np.abs(reference - build(n, guard, body).entries).max())
    except ValueError:
        return math.inf


def check_suite(decls, guard, body, space: SpaceSpec, n_max: int, trials: int, seed: int,
                builders: dict[str, Callable] | None = None) -> dict:
    """Worst deviation of every property over ``trials`` seeded random trials.

    ``body=None`` draws a random body per trial.  ``builders`` may replace the
    ``"w_closed"``/``"l_closed"`` constructions (used for mutation testing).
    Returns ``{property: {"max_deviation", "tolerance", "pass"}}``.
    """
    if n_max > space.ancilla_count:
        raise ValueError("n_max exceeds the ancillas of the space")
    builders = builders or {}
    w_closed = builders.get("w_closed", lambda n, g, b: dense_w(n, g, b, space, "closed", decls))
    l_closed = builders.get("l_closed", lambda n, g, b: dense_l(n, g, b, space, "closed", decls))
    rng = np.random.default_rng(seed)
    worst = {name: 0.0 for name in TOLERANCES}

    def record(name, value):
        worst[name] = max(worst[name], float(value))

    eye = np.eye(space.dim)
    for trial in range(trials):
        b = body if body is not None else _random_body(rng, decls)
        ws = [dense_w(n, guard, b, space, "recursive", decls).entries for n in range(n_max + 1)]
        ls = [dense_l(n, guard, b, space, "recursive", decls).entries for n in range(n_max + 1)]
        for n in range(n_max + 1):
            record("closed_vs_recursive_w", _deviation(ws[n], w_closed, n, guard, b))
            record("closed_vs_recursive_l", _deviation(ls[n], l_closed, n, guard, b))
            record("unitarity_w", np.abs(ws[n].conj().T @ ws[n] - eye).max())
            record("boundedness_l", max(0.0, operator_norm(ls[n], seed=seed + trial) - 1.0))
            if n:
                sub = (eye - still_running_matrix(n, space)) @ ws[n]
                record("substate", np.abs(ls[n] - sub).max())

        u = unitary_group.rvs(4, random_state=rng)
        p0, p1 = np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex)
        lhs = np.kron(p0, np.eye(4)) + np.kron(p1, u)
        rhs = extend(p0, [0], 3) + extend(p1, [0], 3) @ extend(u, [1, 2], 3)
        record("controlled_identity", np.abs(lhs - rhs).max())

        psi = _random_state(rng, space.dim)
        outs = [m @ psi for m in ls]
        diffs = [outs[n] - outs[n - 1] for n in range(1, n_max + 1)]
        for a in range(len(diffs)):
            for c in range(a + 1, len(diffs)):
                record("orthogonal_increments", abs(np.vdot(diffs[a], diffs[c])))
        norms = [np.linalg.norm(o) for o in outs]
        for n in range(n_max):
            record("monotone_norms", max(0.0, norms[n] - norms[n + 1]))
        for n in range(n_max + 1):
            record("contraction", max(0.0, norms[n] - 1.0))
            tele = sum(diffs[:n], np.zeros(space.dim, dtype=complex))
            record("telescoping", np.abs(outs[n] - tele).max())
            record("cauchy_partial_sums",
                   abs(norms[n] ** 2 - math.fsum(np.linalg.norm(d) ** 2 for d in diffs[:n])))

        ket = ket_of(psi, space)
        for n in range(n_max + 1):
            w_op = semantics.eval_unitary_n(decls, guard, b, ket, n)
            l_op = semantics.eval_linear_n(decls, guard, b, ket, n)
            record("operational_vs_dense_w", np.abs(vector_of(w_op, space) - ws[n] @ psi).max())
            record("operational_vs_dense_l", np.abs(vector_of(l_op, space) - outs[n]).max())

    return {name: {"max_deviation": worst[name], "tolerance": TOLERANCES[name],
                   "pass": worst[name] <= TOLERANCES[name]}
            for name in TOLERANCES}


def suite_passed(report: dict) -> bool:
    return all(v["pass"] for v in report.values())


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
