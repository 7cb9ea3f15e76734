"""Unitary and linear evaluation of quantum while programs on sparse kets.

Loops are evaluated by unrolling, one guard copy and one controlled body per
iteration.  Iteration ``i`` of a loop copies its guard into a fresh ancilla
(under control of the ancillas of iterations ``1..i-1``) and then runs the
body under control of all ``i`` loop ancillas.  Branches whose copy came out
0 are never touched again, which is what makes the terminated part of the
state monotone.

In unitary mode a loop of bound ``n`` yields ``W_n psi``.  In linear mode the
component still inside the loop (all loop ancillas equal to 1) is discarded
afterwards, giving ``L_n psi``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .gates import guard_flip, matrix_of, shift_register
from .lang import (Apply, BoundedWhile, GuardCopy, QWhileError, Seq, Skip, While,
                   desugar, is_core, statements)
from .state import (Anc, Ket, ProjectorSpec, RegisterLayout, RegBit, add_scaled,
                    apply_local, dump_state, norm, project)

__all__ = [
    "Mode", "EvalConfig", "EvalReport", "LoopStats",
    "UnboundedLoopError", "AncillaBudgetError",
    "evaluate", "loop_step", "still_running_projector",
    "eval_unitary_n", "eval_linear_n", "fixpoint", "terminated_mass", "trace",
    "report_to_json",
]

DEFAULT_EPS = 1e-9
DEFAULT_WINDOW = 8
DEFAULT_MAX_ITER = 10_000


class Mode(str, enum.Enum):
    UNITARY = "unitary"
    LINEAR = "linear"


class UnboundedLoopError(QWhileError):
    """An unbounded while was met where only a finite unrolling is meaningful."""


class AncillaBudgetError(QWhileError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    """How loops are evaluated.

    Either ``bound`` (every unbounded ``while`` is unrolled ``bound`` times) or
    the convergence triple ``eps``/``window``/``max_iter`` (linear mode only)
    may be set.  With neither, only bounded loops can be evaluated.
    """

    mode: Mode = Mode.UNITARY
    bound: int | None = None
    eps: float | None = None
    window: int | None = None
    max_iter: int | None = None
    prune_eps: float = 0.0
    max_ancillas: int = 100_000

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        conv = (self.eps, self.window, self.max_iter)
        if self.bound is not None and any(v is not None for v in conv):
            raise ValueError("set either bound or eps/window/max_iter, not both")
        if self.bound is not None and self.bound < 0:
            raise ValueError("bound must be nonnegative")
        if any(v is not None for v in conv):
            if any(v is None for v in conv):
                raise ValueError("eps, window and max_iter must be set together")
            if not self.eps > 0:
                raise ValueError("eps must be positive")
            if self.window < 1 or self.max_iter < 1:
                raise ValueError("window and max_iter must be >= 1")
        if self.prune_eps < 0:
            raise ValueError("prune_eps must be nonnegative")

    @classmethod
    def bounded(cls, n: int, mode: Mode | str = Mode.UNITARY, **kw) -> "EvalConfig":
        return cls(mode=mode, bound=n, **kw)

    @classmethod
    def converging(cls, eps: float = DEFAULT_EPS, window: int = DEFAULT_WINDOW,
                   max_iter: int = DEFAULT_MAX_ITER, **kw) -> "EvalConfig":
        kw.setdefault("mode", Mode.LINEAR)
        return cls(eps=eps, window=window, max_iter=max_iter, **kw)

    @property
    def converges(self) -> bool:
        return self.eps is not None


@dataclass
class LoopStats:
    """What happened in one execution of one top-level loop."""

    iterations_run: int = 0
    increments: list[float] = field(default_factory=list)
    running_norm: float = 0.0
    converged: bool = False
    notes: list[str] = field(default_factory=list)


@dataclass
class EvalReport:
    final: Ket
    iterations_run: int
    increments: list[float]
    terminated_mass: float
    converged: bool
    ancillas_used: int
    mode: Mode = Mode.UNITARY
    running_norm: float = 0.0
    notes: list[str] = field(default_factory=list)
    loops: list[LoopStats] = field(default_factory=list)


Hook = Callable[[int, int, Ket, Ket], None]


class _Evaluator:
    def __init__(self, decls, cfg: EvalConfig, hook: Hook | None = None):
        self.layout = RegisterLayout(decls)
        self.cfg = cfg
        self.hook = hook
        self.next_anc = 1
        self.slots: dict[str, Anc] = {}
        self.loops: list[LoopStats] = []
        self.depth = 0

    # -- plumbing

    def allocate(self) -> Anc:
        if self.next_anc > self.cfg.max_ancillas:
            raise AncillaBudgetError(f"ancilla budget of {self.cfg.max_ancillas} exceeded")
        a = Anc(self.next_anc)
        self.next_anc += 1
        return a

    @property
    def ancillas_used(self) -> int:
        return self.next_anc - 1

    def coord(self, name: str):
        if name.startswith("%"):
            try:
                return self.slots[name]
            except KeyError:
                raise QWhileError(f"ancilla slot {name} used before its guard copy") from None
        return RegBit(self.layout.index(name), 0)

    # -- statements

    def run(self, p, k: Ket, ctrls: tuple[Anc, ...] = ()) -> Ket:
        if isinstance(p, Seq):
            return self.run(p.right, self.run(p.left, k, ctrls), ctrls)
        if isinstance(p, Skip):
            return k
        if isinstance(p, Apply):
            return self.apply(p, k, ctrls)
        if isinstance(p, GuardCopy):
            t = self.allocate()
            self.slots[p.slot] = t
            pos = ctrls + tuple(self.coord(c) for c in p.ctrls)
            neg = tuple(self.coord(c) for c in p.nctrls)
            return guard_flip(p.guard, t.index).apply(k, self.layout, pos, neg)
        if isinstance(p, BoundedWhile):
            return self.loop(p.guard, p.body, k, p.k, ctrls)
        if isinstance(p, While):
            if self.cfg.mode is Mode.UNITARY and self.cfg.bound is None:
                raise UnboundedLoopError(
                    "unitary semantics of an unbounded while needs an iteration bound")
            if self.cfg.bound is None and not self.cfg.converges:
                raise UnboundedLoopError(
                    "unbounded while needs an iteration bound or a convergence tolerance")
            return self.loop(p.guard, p.body, k, self.cfg.bound, ctrls)
        raise TypeError(f"not a core statement: {type(p).__name__} (desugar first)")

    def apply(self, p: Apply, k: Ket, ctrls: tuple[Anc, ...]) -> Ket:
        pos = ctrls + tuple(self.coord(c) for c in p.ctrls)
        neg = tuple(self.coord(c) for c in p.nctrls)
        if p.gate.kind in ("inc", "dec"):
            (op,) = p.operands
            r = self.layout.index(op)
            step = 1 if p.gate.kind == "inc" else -1
            return shift_register(k, r, self.layout.widths[r], step, pos, neg)
        targets = [c for op in p.operands for c in self.layout.bits(op)]
        return apply_local(k, matrix_of(p.gate), targets, pos, neg)

    # -- loops

    def step(self, guard, body, k: Ket, anc: Sequence[Anc], ctrls: tuple[Anc, ...]) -> Ket:
        t = anc[-1]
        k = guard_flip(guard, t.index).apply(k, self.layout, ctrls + tuple(anc[:-1]))
        return self.run(body, k, ctrls + tuple(anc))

    def loop(self, guard, body, k: Ket, n: int | None, ctrls: tuple[Anc, ...]) -> Ket:
        """Unroll ``n`` iterations, or until the stall rule fires when ``n`` is None."""
        linear = self.cfg.mode is Mode.LINEAR
        top = self.depth == 0
        stats = LoopStats()
        if top:
            self.loops.append(stats)
            loop_id = len(self.loops) - 1
        ctl_cons = [(c.index, 1) for c in ctrls]
        anc: list[Anc] = []
        running = k if not ctrls else project(k, ProjectorSpec.of(ctl_cons))
        if top and self.hook:
            self.hook(loop_id, 0, k, Ket.zero(k.prune_eps))

        eps, window = self.cfg.eps, self.cfg.window
        limit = n if n is not None else self.cfg.max_iter
        stall = 0
        exhausted = False
        i = 0
        self.depth += 1
        try:
            while i < limit:
                i += 1
                if not running:
                    # nothing left inside the loop: every further iteration is the identity
                    exhausted = True
                    if n is None:
                        i -= 1
                        break
                    stats.increments.append(0.0)
                    if top and self.hook:
                        self.hook(loop_id, i, k, k)
                    continue
                anc.append(self.allocate())
                k = self.step(guard, body, k, anc, ctrls)
                ones = ctl_cons + [(a.index, 1) for a in anc[:-1]]
                done_now = project(k, ProjectorSpec.of(ones + [(anc[-1].index, 0)]))
                running = project(k, ProjectorSpec.of(ones + [(anc[-1].index, 1)]))
                inc = norm(done_now)
                stats.increments.append(inc)
                stats.iterations_run = i
                if top and self.hook:
                    self.hook(loop_id, i, k, add_scaled(-1.0, running, k))
                if n is None:
                    stall = stall + 1 if inc < eps else 0
                    if not running:
                        exhausted = True
                        break
                    if stall >= window:
                        break
        finally:
            self.depth -= 1

        stats.running_norm = norm(running)
        if n is not None:
            stats.converged = exhausted or not running
        else:
            stats.converged = exhausted or stall >= window
            if not stats.converged:
                stats.notes.append(f"no convergence within max_iter={limit}")
            elif not exhausted and stats.running_norm >= eps:
                stats.notes.append(
                    f"stopped after {window} stalled increment(s) at n={i} while weight "
                    f"{stats.running_norm ** 2:.6g} is still inside the loop; "
                    "termination may only be delayed (use a larger window)")
        if linear:
            k = add_scaled(-1.0, running, k)
        return k


def _prepare(decls, program, k: Ket | None, prune_eps: float):
    if not is_core(program):
        program = desugar(program)
    if k is None:
        k = RegisterLayout(decls).initial_ket(prune_eps)
    return program, k


def _finish(ev: _Evaluator, k: Ket, cfg: EvalConfig) -> EvalReport:
    loops = ev.loops
    last = loops[-1] if loops else None
    running = last.running_norm if last else 0.0
    if cfg.mode is Mode.LINEAR:
        mass = norm(k) ** 2
    else:
        mass = max(0.0, norm(k) ** 2 - running ** 2)
    return EvalReport(
        final=k,
        iterations_run=sum(s.iterations_run for s in loops),
        increments=list(last.increments) if last else [],
        terminated_mass=mass,
        converged=all(s.converged for s in loops),
        ancillas_used=ev.ancillas_used,
        mode=cfg.mode,
        running_norm=running,
        notes=[note for s in loops for note in s.notes],
        loops=loops,
    )


def evaluate(decls, program, k: Ket | None = None, cfg: EvalConfig | None = None) -> EvalReport:
    """Run ``program`` on ``k`` (default: the declared initial basis state)."""
    cfg = cfg or EvalConfig()
    program, k = _prepare(decls, program, k, cfg.prune_eps)
    ev = _Evaluator(decls, cfg)
    k = ev.run(program, k)
    return _finish(ev, k, cfg)


def trace(decls, program, k: Ket | None = None, cfg: EvalConfig | None = None):
    """State after every iteration of every top-level loop.

    Returns ``(report, [(label, ket), ...])`` with labels ``W_i`` (unitary) or
    ``L_i`` (linear), prefixed ``loop<j>:`` when the program has several
    top-level loops.  A loop-free program yields a single ``final`` entry.
    """
    cfg = cfg or EvalConfig()
    program, k = _prepare(decls, program, k, cfg.prune_eps)
    frames: list[tuple[int, int, Ket]] = []
    letter = "W" if cfg.mode is Mode.UNITARY else "L"

    def hook(loop_id, i, w, l):
        frames.append((loop_id, i, w if letter == "W" else l))

    ev = _Evaluator(decls, cfg, hook)
    k = ev.run(program, k)
    report = _finish(ev, k, cfg)
    if not frames:
        return report, [("final", k)]
    multi = len(ev.loops) > 1
    return report, [((f"loop{j}:" if multi else "") + f"{letter}_{i}", s) for j, i, s in frames]


def report_to_json(report: EvalReport, names: Sequence[str]) -> dict:
    return {
        "schema_version": "1",
        "mode": report.mode.value,
        "iterations": report.iterations_run,
        "converged": report.converged,
        "terminated_mass": report.terminated_mass,
        "running_norm": report.running_norm,
        "ancillas_used": report.ancillas_used,
        "increments": list(report.increments),
        "notes": list(report.notes),
        "state": dump_state(report.final, names),
    }


# -- single-loop helpers ---------------------------------------------------------

def _allocates(p) -> bool:
    return any(isinstance(s, (GuardCopy, While, BoundedWhile)) for s in statements(p))


def loop_step(decls, guard, body, k: Ket, i: int) -> Ket:
    """Iteration ``i`` of ``while guard { body }`` with loop ancillas ``t_1..t_i``.

    Copies the guard into ``t_i`` under control of ``t_1..t_{i-1}``, then runs
    the body under control of ``t_1..t_i``.  The body must not allocate
    ancillas of its own.
    """
    if i < 1:
        raise ValueError("iteration index starts at 1")
    if not is_core(body):
        body = desugar(body)
    if _allocates(body):
        raise ValueError("loop_step needs a body without ifs or nested loops")
    ev = _Evaluator(decls, EvalConfig())
    ev.next_anc = i + 1
    return ev.step(guard, body, k, [Anc(j) for j in range(1, i + 1)], ())


def still_running_projector(n: int) -> ProjectorSpec:
    """Projector onto ``t_1 = ... = t_n = 1``."""
    if n < 1:
        raise ValueError("still-running projector needs n >= 1")
    return ProjectorSpec.of((i, 1) for i in range(1, n + 1))


def _single_loop(decls, guard, body, k: Ket, cfg: EvalConfig) -> EvalReport:
    return evaluate(decls, While(guard, body), k, cfg)


def eval_unitary_n(decls, guard, body, k: Ket, n: int) -> Ket:
    """``W_n psi`` for ``while guard { body }``."""
    cfg = EvalConfig.bounded(n, Mode.UNITARY, prune_eps=k.prune_eps)
    return _single_loop(decls, guard, body, k, cfg).final


def eval_linear_n(decls, guard, body, k: Ket, n: int) -> Ket:
    """``L_n psi``: executions that left the loop within ``n`` iterations."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    cfg = EvalConfig.bounded(n, Mode.LINEAR, prune_eps=k.prune_eps)
    return _single_loop(decls, guard, body, k, cfg).final


def terminated_mass(decls, guard, body, k: Ket, n: int) -> float:
    return norm(eval_linear_n(decls, guard, body, k, n)) ** 2


def fixpoint(decls, guard, body, k: Ket, eps: float = DEFAULT_EPS,
             window: int = DEFAULT_WINDOW, max_iter: int = DEFAULT_MAX_ITER) -> EvalReport:
    """Approximate the limit of ``L_n psi``.

    Stops at the first ``n`` whose last ``window`` increments
    ``||L_i psi - L_{i-1} psi||`` are all below ``eps``, or as soon as nothing
    is left inside the loop.  Hitting ``max_iter`` first gives
    ``converged=False``.
    """
    cfg = EvalConfig.converging(eps, window, max_iter, prune_eps=k.prune_eps)
    return _single_loop(decls, guard, body, k, cfg)

