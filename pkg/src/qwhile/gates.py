"""Gate library, control sets and the guard-copy primitive."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .state import Anc, BasisLabel, Ket, RegisterLayout, UNITARY_TOL

__all__ = [
    "GateSpec",
    "ControlSpec",
    "GuardFlip",
    "X", "H", "Z", "CX", "INC", "DEC",
    "custom",
    "matrix_of",
    "check_unitary",
    "guard_flip",
    "shift_register",
]

_S = 1 / math.sqrt(2)
_FIXED = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "h": np.array([[_S, _S], [_S, -_S]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "cx": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
}
REGISTER_GATES = ("inc", "dec")


@dataclass(frozen=True)
class GateSpec:
    """A gate by name; ``matrix`` is only set for ``kind == "u"``.

    ``arity`` is the number of qubits the gate acts on, or ``None`` for the
    register-wide ``inc``/``dec`` whose size follows the operand's width.
    """

    kind: str
    matrix: tuple[tuple[complex, ...], ...] | None = field(default=None)

    def __post_init__(self):
        if self.kind == "u":
            if self.matrix is None:
                raise ValueError("custom gate needs a matrix")
            m = np.asarray(self.matrix, dtype=complex)
            if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2 \
                    or m.shape[0] & (m.shape[0] - 1):
                raise ValueError("custom matrix must be square with power-of-two size")
        elif self.kind not in _FIXED and self.kind not in REGISTER_GATES:
            raise ValueError(f"unknown gate {self.kind!r}")
        elif self.matrix is not None:
            raise ValueError(f"gate {self.kind!r} takes no matrix")

    @property
    def arity(self) -> int | None:
        if self.kind in REGISTER_GATES:
            return None
        if self.kind == "u":
            return len(self.matrix).bit_length() - 1
        return 2 if self.kind == "cx" else 1

    def __repr__(self) -> str:
        return "Custom" if self.kind == "u" else self.kind.upper()


X = GateSpec("x")
H = GateSpec("h")
Z = GateSpec("z")
CX = GateSpec("cx")
INC = GateSpec("inc")
DEC = GateSpec("dec")


def custom(m) -> GateSpec:
    m = np.asarray(m, dtype=complex)
    return GateSpec("u", tuple(tuple(complex(v) for v in row) for row in m))


def check_unitary(m) -> float:
    """Max entry modulus of ``m^dagger m - I``."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return float(np.abs(m.conj().T @ m - np.eye(m.shape[0])).max())


def matrix_of(g: GateSpec, width: int | None = None) -> np.ndarray:
    """Unitary matrix of ``g``; ``width`` is required for ``inc``/``dec``."""
    if g.kind in _FIXED:
        return _FIXED[g.kind].copy()
    if g.kind in REGISTER_GATES:
        if width is None or width < 1:
            raise ValueError(f"{g.kind} needs a register width")
        d = 1 << width
        step = 1 if g.kind == "inc" else -1
        m = np.zeros((d, d), dtype=complex)
        for v in range(d):
            m[(v + step) % d, v] = 1
        return m
    m = np.asarray(g.matrix, dtype=complex)
    dev = check_unitary(m)
    if dev > UNITARY_TOL:
        raise ValueError(f"custom matrix is not unitary (deviation {dev:.3g})")
    return m


@dataclass(frozen=True)
class ControlSpec:
    positive: frozenset = frozenset()
    negative: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "positive", frozenset(self.positive))
        object.__setattr__(self, "negative", frozenset(self.negative))
        if self.positive & self.negative:
            raise ValueError("a qubit cannot be both a positive and a negative control")

    def holds(self, label: BasisLabel) -> bool:
        return all(label.get(c) for c in self.positive) and \
            not any(label.get(c) for c in self.negative)


@dataclass(frozen=True)
class GuardFlip:
    """``|t_n>|v> -> |t_n XOR [guard holds on v]>|v>``.

    For a qubit guard this is CNOT(q -> t_n).  The operation permutes basis
    states, so it is exact and its own inverse.
    """

    guard: object
    ancilla: int

    def flips(self, label: BasisLabel, layout: RegisterLayout) -> bool:
        return bool(self.guard.holds(label.regs[layout.index(self.guard.name)]))

    def apply(self, k: Ket, layout: RegisterLayout, pos_ctrls: Sequence = (),
              neg_ctrls: Sequence = ()) -> Ket:
        ridx = layout.index(self.guard.name)
        bit = 1 << (self.ancilla - 1)
        if Anc(self.ancilla) in pos_ctrls or Anc(self.ancilla) in neg_ctrls:
            raise ValueError("guard ancilla cannot also be a control")
        ctl = ControlSpec(pos_ctrls, neg_ctrls)
        out: dict[BasisLabel, complex] = {}
        for lab, amp in k.raw().items():
            if ctl.holds(lab) and self.guard.holds(lab.regs[ridx]):
                lab = BasisLabel(lab.ancillas ^ bit, lab.regs)
            out[lab] = out.get(lab, 0j) + amp
        return Ket._trusted(out, k.prune_eps)


def guard_flip(guard, ancilla: int) -> GuardFlip:
    if ancilla < 1:
        raise ValueError("guard ancilla index must be >= 1")
    return GuardFlip(guard, ancilla)


def shift_register(k: Ket, reg: int, width: int, step: int, pos_ctrls: Sequence = (),
                   neg_ctrls: Sequence = ()) -> Ket:
    """Controlled ``|v> -> |v + step mod 2^width>`` on register ``reg``.

    Same action as ``matrix_of(INC/DEC, width)`` without building the
    ``2^width``-square matrix.
    """
    mod = 1 << width
    ctl = ControlSpec(pos_ctrls, neg_ctrls)
    out: dict[BasisLabel, complex] = {}
    for lab, amp in k.raw().items():
        if ctl.holds(lab):
            regs = list(lab.regs)
            regs[reg] = (regs[reg] + step) % mod
            lab = BasisLabel(lab.ancillas, tuple(regs))
        out[lab] = out.get(lab, 0j) + amp
    return Ket._trusted(out, k.prune_eps)
