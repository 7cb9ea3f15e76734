"""Sparse kets over the program space.

A basis vector of the program space is the tensor product of an ancilla tape
``t_1 t_2 ...`` (infinitely many qubits, all but finitely many equal to 0) and
the classical values of the declared registers.  The tape is stored as an
integer bit mask where bit ``i - 1`` holds ``t_i``, so the canonical
"no trailing zeros" form is automatic.
"""
from __future__ import annotations

import json
import math
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Anc",
    "RegBit",
    "BasisLabel",
    "RegisterLayout",
    "Ket",
    "ProjectorSpec",
    "norm",
    "inner",
    "add_scaled",
    "project",
    "apply_local",
    "dump_state",
    "load_state",
    "UNITARY_TOL",
]

UNITARY_TOL = 1e-9


class Anc(NamedTuple):
    """Ancilla qubit ``t_index`` (1-based)."""

    index: int


class RegBit(NamedTuple):
    """Bit ``bit`` (0 = least significant) of the register at position ``reg``."""

    reg: int
    bit: int


class BasisLabel(NamedTuple):
    ancillas: int
    regs: tuple[int, ...]

    def ancilla_string(self) -> str:
        """Canonical tape prefix, e.g. ``"11"`` for ``|110...>``."""
        m = self.ancillas
        return "".join("1" if (m >> i) & 1 else "0" for i in range(m.bit_length()))

    def get(self, coord: Anc | RegBit) -> int:
        if isinstance(coord, Anc):
            return (self.ancillas >> (coord.index - 1)) & 1
        return (self.regs[coord.reg] >> coord.bit) & 1

    def sort_key(self):
        return (self.ancilla_string(), self.regs)

    @classmethod
    def from_string(cls, ancillas: str, regs: Sequence[int]) -> "BasisLabel":
        mask = 0
        for i, ch in enumerate(ancillas):
            if ch == "1":
                mask |= 1 << i
            elif ch != "0":
                raise ValueError(f"bad ancilla bit {ch!r}")
        return cls(mask, tuple(int(v) for v in regs))


class RegisterLayout:
    """Name/width/initial value of each declared register, in declaration order.

    Accepts anything with ``name``, ``width`` and ``init`` attributes.
    """

    def __init__(self, decls: Iterable):
        self.decls = tuple(decls)
        self.names = tuple(d.name for d in self.decls)
        self.widths = tuple(d.width for d in self.decls)
        self._index = {n: i for i, n in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.decls)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"undeclared variable {name}") from None

    def width(self, name: str) -> int:
        return self.widths[self.index(name)]

    def bits(self, name: str) -> list[RegBit]:
        """Coordinates of a register, most significant bit first."""
        r = self.index(name)
        return [RegBit(r, b) for b in reversed(range(self.widths[r]))]

    def initial_label(self) -> BasisLabel:
        return BasisLabel(0, tuple(d.init for d in self.decls))

    def initial_ket(self, prune_eps: float = 0.0) -> "Ket":
        return Ket({self.initial_label(): 1.0}, prune_eps=prune_eps)


class Ket:
    """Immutable sparse vector ``{BasisLabel: complex}``.

    Amplitudes with modulus ``<= prune_eps`` are never stored; with the default
    ``prune_eps = 0`` only exact zeros are dropped.
    """

    __slots__ = ("_terms", "prune_eps")

    def __init__(self, terms: Mapping | Iterable = (), prune_eps: float = 0.0):
        if prune_eps < 0:
            raise ValueError("prune_eps must be nonnegative")
        items = terms.items() if isinstance(terms, Mapping) else terms
        clean: dict[BasisLabel, complex] = {}
        for label, amp in items:
            if not isinstance(label, BasisLabel):
                label = BasisLabel(*label)
            amp = complex(amp)
            if abs(amp) > prune_eps:
                clean[label] = amp
        self._terms = clean
        self.prune_eps = prune_eps

    @classmethod
    def _trusted(cls, terms: dict, prune_eps: float) -> "Ket":
        k = cls.__new__(cls)
        k._terms = {lab: a for lab, a in terms.items() if abs(a) > prune_eps}
        k.prune_eps = prune_eps
        return k

    @classmethod
    def zero(cls, prune_eps: float = 0.0) -> "Ket":
        return cls._trusted({}, prune_eps)

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __contains__(self, label) -> bool:
        return label in self._terms

    def __getitem__(self, label) -> complex:
        if not isinstance(label, BasisLabel):
            label = BasisLabel(*label)
        return self._terms.get(label, 0j)

    def amplitude(self, ancillas: str, regs: Sequence[int]) -> complex:
        return self[BasisLabel.from_string(ancillas, regs)]

    def labels(self) -> list[BasisLabel]:
        return sorted(self._terms, key=BasisLabel.sort_key)

    def items(self) -> list[tuple[BasisLabel, complex]]:
        """Terms in lexicographic label order."""
        return [(lab, self._terms[lab]) for lab in self.labels()]

    def raw(self) -> Mapping[BasisLabel, complex]:
        return self._terms

    def __eq__(self, other) -> bool:
        if not isinstance(other, Ket):
            return NotImplemented
        return self._terms == other._terms

    __hash__ = None

    def __add__(self, other: "Ket") -> "Ket":
        return add_scaled(1.0, self, other)

    def __sub__(self, other: "Ket") -> "Ket":
        return add_scaled(-1.0, other, self)

    def __mul__(self, alpha) -> "Ket":
        eps = self.prune_eps
        return Ket._trusted({lab: alpha * a for lab, a in self._terms.items()}, eps)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        if not self._terms:
            return "Ket(0)"
        parts = [f"{a:.6g}|{lab.ancilla_string() or '0'};{','.join(map(str, lab.regs))}>"
                 for lab, a in self.items()]
        return "Ket(" + " + ".join(parts) + ")"


class ProjectorSpec(NamedTuple):
    """Product of single-ancilla projectors ``P_{j_{t_i}}``."""

    constraints: tuple[tuple[int, int], ...] = ()

    @classmethod
    def of(cls, constraints: Iterable[tuple[int, int]]) -> "ProjectorSpec":
        cons = tuple((int(i), int(j)) for i, j in constraints)
        idx = [i for i, _ in cons]
        if len(set(idx)) != len(idx):
            raise ValueError("projector constraints must use distinct ancillas")
        for i, j in cons:
            if i < 1:
                raise ValueError("ancilla indices start at 1")
            if j not in (0, 1):
                raise ValueError("projector bit must be 0 or 1")
        return cls(cons)

    def masks(self) -> tuple[int, int]:
        """(care mask, required value mask) over the tape bits."""
        care = want = 0
        for i, j in self.constraints:
            care |= 1 << (i - 1)
            if j:
                want |= 1 << (i - 1)
        return care, want


def norm(k: Ket) -> float:
    return math.sqrt(math.fsum(abs(a) ** 2 for a in k.raw().values()))


def inner(a: Ket, b: Ket) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    ta, tb = a.raw(), b.raw()
    if len(ta) > len(tb):
        common = [lab for lab in tb if lab in ta]
    else:
        common = [lab for lab in ta if lab in tb]
    common.sort(key=BasisLabel.sort_key)
    re = math.fsum((ta[lab].conjugate() * tb[lab]).real for lab in common)
    im = math.fsum((ta[lab].conjugate() * tb[lab]).imag for lab in common)
    return complex(re, im)


def add_scaled(alpha: complex, a: Ket, b: Ket) -> Ket:
    """Return ``alpha * a + b``."""
    out = dict(b.raw())
    for lab, amp in a.raw().items():
        out[lab] = out.get(lab, 0j) + alpha * amp
    return Ket._trusted(out, max(a.prune_eps, b.prune_eps))


def project(k: Ket, p: ProjectorSpec) -> Ket:
    care, want = p.masks()
    return Ket._trusted({lab: a for lab, a in k.raw().items() if lab.ancillas & care == want},
                        k.prune_eps)


def _controls_hold(label: BasisLabel, pos: Sequence, neg: Sequence) -> bool:
    for c in pos:
        if not label.get(c):
            return False
    for c in neg:
        if label.get(c):
            return False
    return True


def _gather(label: BasisLabel, targets: Sequence) -> int:
    j = 0
    for c in targets:
        j = (j << 1) | label.get(c)
    return j


def _scatter(label: BasisLabel, targets: Sequence, value: int) -> BasisLabel:
    anc = label.ancillas
    regs = list(label.regs)
    r = len(targets)
    for pos, c in enumerate(targets):
        bit = (value >> (r - 1 - pos)) & 1
        if isinstance(c, Anc):
            m = 1 << (c.index - 1)
            anc = anc | m if bit else anc & ~m
        else:
            m = 1 << c.bit
            regs[c.reg] = regs[c.reg] | m if bit else regs[c.reg] & ~m
    return BasisLabel(anc, tuple(regs))


def _check_coords(targets, pos_ctrls, neg_ctrls) -> None:
    allc = list(targets) + list(pos_ctrls) + list(neg_ctrls)
    for c in allc:
        if isinstance(c, Anc):
            if c.index < 1:
                raise ValueError("ancilla indices start at 1")
        elif not isinstance(c, RegBit):
            raise TypeError(f"not a qubit coordinate: {c!r}")
    if len(set(allc)) != len(allc):
        raise ValueError("target and control coordinates overlap")


def apply_local(k: Ket, m, targets: Sequence, pos_ctrls: Sequence = (),
                neg_ctrls: Sequence = ()) -> Ket:
    """Apply the ``2^r x 2^r`` unitary ``m`` to ``targets`` under controls.

    ``targets[0]`` is the most significant bit of the matrix index.  Terms
    whose positive controls are not all 1 (or negative controls not all 0)
    pass through unchanged.
    """
    m = np.asarray(m, dtype=complex)
    r = len(targets)
    if m.shape != (1 << r, 1 << r):
        raise ValueError(f"matrix of shape {m.shape} does not act on {r} qubit(s)")
    dev = np.abs(m.conj().T @ m - np.eye(1 << r)).max() if r else 0.0
    if dev > UNITARY_TOL:
        raise ValueError(f"matrix is not unitary (deviation {dev:.3g})")
    _check_coords(targets, pos_ctrls, neg_ctrls)

    columns = []
    for j in range(1 << r):
        col = m[:, j]
        columns.append([(i, complex(col[i])) for i in np.flatnonzero(col)])

    out: dict[BasisLabel, complex] = {}
    for lab, amp in k.raw().items():
        if not _controls_hold(lab, pos_ctrls, neg_ctrls):
            out[lab] = out.get(lab, 0j) + amp
            continue
        for i, mij in columns[_gather(lab, targets)]:
            new = _scatter(lab, targets, int(i))
            out[new] = out.get(new, 0j) + mij * amp
    return Ket._trusted(out, k.prune_eps)


def dump_state(k: Ket, names: Sequence[str]) -> list[dict]:
    """JSON-ready list of terms, sorted by (ancillas, regs)."""
    rows = []
    for lab, a in k.items():
        rows.append({
            "ancillas": lab.ancilla_string(),
            "regs": dict(zip(names, lab.regs)),
            "re": float(a.real),
            "im": float(a.imag),
        })
    return rows


def load_state(rows: Sequence[Mapping], names: Sequence[str], prune_eps: float = 0.0) -> Ket:
    terms = {}
    for row in rows:
        lab = BasisLabel.from_string(row["ancillas"], [row["regs"][n] for n in names])
        terms[lab] = terms.get(lab, 0j) + complex(row["re"], row["im"])
    return Ket(terms, prune_eps=prune_eps)


def dumps_state(k: Ket, names: Sequence[str]) -> str:
    return json.dumps(dump_state(k, names))
