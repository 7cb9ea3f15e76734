"""Interpreter and analysis toolkit for a measurement-free quantum while language."""
from .gates import CX, DEC, H, INC, X, Z, GateSpec, check_unitary, custom, guard_flip, matrix_of
from .lang import (Apply, BoundedWhile, Ctrl, Decl, EqConst, GtZero, If, ParseError,
                   QubitGuard, QWhileError, Seq, Skip, ValidationError, While, desugar,
                   parse, pretty, seq, validate)
from .semantics import (EvalConfig, EvalReport, Mode, eval_linear_n, eval_unitary_n,
                        evaluate, fixpoint, loop_step, still_running_projector,
                        terminated_mass, trace)
from .state import (Anc, BasisLabel, Ket, ProjectorSpec, RegBit, RegisterLayout,
                    add_scaled, apply_local, inner, norm, project)

__version__ = "0.1.0"
