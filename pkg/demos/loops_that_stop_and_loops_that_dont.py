# Three one-qubit loops, each started on an equal superposition (or |1>),
# evaluated under both semantics.

import math

from qwhile import EvalConfig, evaluate, norm, parse

programs = {
    "x loop": "qubit q; h q; while q { x q; }",
    "h loop": "qubit q; h q; while q { h q; }",
    "skip loop": "qubit q; x q; while q { skip; }",
}

for name, src in programs.items():
    decls, prog = parse(src)
    print(f"== {name}")
    for n in range(4):
        w = evaluate(decls, prog, cfg=EvalConfig.bounded(n)).final
        l = evaluate(decls, prog, cfg=EvalConfig.bounded(n, "linear")).final
        print(f"n={n}  W: {w}")
        print(f"     L: {l}   exited mass {norm(l) ** 2:.4f}")

# the unitary states of the skip loop never settle: consecutive ones are orthogonal
decls, prog = parse(programs["skip loop"])
w = [evaluate(decls, prog, cfg=EvalConfig.bounded(n)).final for n in range(6)]
print("squared step distances", [round(norm(w[n + 1] - w[n]) ** 2, 12) for n in range(5)])

# the h loop leaves with probability 1/2 per round, so the exited mass is 1 - 2^-n
decls, prog = parse(programs["h loop"])
for n in (1, 5, 10, 20):
    mass = evaluate(decls, prog, cfg=EvalConfig.bounded(n, "linear")).terminated_mass
    print(f"n={n:2d}  mass={mass:.12f}  1-2^-n={1 - 2.0 ** -n:.12f}")

# signs of the exit amplitudes alternate after the first one
w = evaluate(decls, prog, cfg=EvalConfig.bounded(6)).final
for lab, amp in w.items():
    print(f"  |{lab.ancilla_string() or '0'}>|{lab.regs[0]}>  {amp.real:+.6f}"
          f"  (modulus 2^-{-2 * math.log2(abs(amp)):.0f}/2)")
