# A Hadamard coin decides whether a 3-bit counter goes up or down; the loop
# runs while the counter is positive.  Each iteration writes its guard into a
# fresh tape qubit, so the tape prefix 1..10.. records when a branch exited.

from qwhile import EvalConfig, evaluate, parse, pretty, trace
from qwhile.state import ProjectorSpec, project

SRC = """
qubit c;
uint<3> q = 2;
while<5> (q > 0) {
  h c;
  ctrl c { inc q; }
  nctrl c { dec q; }
}
"""

decls, prog = parse(SRC)
print(pretty(decls, prog))

report, frames = trace(decls, prog)
for label, k in frames:
    print(label)
    for lab, amp in k.items():
        c, q = lab.regs
        print(f"   tape {lab.ancilla_string() or '0':6s} c={c} q={q}  {amp.real:+.6f}")

w5 = frames[-1][1]
still_running = project(w5, ProjectorSpec.of((i, 1) for i in range(1, 6)))
print("exited after five rounds:", w5 - still_running)

for n in range(1, 6):
    bounded = type(prog)(n, prog.guard, prog.body)
    mass = evaluate(decls, bounded, cfg=EvalConfig(mode="linear")).terminated_mass
    print(f"exited mass after {n} round(s): {mass:.4f}")
