# A classical countdown from 5 produces five zero increments before all of its
# mass exits at once.  Stopping at the first small increment gives the wrong
# answer; a stall window of six or more does not.

from qwhile import EvalConfig, evaluate, parse

decls, prog = parse("uint<3> q = 5; while (q > 0) { dec q; }")

for window in (1, 3, 5, 6, 8):
    r = evaluate(decls, prog, cfg=EvalConfig.converging(eps=1e-9, window=window))
    print(f"window={window}: stopped at n={r.iterations_run}, mass={r.terminated_mass}, "
          f"converged={r.converged}")
    for note in r.notes:
        print("   note:", note)

r = evaluate(decls, prog, cfg=EvalConfig.converging(eps=1e-9, window=8))
print("increments", r.increments, "ancillas used", r.ancillas_used)

# an h loop never finishes exactly, so the tolerance decides the stopping point
decls, prog = parse("qubit q; h q; while q { h q; }")
for eps in (1e-3, 1e-6, 1e-9):
    r = evaluate(decls, prog, cfg=EvalConfig.converging(eps=eps))
    print(f"eps={eps:g}: n={r.iterations_run} mass={r.terminated_mass:.15f}")
r = evaluate(decls, prog, cfg=EvalConfig.converging(eps=1e-12, max_iter=20))
print("capped at 20:", r.converged, r.notes)
