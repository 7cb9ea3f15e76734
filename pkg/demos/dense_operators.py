# Small-space check of the loop operators as explicit matrices: the recursive
# definition against the closed form, unitarity of W_n, and the operator norm
# of L_n.

import numpy as np

from qwhile import Apply, Decl, H, QubitGuard, X, seq
from qwhile import oracle

decls = [Decl.qubit("q")]
space = oracle.SpaceSpec(4, decls)
guard = QubitGuard("q")
body = seq(Apply(H, ("q",)), Apply(X, ("q",)))
print("space dimension", space.dim)

for n in range(5):
    w_rec = oracle.dense_w(n, guard, body, space, "recursive").entries
    w_cf = oracle.dense_w(n, guard, body, space, "closed").entries
    l_rec = oracle.dense_l(n, guard, body, space, "recursive").entries
    l_cf = oracle.dense_l(n, guard, body, space, "closed").entries
    unitary = np.abs(w_rec.conj().T @ w_rec - np.eye(space.dim)).max()
    print(f"n={n} |W rec-closed|={np.abs(w_rec - w_cf).max():.1e} "
          f"|L rec-closed|={np.abs(l_rec - l_cf).max():.1e} "
          f"unitarity={unitary:.1e} ||L||={oracle.operator_norm(l_rec):.6f}")

# per-basis-vector increments: their squares add up to the exited mass
inc = oracle.basis_increments(guard, body, space, 4)
print(np.round(inc[:, :4] ** 2, 4))

report = oracle.check_suite(decls, guard, None, space, n_max=4, trials=20, seed=1)
for prop, r in report.items():
    print(f"{prop:25s} {r['max_deviation']:.2e} {'ok' if r['pass'] else 'FAIL'}")
