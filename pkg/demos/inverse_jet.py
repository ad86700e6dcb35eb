"""Second-order Taylor model of the local inverse of F.

Away from the SSB, F has a smooth local inverse. Its Jacobian and Hessians at
one point predict the preimage of nearby power injections. The error of the
prediction shrinks cubically with the size of the power step.
"""
import numpy as np

from ssbgeom import invcalc, netio

case = netio.builtin_case("ieee14")
F = netio.assemble_quadratic(case, eliminate_slack=True)
v0 = netio.flat_profile(case, eliminate_slack=True)
jet = invcalc.inverse_hessian(F, v0)
p0 = F(v0)
a = np.random.default_rng(1).standard_normal(F.n)
a /= np.linalg.norm(a)


def newton_preimage(p, v):
    for _ in range(30):
        v = v + np.linalg.solve(F.jacobian(v), p - F(v))
    return v


print("power step   first-order error   second-order error")
for s in (1e-1, 3e-2, 1e-2, 3e-3):
    exact = newton_preimage(p0 + s * a, v0.copy())
    first = v0 + s * jet.J_inv @ a
    second = first + 0.5 * s * s * np.einsum("mij,i,j->m", jet.H_inv, a, a)
    print(f"{s:.0e}        {np.linalg.norm(first - exact):.3e}           {np.linalg.norm(second - exact):.3e}")
