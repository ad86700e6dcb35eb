"""Distance to the SSB from an operating point, with a curvature sanity check.

The orthogonal projection of a voltage point onto the SSB gives the closest
bifurcation in voltage space. The foot point is only a genuine local minimum
of the distance while the point sits inside the focal distance, so the
principal curvatures at the foot are reported alongside it.
"""
import numpy as np

from ssbgeom import curvature, netio, projection, ssb

case = netio.builtin_case("ieee30")
F = netio.assemble_quadratic(case, eliminate_slack=True)
base = netio.flat_profile(case, eliminate_slack=True)
rng = np.random.default_rng(7)

u = rng.standard_normal(F.n)
q = ssb.find_ssb_ray(F, base, u / np.linalg.norm(u))
print(f"ray hit the SSB at lambda0 = {q.lambda0:.1e}, kernel dimension {ssb.regularity(F, q.q)[0]}")

forms, W = curvature.weingarten_voltage(F, q)
kappas = [k for k, _ in curvature.principal_curvatures(forms)]
print(f"principal curvatures: max {kappas[0]:.4f}, min {kappas[-1]:.4f} ({len(kappas)} in total)")
print(f"smallest radius of curvature: {1 / max(abs(k) for k in kappas):.4f}\n")

# back off from the SSB towards increasing lambda0, with some tangential drift
out = np.sign(np.dot(q.N_V, q.grad_lambda)) * q.N_V
drift = ssb.tangent_basis(q) @ rng.standard_normal(F.n - 1)
for scale in (1e-3, 1e-2, 3e-2):
    v = q.q + scale * (out + 0.3 * drift / np.linalg.norm(drift))
    res = projection.project_point(F, v)
    print(f"offset {scale:.0e}: distance {res.d:+.6f}, foot moved {np.linalg.norm(res.q.q - q.q):.2e}, "
          f"{len(res.corrector_iterations)} integrator steps, locally closest: {res.locally_closest}")
