"""Exponential localization below the threshold.

Spectral projectors below lambda stay bounded under the weight e^(beta |x|)
when the box grows, as long as lambda + 2 beta^2 lies below Sigma. Without a
binding potential the same norms blow up with the box. The last part checks
the Combes-Thomas numerical-range certificate and the Helffer-Sjostrand
calculus on a small matrix.
Run with ``python3 tutorials/03_decay.py`` (under a minute).
"""
from __future__ import annotations

import numpy as np

from ionthresh.decay import (
    WeightSpec,
    combes_thomas_range_check,
    hr_lower_bound_check,
    weighted_norm_schedule,
)
from ionthresh.model import CouplingSpec, ElectronGrid, ModelSpec, PotentialSpec, Profile, assemble_hamiltonian
from ionthresh.spectral import HSQuadratureSpec, SmoothBumpSpec, eig_function, hs_function

spec = ModelSpec(
    grid=ElectronGrid(32.0, 64),
    coupling=CouplingSpec(alpha=0.1, uv_cutoff=2.0, ir_cutoff=0.3),
    potentials=PotentialSpec(v=Profile("gaussian", -2.0, 1.0)),
    n_modes=4,
    n_max=2,
)

beta, lam = 0.2, -0.6
bound = weighted_norm_schedule(spec, [1, 2, 4], lam, beta)
print("bound state, ||e^(beta|x|) E_lambda|| over L, 2L, 4L:", [round(w.norm, 6) for w in bound])

free = spec.with_(v=Profile())
spread = weighted_norm_schedule(free, [1, 2, 4], 0.36, beta)
print("free electron, same norms below 0.36:", [f"{w.norm:.3g}" for w in spread])

# Numerical range of the conjugated H_R: every z left of lambda + delta/2 is
# at distance >= delta/2, which bounds the conjugated resolvent.
H = assemble_hamiltonian(spec)
hr = hr_lower_bound_check(H, 4.0)
bump = SmoothBumpSpec(lam, hr.min_eig - 2 * beta**2 - lam, hr.ground_energy - 0.5, 0.5)
cert = combes_thomas_range_check(H, 4.0, WeightSpec(beta), bump, hr)
print(f"Combes-Thomas: delta={cert.delta:.4f} min margin={cert.min_margin:.4f} certified={cert.certified}")

# Helffer-Sjostrand: g(H) from resolvents against the eigendecomposition.
rng = np.random.default_rng(0)
a = rng.standard_normal((30, 30))
M = (a + a.T) / (2 * np.sqrt(30))
ev = np.linalg.eigvalsh(M)
g = SmoothBumpSpec(0.5 * (ev[2] + ev[3]), 0.25 * (ev[3] - ev[2]), ev[0] - 0.5, 0.5)
exact = eig_function(M, g)
for q in (HSQuadratureSpec(200, 100), HSQuadratureSpec(400, 200), HSQuadratureSpec(800, 400)):
    err = np.linalg.norm(hs_function(M, g, q, method="solve").toarray() - exact, 2)
    print(f"  {q.nx}x{q.ny}: ||g_HS(H) - g(H)|| = {err:.2e}")
