"""Truncated Fock space: ladder operators, second quantization, identification.

Run with ``python3 tutorials/01_fock_space.py``. Everything here is small
enough to print.
"""
from __future__ import annotations

import numpy as np

from ionthresh import fock

# A uniform grid of M = 3 photon momenta in [-2, 2]. The odd grid contains
# k = 0, which is kept as a mode but never couples to the electron.
modes = fock.ModeBasis.uniform(3, uv_cutoff=2.0, ir_cutoff=0.3)
print("frequencies |k|:", modes.frequencies, "soft modes:", modes.soft_set)

# Occupations are truncated at N_max total photons.
basis = fock.build_fock_basis(modes, n_max=2)
print("Fock dimension:", basis.dimension)
for i in range(min(basis.dimension, 6)):
    print("  state", i, basis.state(i))

# a*(h) raises the photon number by one; on the top grade it is truncated,
# so the canonical commutation relation holds only on the safe subspace.
h = np.array([1.0, 0.5, -0.25])
ad = fock.creation_op(h, basis).toarray()
a = fock.annihilation_op(h, basis).toarray()
comm = a @ ad - ad @ a
safe = basis.safe_indices(1)
print("[a(h), a*(h)] on the safe subspace equals |h|^2:",
      np.allclose(comm[np.ix_(safe, safe)], np.vdot(h, h) * np.eye(len(safe))))

# The field energy is dGamma(|k|), the photon number dGamma(1).
hf = fock.dgamma(modes.frequencies, basis).toarray()
print("field energies:", np.round(np.diag(hf).real, 3))

# The self-test bundles all of these identities.
for rec in fock.selftest(n_modes=3, n_max=3, seed=7):
    print(f"  {rec['check']:<28} {rec['value']:.2e}  {'ok' if rec['passed'] else 'FAIL'}")
