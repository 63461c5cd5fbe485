from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import small_spec

from ionthresh.decay import (
    WeightSpec,
    agmon_fit,
    combes_thomas_range_check,
    hr_lower_bound_check,
    lattice_amplitude_rate,
    power_norm,
    proof_pipeline_check,
    scaled_box,
    transfer_matrix_rate,
    weighted_projector_norm,
)
from ionthresh.model import ElectronGrid, assemble_hamiltonian
from ionthresh.spectral import HSQuadratureSpec, SmoothBumpSpec, eigs_lowest
from ionthresh.thresholds import sigma_R


def test_weight_samples():
    w = WeightSpec(0.5, 1e-2)
    s = w.samples([0.0, 10.0, 1e6])
    assert np.isclose(s[0], 0.5 / 1.01)
    assert s[-1] < w.bound and np.all(np.diff(s) > 0)
    with pytest.raises(ValueError):
        WeightSpec(-1.0)


def test_power_norm_matches_svd():
    rng = np.random.default_rng(0)
    b = rng.standard_normal((40, 5)) + 1j * rng.standard_normal((40, 5))
    s, _ = power_norm(b, rtol=1e-12)
    assert np.isclose(s, np.linalg.norm(b, 2), rtol=1e-6)


def test_unweighted_projector_norm_is_one(small_H):
    E = eigs_lowest(small_H.total, 1).ground
    w = weighted_projector_norm(small_H, E + 0.05, 0.0)
    assert w.rank >= 1 and np.isclose(w.norm, 1.0)


def test_weighted_norm_grows_with_beta(small_H):
    E = eigs_lowest(small_H.total, 1).ground
    norms = [weighted_projector_norm(small_H, E + 0.05, b).norm for b in (0.0, 0.2, 0.5)]
    assert norms[0] <= norms[1] <= norms[2]


def test_scaled_box_keeps_spacing():
    spec = small_spec()
    big = scaled_box(spec, 2)
    assert np.isclose(big.grid.spacing, spec.grid.spacing)
    assert np.isclose(big.grid.extent, 2 * spec.grid.extent)


def test_lattice_rates_consistent():
    h = 0.5
    gap = 0.3
    # density rate of -Lap psi = -gap psi on the lattice is twice the amplitude rate
    assert np.isclose(transfer_matrix_rate(-gap, h), 2 * lattice_amplitude_rate(gap, h))
    assert np.isclose(lattice_amplitude_rate(gap, 1e-6), math.sqrt(gap), rtol=1e-6)
    assert lattice_amplitude_rate(-1.0, h) == 0.0


def test_agmon_fit_free_well():
    spec = small_spec(alpha=0.0, n_max=0, extent=24.0, points=96)
    H = assemble_hamiltonian(spec)
    g = eigs_lowest(H.total, 1)
    fit = agmon_fit(H, g.eigenvectors[:, 0], (4.0, 12.0))
    ref = transfer_matrix_rate(g.ground, spec.grid.spacing)
    assert fit.flag == "ok"
    assert abs(fit.rate - ref) / ref < 0.05
    with pytest.raises(ValueError, match="boundary layer"):
        agmon_fit(H, g.eigenvectors[:, 0], (4.0, 23.0))


def test_hr_and_combes_thomas(small_H):
    R = 2.0
    hr = hr_lower_bound_check(small_H, R)
    assert hr.min_eig <= hr.sigma_R + 1e-10
    assert hr.C >= -1e-8
    lam = hr.ground_energy + 0.05
    beta = 0.1
    bump = SmoothBumpSpec(lam, hr.min_eig - 2 * beta**2 - lam, hr.ground_energy - 0.5, 0.5)
    cert = combes_thomas_range_check(small_H, R, WeightSpec(beta), bump, hr)
    assert cert.identity_defect < 1e-10
    assert cert.certified
    assert max(cert.resolvent_norms) <= cert.resolvent_bound


def test_combes_thomas_rejects_bad_precondition(small_H):
    hr = hr_lower_bound_check(small_H, 2.0)
    bump = SmoothBumpSpec(hr.sigma_R + 1.0, 0.5, hr.ground_energy - 0.5, 0.5)
    with pytest.raises(ValueError, match="precondition"):
        combes_thomas_range_check(small_H, 2.0, WeightSpec(0.1), bump, hr)


def test_pipeline_check_small(small_H):
    E = eigs_lowest(small_H.total, 1).ground
    s = sigma_R(small_H, 2.0)
    lam = 0.5 * (E + s)
    bump = SmoothBumpSpec(lam, 0.5 * (s - lam), E - 0.5, 0.5)
    pc = proof_pipeline_check(small_H, bump, WeightSpec(0.2), HSQuadratureSpec(120, 60), method="spectral")
    assert pc.within_factor
    assert pc.hs_error < 1e-2  # coarse 120x60 grid
