from __future__ import annotations

import json
import math

import numpy as np
import pytest

from conftest import small_spec

from ionthresh.model import Profile, lattice_dirichlet_ground
from ionthresh.thresholds import (
    check_monotone,
    cluster_specs,
    equivalence_report,
    ground_energy,
    ir_threshold_shift,
    sigma_extrapolate,
    sigma_schedule,
    tau,
    threshold_finalize,
    trial_state_energy,
)


def test_sigma_R_monotone_and_above_ground(small_H):
    E = ground_energy(small_H)
    vals = sigma_schedule(small_H, [0.5, 1.0, 2.0, 3.0])
    assert all(v >= E - 1e-10 for v in vals.values())
    Rs = sorted(vals)
    assert all(vals[b] >= vals[a] - 1e-10 for a, b in zip(Rs, Rs[1:]))


def test_check_monotone_raises():
    with pytest.raises(ValueError, match="not monotone"):
        check_monotone({1.0: 0.5, 2.0: 0.4})


def test_extrapolate_exponential():
    R = np.arange(1, 9, dtype=float)
    vals = {r: 1.0 - 0.5 * math.exp(-0.7 * r) for r in R}
    sig, diag = sigma_extrapolate(vals)
    assert diag["status"] == "fit"
    assert abs(sig - 1.0) < 1e-6
    assert abs(diag["a"] - 0.7) < 1e-4


def test_extrapolate_fallbacks():
    sig, diag = sigma_extrapolate({r: 2.0 for r in (1.0, 2.0, 3.0, 4.0)})
    assert diag["status"] == "constant" and sig == 2.0
    grow = {r: 0.01 * r**2 for r in (1.0, 2.0, 3.0, 4.0, 5.0)}
    sig, diag = sigma_extrapolate(grow)
    assert diag["status"] == "boundary-dominated" and sig == grow[5.0]
    with pytest.raises(ValueError):
        sigma_extrapolate({1.0: 0.0, 2.0: 0.1})


def test_tau_one_electron_is_free_ground():
    spec = small_spec(alpha=0.0)
    t, table = tau(spec)
    assert np.isclose(t, lattice_dirichlet_ground(spec.grid))
    assert set(table["clusters"]) == {"1"}


def test_cluster_specs_two_electrons():
    spec = small_spec(n_electrons=2, n_max=1)
    cs = cluster_specs(spec)
    assert set(cs) == {"E0_1", "E_1", "E0_2"}
    assert cs["E0_1"].potentials.v.kind == "zero"
    assert cs["E_1"].n_electrons == 1


def test_equivalence_report_fields():
    rep = equivalence_report(small_spec(), [1.0, 2.0, 3.0, 4.0])
    assert rep.sigma >= rep.sigma_R[-1] - 1e-12
    assert rep.discrepancy == pytest.approx(rep.sigma - rep.tau)
    assert rep.model_tolerance >= 2 * rep.solver_tolerance
    again = threshold_finalize(dict(zip(rep.schedule, rep.sigma_R)), rep.ground_energy, rep.tau,
                               rep.cluster_table, rep.coarse_sigma)
    assert json.dumps(again.to_dict(), sort_keys=True) == json.dumps(rep.to_dict(), sort_keys=True)


def ir_spec():
    return small_spec(n_modes=4, ir_cutoff=0.1)


def test_ir_shift_bounded_and_shrinking():
    # |k| takes the values 0.5 and 1.5; mu = 2 removes everything, mu = 1 half of it
    rep = ir_threshold_shift(ir_spec(), [2.0, 1.0, 0.1], R=2.0, include_zero_cutoff=False)
    assert rep.passed
    assert rep.monotone_shrink
    assert rep.energy_shifts[-1] == 0.0
    assert all(s <= b + 1e-12 for s, b in zip(rep.energy_shifts, rep.derived_bound_energy))


def trial_spec():
    return small_spec(
        n_electrons=2, extent=7.0, points=13, n_modes=4, n_max=2, alpha=0.1,
        w=Profile("gaussian", 0.5, 1.0))


def test_trial_state_gap_decomposition():
    spec = trial_spec()
    rep = trial_state_energy(spec, 1, [2.0, 4.0], cutoff=1.0, photon_radius=2.0)
    for e, g, f, p, c in zip(rep.energies, rep.gaps, rep.field_cross, rep.potential_tail, rep.coupling_overlap):
        assert np.isclose(g, f + p + c, atol=1e-10)
        assert np.isclose(e - rep.target, g, atol=1e-10)
    assert all(d < 1e-12 for d in rep.translation_defect)


def test_trial_state_rejects_bad_shift():
    with pytest.raises(ValueError, match="multiple of the grid spacing"):
        trial_state_energy(trial_spec(), 1, [1.5], cutoff=1.0)


def test_trial_state_needs_valid_n_prime():
    with pytest.raises(ValueError):
        trial_state_energy(trial_spec(), 3, [2.0])
