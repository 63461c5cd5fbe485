from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from ionthresh.fock import (
    FockBasis,
    FockOperator,
    ModeBasis,
    TruncationError,
    annihilation_op,
    creation_op,
    cutoff_profile,
    dgamma,
    field_op,
    gamma,
    glue,
    identification,
    number_op,
    one_boson_translation,
    photon_positions,
    position_localizer,
    selftest,
)


def rvec(rng, m):
    return rng.standard_normal(m) + 1j * rng.standard_normal(m)


def test_basis_dimension_and_order():
    fb = FockBasis(ModeBasis.uniform(3, 1.0), 2)
    assert fb.dimension == 10  # C(3 + 2, 2)
    assert fb.state(0) == (0, 0, 0)
    assert list(fb.grades) == sorted(fb.grades)
    for i in range(fb.dimension):
        assert fb.index(fb.state(i)) == i


def test_basis_cap():
    with pytest.raises(TruncationError):
        FockBasis(ModeBasis.uniform(8, 1.0), 6, max_dimension=100)


def test_index_outside_truncation():
    fb = FockBasis(ModeBasis.uniform(2, 1.0), 1)
    with pytest.raises(TruncationError):
        fb.index((1, 1))


def test_mode_basis_validation():
    with pytest.raises(ValueError):
        ModeBasis(np.array([1.0, 0.5]), np.array([1.0, 1.0]), 2.0)
    with pytest.raises(ValueError):
        ModeBasis(np.array([0.5]), np.array([0.0]), 2.0)
    mb = ModeBasis.uniform(4, 2.0)
    assert mb.is_uniform and np.isclose(mb.spacing, 1.0)
    assert not np.any(mb.momenta == 0)


@settings(max_examples=20, deadline=None)
@given(m=st.integers(1, 4), n=st.integers(1, 3), seed=st.integers(0, 2**31 - 1))
def test_ccr_on_safe_subspace(m, n, seed):
    rng = np.random.default_rng(seed)
    fb = FockBasis(ModeBasis.uniform(m, 1.0), n)
    g, h = rvec(rng, m), rvec(rng, m)
    a, c = annihilation_op(g, fb).toarray(), creation_op(h, fb).toarray()
    safe = fb.safe_indices(1)
    comm = (a @ c - c @ a)[:, safe]
    assert np.abs(comm - np.vdot(g, h) * np.eye(fb.dimension)[:, safe]).max() <= 1e-10 * max(1, abs(np.vdot(g, h)))


def test_adjoint_and_field_hermitian():
    rng = np.random.default_rng(1)
    fb = FockBasis(ModeBasis.uniform(3, 1.0), 3)
    h = rvec(rng, 3)
    assert np.abs(annihilation_op(h, fb).toarray() - creation_op(h, fb).toarray().conj().T).max() < 1e-14
    assert field_op(h, fb).is_hermitian()


def test_number_bound():
    rng = np.random.default_rng(2)
    fb = FockBasis(ModeBasis.uniform(3, 1.0), 3)
    h = rvec(rng, 3)
    s = np.diag(1 / np.sqrt(fb.grades + 1.0))
    assert np.linalg.norm(creation_op(h, fb).toarray() @ s, 2) <= np.linalg.norm(h) + 1e-10


def test_number_operator_is_dgamma_identity():
    fb = FockBasis(ModeBasis.uniform(3, 1.0), 2)
    assert np.allclose(number_op(fb).toarray(), dgamma(np.ones(3), fb).toarray())
    assert np.allclose(np.diag(number_op(fb).toarray()).real, fb.grades)


def test_gamma_relations():
    rng = np.random.default_rng(3)
    fb = FockBasis(ModeBasis.uniform(3, 1.0), 3)
    b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    b /= 1.1 * np.linalg.norm(b, 2)
    gb = gamma(b, fb).toarray()
    h = rvec(rng, 3)
    safe = fb.safe_indices(1)
    lhs = gb @ creation_op(h, fb).toarray()
    rhs = creation_op(b @ h, fb).toarray() @ gb
    assert np.abs(lhs - rhs)[:, safe].max() < 1e-12
    theta = rng.standard_normal(3)
    assert np.allclose(expm(1j * dgamma(theta, fb).toarray()),
                       gamma(np.diag(np.exp(1j * theta)), fb).toarray(), atol=1e-12)


def test_gamma_rejects_expansion():
    fb = FockBasis(ModeBasis.uniform(2, 1.0), 2)
    with pytest.raises(ValueError):
        gamma(2.0 * np.eye(2), fb)
    gamma(2.0 * np.eye(2), fb, force=True)


def test_gamma_is_multiplicative():
    rng = np.random.default_rng(4)
    fb = FockBasis(ModeBasis.uniform(3, 1.0), 3)
    a = rng.standard_normal((3, 3)) / 4
    b = rng.standard_normal((3, 3)) / 4
    assert np.allclose(gamma(a, fb).toarray() @ gamma(b, fb).toarray(), gamma(a @ b, fb).toarray(), atol=1e-12)


def test_identification_shared_modes():
    mb = ModeBasis.uniform(2, 1.0)
    ba, bb, bc = FockBasis(mb, 1), FockBasis(mb, 1), FockBasis(mb, 2)
    ident = identification(ba, bb, bc)
    # |1,0> (x) |1,0> -> sqrt(2) |2,0>
    phi = np.zeros(ba.dimension); phi[ba.index((1, 0))] = 1
    out = ident.apply(phi, phi)
    assert np.isclose(out[bc.index((2, 0))], np.sqrt(2))
    assert np.count_nonzero(out) == 1


def test_identification_overflow_names_occupations():
    mb = ModeBasis.uniform(2, 1.0)
    ba, bc = FockBasis(mb, 1), FockBasis(mb, 1)
    ident = identification(ba, ba, bc)
    phi = np.zeros(ba.dimension); phi[ba.index((0, 1))] = 1
    with pytest.raises(TruncationError, match=r"\(0, 1\)"):
        ident.apply(phi, phi)


def test_identification_disjoint_isometry():
    rng = np.random.default_rng(5)
    ba = FockBasis(ModeBasis.uniform(2, 1.0), 1)
    bb = FockBasis(ModeBasis.uniform(2, 1.0), 2)
    bc = FockBasis(ModeBasis.uniform(4, 1.0), 3)
    ident = identification(ba, bb, bc, [0, 1], [2, 3])
    phi, psi = rvec(rng, ba.dimension), rvec(rng, bb.dimension)
    assert np.isclose(np.linalg.norm(ident.apply(phi, psi)), np.linalg.norm(phi) * np.linalg.norm(psi))


def test_translation_moves_localizer():
    mb = ModeBasis.uniform(8, np.pi / 2)
    y = photon_positions(mb)
    j0 = position_localizer(1.0, 0.0, None, mb).entries
    t = one_boson_translation(-y[5] + y[4], mb).entries
    moved = t @ j0 @ t.conj().T
    target = position_localizer(1.0, y[5] - y[4], None, mb).entries
    assert np.allclose(moved, target, atol=1e-12)


def test_localizers_disjoint_supports_multiply_to_zero():
    mb = ModeBasis.uniform(8, np.pi / 2)
    y = photon_positions(mb)
    ja = position_localizer(1.0, y[1], None, mb).entries
    jb = position_localizer(1.0, y[5], None, mb).entries
    assert np.abs(ja @ jb).max() < 1e-12
    assert np.linalg.norm(ja, 2) <= 1 + 1e-12


def test_glue_profile_and_derivatives():
    t = np.linspace(-0.5, 1.5, 401)
    g = glue(t)
    assert g[0] == 0 and g[-1] == 1 and np.all(np.diff(g) >= 0)
    x = np.linspace(0.05, 0.95, 19)
    h = 1e-5
    for d in (1, 2, 3):
        fd = (glue(x + h, d - 1) - glue(x - h, d - 1)) / (2 * h)
        assert np.allclose(glue(x, d), fd, rtol=1e-5, atol=1e-6)
    assert cutoff_profile(0.5) == 1 and cutoff_profile(2.5) == 0


def test_triplet_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    fb = FockBasis(ModeBasis.uniform(2, 1.0), 2)
    op = field_op(rvec(rng, 2), fb)
    p = tmp_path / "op.txt"
    op.save_triplets(p)
    back = FockOperator.load_triplets(p)
    assert back.hermitian == op.hermitian
    assert np.array_equal(back.toarray(), op.toarray())
    assert p.read_text().startswith("# fock-operator v1 dimension=6 hermitian=1")


def test_selftest_all_pass():
    for m in (1, 2, 3, 4):
        for n in (0, 1, 2, 3):
            recs = selftest(m, n, seed=11)
            assert all(r["passed"] for r in recs), [r for r in recs if not r["passed"]]
