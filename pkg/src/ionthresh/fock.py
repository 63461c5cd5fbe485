"""Truncated bosonic Fock space over a finite set of momentum modes.

One-boson vectors are stored as ``h(k) * sqrt(w)`` so that every inner
product is the plain Euclidean one. Operators are scipy sparse matrices in
the occupation-number basis, ordered by total occupation and then
descending-lexicographically within each grade (``00, 10, 01, 20, 11, 02``).

Truncation convention: creation into grades above ``n_max`` is dropped, so
all operators are compressions of their infinite-dimensional counterparts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

__all__ = [
    "MAX_FOCK_DIMENSION",
    "TruncationError",
    "Mode",
    "ModeBasis",
    "OneBosonMatrix",
    "FockBasis",
    "FockOperator",
    "build_fock_basis",
    "one_boson_vector",
    "creation_op",
    "annihilation_op",
    "field_op",
    "number_op",
    "dgamma",
    "gamma",
    "one_boson_translation",
    "glue",
    "cutoff_profile",
    "position_localizer",
    "Identification",
    "identification",
]

MAX_FOCK_DIMENSION = 250_000
CONTRACTION_TOL = 1e-10


class TruncationError(ValueError):
    """Raised when a requested state or basis does not fit the truncation."""


# ----------------------------------------------------------------------------
# smooth glue profile, shared by electron cutoffs, photon localizers and the
# functional-calculus bump
# ----------------------------------------------------------------------------

def glue(t, derivative: int = 0):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t).

    psi(t)/(psi(t) + psi(1-t)) with psi(t) = exp(-1/t) equals the logistic
    function of u(t) = 1/(1-t) - 1/t, which gives closed-form derivatives
    (``derivative`` in 0..3) without overflow.
    """
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    tc = np.where(inside, t, 0.5)
    u = 1.0 / (1.0 - tc) - 1.0 / tc
    s = expit(u)
    if derivative == 0:
        return np.where(inside, s, (t >= 1).astype(float))
    u1 = 1.0 / (1.0 - tc) ** 2 + 1.0 / tc**2
    u2 = 2.0 / (1.0 - tc) ** 3 - 2.0 / tc**3
    u3 = 6.0 / (1.0 - tc) ** 4 + 6.0 / tc**4
    d1 = s * (1.0 - s)
    d2 = d1 * (1.0 - 2.0 * s)
    d3 = d2 * (1.0 - 2.0 * s) - 2.0 * d1**2
    if derivative == 1:
        out = d1 * u1
    elif derivative == 2:
        out = d2 * u1**2 + d1 * u2
    elif derivative == 3:
        out = d3 * u1**3 + 3.0 * d2 * u1 * u2 + d1 * u3
    else:
        raise ValueError("derivative must be 0, 1, 2 or 3")
    return np.where(inside, out, 0.0)


def cutoff_profile(t):
    """chi(t) = 1 for t <= 1, 0 for t >= 2, smooth and monotone in between."""
    return 1.0 - glue(np.asarray(t, dtype=float) - 1.0)


# ----------------------------------------------------------------------------
# modes
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Mode:
    index: int
    momentum: float
    weight: float

    @property
    def frequency(self) -> float:
        return abs(self.momentum)


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Discretized photon momenta with quadrature weights and IR/UV tags."""

    momenta: np.ndarray
    weights: np.ndarray
    uv_cutoff: float
    ir_cutoff: float = 0.0

    def __post_init__(self):
        k = np.array(self.momenta, dtype=float)
        w = np.array(self.weights, dtype=float)
        if k.ndim != 1 or k.size == 0:
            raise ValueError("a mode basis needs at least one mode")
        if w.shape != k.shape:
            raise ValueError("weights and momenta differ in length")
        if np.any(w <= 0):
            raise ValueError("quadrature weights must be positive")
        if np.any(np.diff(k) <= 0):
            raise ValueError("momenta must be strictly increasing")
        if not (self.uv_cutoff > 0 and 0 <= self.ir_cutoff <= self.uv_cutoff):
            raise ValueError("need uv_cutoff > 0 and 0 <= ir_cutoff <= uv_cutoff")
        k.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "momenta", k)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n_modes: int, uv_cutoff: float, ir_cutoff: float = 0.0) -> "ModeBasis":
        """Midpoint grid on [-uv_cutoff, uv_cutoff]; k = 0 is a node only for odd n_modes."""
        dk = 2.0 * uv_cutoff / n_modes
        k = -uv_cutoff + (np.arange(n_modes) + 0.5) * dk
        return cls(k, np.full(n_modes, dk), float(uv_cutoff), float(ir_cutoff))

    def with_ir_cutoff(self, ir_cutoff: float) -> "ModeBasis":
        return ModeBasis(self.momenta, self.weights, self.uv_cutoff, float(ir_cutoff))

    @property
    def size(self) -> int:
        return self.momenta.size

    def __len__(self) -> int:
        return self.size

    @property
    def frequencies(self) -> np.ndarray:
        return np.abs(self.momenta)

    @property
    def soft(self) -> np.ndarray:
        return self.frequencies < self.ir_cutoff

    @property
    def soft_set(self) -> np.ndarray:
        return np.flatnonzero(self.soft)

    @property
    def interacting_set(self) -> np.ndarray:
        return np.flatnonzero(~self.soft)

    @property
    def modes(self) -> list[Mode]:
        return [Mode(i, float(k), float(w)) for i, (k, w) in enumerate(zip(self.momenta, self.weights))]

    @property
    def is_uniform(self) -> bool:
        if self.size == 1:
            return True
        dk = np.diff(self.momenta)
        return bool(np.allclose(dk, dk[0], rtol=1e-12, atol=0)
                    and np.allclose(self.weights, dk[0], rtol=1e-12, atol=0))

    @property
    def spacing(self) -> float:
        if not self.is_uniform:
            raise ValueError("mode grid is not uniform")
        return float(self.weights[0])

    def to_dict(self) -> dict:
        return {"momenta": self.momenta.tolist(), "weights": self.weights.tolist(),
                "uv_cutoff": self.uv_cutoff, "ir_cutoff": self.ir_cutoff}


def one_boson_vector(profile: Callable[[np.ndarray], np.ndarray], modes: ModeBasis) -> np.ndarray:
    """Sample ``profile(k)`` on the modes and fold in the quadrature weights."""
    return np.asarray(profile(modes.momenta), dtype=complex) * np.sqrt(modes.weights)


@dataclass(frozen=True, eq=False)
class OneBosonMatrix:
    entries: np.ndarray
    contraction: bool = field(init=False)

    def __post_init__(self):
        b = np.array(self.entries, dtype=complex)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("one-boson matrix must be square")
        b.setflags(write=False)
        object.__setattr__(self, "entries", b)
        object.__setattr__(self, "contraction", bool(self.norm <= 1 + CONTRACTION_TOL))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2))

    @property
    def is_unitary(self) -> bool:
        b = self.entries
        return bool(np.allclose(b.conj().T @ b, np.eye(len(b)), atol=1e-12))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


# ----------------------------------------------------------------------------
# occupation-number basis
# ----------------------------------------------------------------------------

def _grade_states(n_modes: int, grade: int) -> Iterable[tuple[int, ...]]:
    # descending lexicographic: first mode takes the most bosons first
    if n_modes == 1:
        yield (grade,)
        return
    for first in range(grade, -1, -1):
        for rest in _grade_states(n_modes - 1, grade - first):
            yield (first,) + rest


class FockBasis:
    """Occupation vectors with total occupation at most ``n_max``."""

    def __init__(self, mode_basis: ModeBasis, n_max: int, max_dimension: int = MAX_FOCK_DIMENSION):
        if n_max < 0:
            raise ValueError("n_max must be nonnegative")
        m = mode_basis.size
        dim = math.comb(m + n_max, m)
        if dim > max_dimension:
            raise TruncationError(
                f"Fock dimension C({m}+{n_max},{m}) = {dim} exceeds cap {max_dimension}")
        self.mode_basis = mode_basis
        self.n_max = int(n_max)
        states = [s for n in range(n_max + 1) for s in _grade_states(m, n)]
        self.states = np.array(states, dtype=np.int64).reshape(len(states), m)
        self.states.setflags(write=False)
        self.grades = self.states.sum(axis=1)
        self.grades.setflags(write=False)
        self._index = {s: i for i, s in enumerate(states)}

    @property
    def n_modes(self) -> int:
        return self.mode_basis.size

    @property
    def dimension(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return self.dimension

    def index(self, occupation: Sequence[int]) -> int:
        try:
            return self._index[tuple(int(o) for o in occupation)]
        except KeyError:
            raise TruncationError(f"occupation {tuple(occupation)} not in basis") from None

    def state(self, i: int) -> tuple[int, ...]:
        return tuple(int(o) for o in self.states[i])

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dimension, dtype=complex)
        v[0] = 1.0
        return v

    def safe_indices(self, margin: int = 1) -> np.ndarray:
        """States with total occupation <= n_max - margin (truncation cannot bite)."""
        return np.flatnonzero(self.grades <= self.n_max - margin)

    @cached_property
    def _ladders(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        # for each mode: (src, dst, sqrt(occ+1)) of the raising map
        out = []
        src_all = np.flatnonzero(self.grades < self.n_max)
        for mode in range(self.n_modes):
            src, dst, amp = [], [], []
            for i in src_all:
                occ = list(self.states[i])
                amp.append(math.sqrt(occ[mode] + 1))
                occ[mode] += 1
                src.append(i)
                dst.append(self._index[tuple(occ)])
            out.append((np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                        np.array(amp, dtype=float)))
        return out


def build_fock_basis(mode_basis: ModeBasis, n_max: int,
                     max_dimension: int = MAX_FOCK_DIMENSION) -> FockBasis:
    return FockBasis(mode_basis, n_max, max_dimension)


# ----------------------------------------------------------------------------
# operators
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FockOperator:
    """Sparse complex operator with bookkeeping flags.

    ``support`` optionally records, for operators on a subspace, the indices
    of the parent basis that the rows/columns correspond to.
    """

    matrix: sp.csr_matrix
    hermitian: bool = False
    tag: str | None = None
    support: np.ndarray | None = None

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        if m.shape[0] != m.shape[1]:
            raise ValueError("operators must be square")
        m.sum_duplicates()
        object.__setattr__(self, "matrix", m)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dagger(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T.tocsr(), self.hermitian, self.tag, self.support)

    def hermiticity_defect(self) -> float:
        """max|M - M^dagger| / max|M| (0 for the zero operator)."""
        m = self.matrix
        scale = abs(m).max() if m.nnz else 0.0
        if scale == 0:
            return 0.0
        d = m - m.conj().T
        return float(abs(d).max() / scale) if d.nnz else 0.0

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermiticity_defect() <= tol

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            return FockOperator(self.matrix @ other.matrix)
        return self.matrix @ other

    def __add__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.matrix + other.matrix, self.hermitian and other.hermitian)

    def __sub__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.matrix - other.matrix, self.hermitian and other.hermitian)

    def __mul__(self, c) -> "FockOperator":
        return FockOperator(self.matrix * c, self.hermitian and np.isreal(c), self.tag, self.support)

    __rmul__ = __mul__

    def expectation(self, psi: np.ndarray) -> complex:
        return complex(np.vdot(psi, self.matrix @ psi))

    # -- triplet text format ------------------------------------------------
    def save_triplets(self, path: str | Path) -> None:
        """Write ``# fock-operator v1 dimension=D hermitian=0|1 tag=T`` then ``row col re im`` lines."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"# fock-operator v1 dimension={self.dimension} "
                 f"hermitian={int(self.hermitian)} tag={self.tag or '-'}"]
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            lines.append(f"{r} {c} {float(v.real)!r} {float(v.imag)!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load_triplets(cls, path: str | Path) -> "FockOperator":
        text = Path(path).read_text().splitlines()
        if not text or not text[0].startswith("# fock-operator v1"):
            raise ValueError(f"{path}: missing fock-operator header")
        header = dict(tok.split("=", 1) for tok in text[0].split()[3:])
        dim = int(header["dimension"])
        rows, cols, vals = [], [], []
        for line in text[1:]:
            if not line.strip():
                continue
            r, c, re_, im_ = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(complex(float(re_), float(im_)))
        m = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
        tag = None if header.get("tag", "-") == "-" else header["tag"]
        return cls(m, bool(int(header["hermitian"])), tag)


def _check_vector(h, basis: FockBasis) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.shape != (basis.n_modes,):
        raise ValueError(f"one-boson vector has shape {h.shape}, expected ({basis.n_modes},)")
    return h


def _raising_matrix(h: np.ndarray, basis: FockBasis) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for mode, (src, dst, amp) in enumerate(basis._ladders):
        if h[mode] == 0 or src.size == 0:
            continue
        rows.append(dst)
        cols.append(src)
        vals.append(h[mode] * amp)
    d = basis.dimension
    if not rows:
        return sp.csr_matrix((d, d), dtype=complex)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(d, d), dtype=complex)


def creation_op(h, basis: FockBasis) -> FockOperator:
    """a*(h); components landing above ``n_max`` are dropped."""
    return FockOperator(_raising_matrix(_check_vector(h, basis), basis), tag="field")


def annihilation_op(h, basis: FockBasis) -> FockOperator:
    """a(h) = a*(h)^dagger, antilinear in h."""
    return FockOperator(_raising_matrix(_check_vector(h, basis), basis).conj().T.tocsr(), tag="field")


def field_op(h, basis: FockBasis) -> FockOperator:
    """Phi(h) = a(h) + a*(h)."""
    up = _raising_matrix(_check_vector(h, basis), basis)
    return FockOperator(up + up.conj().T, hermitian=True, tag="field")


def dgamma(diag, basis: FockBasis) -> FockOperator:
    """Second quantization of a diagonal one-boson operator."""
    diag = np.asarray(diag)
    if diag.shape != (basis.n_modes,) or not np.all(np.isfinite(diag)):
        raise ValueError("dgamma needs one finite entry per mode")
    values = basis.states @ diag
    return FockOperator(sp.diags(values.astype(complex), format="csr"),
                        hermitian=bool(np.isrealobj(diag) or np.allclose(np.imag(diag), 0)),
                        tag="field")


def number_op(basis: FockBasis) -> FockOperator:
    return dgamma(np.ones(basis.n_modes), basis)


def _permanent(a: np.ndarray) -> complex:
    n = a.shape[0]
    if n == 0:
        return 1.0
    if n <= 4:
        return sum(np.prod(a[np.arange(n), list(p)]) for p in permutations(range(n)))
    # Ryser with Gray-code-free subset enumeration
    total = 0.0
    for mask in range(1, 1 << n):
        cols = [j for j in range(n) if mask >> j & 1]
        total += (-1) ** len(cols) * np.prod(a[:, cols].sum(axis=1))
    return (-1) ** n * total


def gamma(b, basis: FockBasis, *, force: bool = False) -> FockOperator:
    """Gamma(b): the n-fold tensor power of b on each n-boson sector.

    Matrix elements are permanents of the occupation-repeated submatrix of b,
    divided by sqrt(prod m_i! prod n_j!).
    """
    b = OneBosonMatrix(b) if not isinstance(b, OneBosonMatrix) else b
    if b.entries.shape != (basis.n_modes, basis.n_modes):
        raise ValueError("one-boson matrix does not match the mode count")
    if not (force or b.contraction or b.is_unitary):
        raise ValueError(f"Gamma(b) needs ||b|| <= 1, got {b.norm:.6g}")
    bm = b.entries
    states = basis.states
    fact = np.array([math.prod(math.factorial(int(o)) for o in s) for s in states], dtype=float)
    reps = [np.repeat(np.arange(basis.n_modes), s) for s in states]
    rows, cols, vals = [], [], []
    for n in range(basis.n_max + 1):
        idx = np.flatnonzero(basis.grades == n)
        for i in idx:
            ri = reps[i]
            for j in idx:
                val = _permanent(bm[np.ix_(ri, reps[j])]) / math.sqrt(fact[i] * fact[j])
                if val != 0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(val)
    d = basis.dimension
    m = sp.csr_matrix((vals, (rows, cols)), shape=(d, d), dtype=complex)
    return FockOperator(m, hermitian=bool(np.allclose(bm, bm.conj().T)), tag="field")


def one_boson_translation(distance: float, modes: ModeBasis) -> OneBosonMatrix:
    """diag(exp(i * distance * k)).

    Gamma of this matrix moves photon positions (y = i d/dk) by ``-distance``;
    the form factor of an electron at x + R is ``one_boson_translation(-R) @ G_x``.
    """
    return OneBosonMatrix(np.diag(np.exp(1j * distance * modes.momenta)))


def _ygrid(modes: ModeBasis, size: int) -> tuple[np.ndarray, float]:
    dy = 2 * np.pi / (size * modes.spacing)
    y = (np.arange(size) - size // 2) * dy
    return y, size * dy


def position_localizer(radius: float, center: float, ygrid_size: int | None,
                       modes: ModeBasis) -> OneBosonMatrix:
    """Smooth localizer chi(|y - center| / radius) in photon position space.

    Built as F^dagger diag(bump) F with F the (partial) DFT from the k grid to
    a periodic y grid of ``ygrid_size`` points, then symmetrized and clipped
    to [0, 1]. With ``ygrid_size == len(modes)`` F is unitary and localizers
    with disjoint grid supports multiply to exactly zero.
    """
    if not modes.is_uniform:
        raise ValueError("position_localizer needs a uniform momentum grid")
    size = modes.size if ygrid_size is None else int(ygrid_size)
    if size < modes.size:
        raise ValueError("y grid must have at least as many points as there are modes")
    y, period = _ygrid(modes, size)
    d = np.abs((y - center + period / 2) % period - period / 2)
    if radius <= 0:
        bump = np.zeros(size)
    else:
        bump = cutoff_profile(d / radius)
    f = np.exp(1j * np.outer(y, modes.momenta)) / np.sqrt(size)
    j = f.conj().T @ (bump[:, None] * f)
    j = 0.5 * (j + j.conj().T)
    w, v = np.linalg.eigh(j)
    j = (v * np.clip(w, 0.0, 1.0)) @ v.conj().T
    return OneBosonMatrix(j)


def photon_positions(modes: ModeBasis, ygrid_size: int | None = None) -> np.ndarray:
    """Periodic photon-position grid paired with a uniform momentum grid."""
    return _ygrid(modes, modes.size if ygrid_size is None else ygrid_size)[0]


# ----------------------------------------------------------------------------
# identification operator
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Identification:
    """I: F_A (x) F_B -> F_C collecting all bosons in one Fock space.

    ``matrix`` maps product coefficients (A index major) into the combined
    basis; products whose total occupation exceeds the combined cap have
    zero columns and are listed in ``overflow``.
    """

    matrix: sp.csr_matrix
    basis_a: FockBasis
    basis_b: FockBasis
    combined: FockBasis
    overflow: np.ndarray

    def apply(self, phi: np.ndarray, psi: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """I(phi (x) psi); raises TruncationError if mass sits on overflowing products."""
        return self.apply_product(np.kron(phi, psi), tol=tol)

    def apply_product(self, vec: np.ndarray, tol: float = 0.0) -> np.ndarray:
        vec = np.asarray(vec)
        if self.overflow.size:
            lost = np.abs(vec[self.overflow, ...]) > tol
            if np.any(lost):
                k = self.overflow[np.flatnonzero(lost.reshape(len(self.overflow), -1).any(axis=1))[0]]
                ia, ib = divmod(int(k), self.basis_b.dimension)
                raise TruncationError(
                    f"identification overflow: occupations {self.basis_a.state(ia)} + "
                    f"{self.basis_b.state(ib)} exceed n_max={self.combined.n_max}")
        return self.matrix @ vec


def identification(basis_a: FockBasis, basis_b: FockBasis, combined: FockBasis,
                   modes_a: Sequence[int] | None = None,
                   modes_b: Sequence[int] | None = None) -> Identification:
    """Build the identification operator.

    By default A, B and the combined space share one mode set. ``modes_a`` and
    ``modes_b`` instead embed the factor modes into subsets of the combined
    modes. In a shared mode basis
    I(|n> (x) |m>) = prod_j sqrt(C(n_j + m_j, n_j)) |n + m>.
    """
    mc = combined.n_modes
    ma = np.arange(mc) if modes_a is None else np.asarray(modes_a, dtype=int)
    mb = np.arange(mc) if modes_b is None else np.asarray(modes_b, dtype=int)
    if ma.size != basis_a.n_modes or mb.size != basis_b.n_modes:
        raise ValueError("mode maps do not match the factor bases")
    ea = np.zeros((basis_a.dimension, mc), dtype=np.int64)
    ea[:, ma] = basis_a.states
    eb = np.zeros((basis_b.dimension, mc), dtype=np.int64)
    eb[:, mb] = basis_b.states
    rows, cols, vals, overflow = [], [], [], []
    db = basis_b.dimension
    for ia in range(basis_a.dimension):
        for ib in range(db):
            occ = ea[ia] + eb[ib]
            col = ia * db + ib
            if occ.sum() > combined.n_max:
                overflow.append(col)
                continue
            coef = math.prod(math.sqrt(math.comb(int(o), int(n))) for o, n in zip(occ, ea[ia]))
            rows.append(combined.index(occ))
            cols.append(col)
            vals.append(coef)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(combined.dimension, basis_a.dimension * db),
                      dtype=complex)
    return Identification(m, basis_a, basis_b, combined, np.array(overflow, dtype=np.int64))


# ----------------------------------------------------------------------------
# invariant suite
# ----------------------------------------------------------------------------

def _maxabs(a) -> float:
    a = np.abs(np.asarray(a))
    return float(a.max()) if a.size else 0.0


def _random_vector(rng, m):
    return rng.standard_normal(m) + 1j * rng.standard_normal(m)


def _random_contraction(rng, m):
    b = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    return b / (np.linalg.norm(b, 2) * 1.05)


def selftest(n_modes: int = 3, n_max: int = 3, seed: int = 0, tol: float = 1e-10) -> list[dict]:
    """Run the second-quantization identities on one truncated basis.

    Returns one record per identity with the measured defect; products of
    two ladder operators are compared on the grades where truncation cannot
    interfere.
    """
    from scipy.linalg import expm

    rng = np.random.default_rng(seed)
    modes = ModeBasis.uniform(n_modes, 1.0)
    fb = FockBasis(modes, n_max)
    g, h = _random_vector(rng, n_modes), _random_vector(rng, n_modes)
    a_g = annihilation_op(g, fb).toarray()
    c_h = creation_op(h, fb).toarray()
    safe1 = fb.safe_indices(1)
    records = []

    def rec(name, value):
        records.append({"check": name, "n_modes": n_modes, "n_max": n_max, "value": float(value),
                        "tolerance": tol, "passed": bool(value <= tol)})

    comm = (a_g @ c_h - c_h @ a_g)[:, safe1]
    target = np.vdot(g, h) * np.eye(fb.dimension)[:, safe1]
    rec("ccr", _maxabs(comm - target) / max(1.0, abs(np.vdot(g, h))))
    rec("adjoint", np.abs(annihilation_op(h, fb).toarray() - c_h.conj().T).max())
    inv_sqrt = np.diag(1.0 / np.sqrt(fb.grades + 1.0))
    nh = np.linalg.norm(h)
    excess = max(np.linalg.norm(c_h @ inv_sqrt, 2), np.linalg.norm(c_h.conj().T @ inv_sqrt, 2)) - nh
    rec("number_bound", max(excess, 0.0))

    b = _random_contraction(rng, n_modes)
    gb = gamma(b, fb).toarray()
    lhs = gb @ c_h
    rhs = creation_op(b @ h, fb).toarray() @ gb
    rec("gamma_creation", _maxabs((lhs - rhs)[:, safe1]))
    lhs = gb @ annihilation_op(b.conj().T @ h, fb).toarray()
    rhs = annihilation_op(h, fb).toarray() @ gb
    rec("gamma_annihilation", np.abs(lhs - rhs).max())
    theta = rng.standard_normal(n_modes)
    ex = expm(1j * dgamma(theta, fb).toarray())
    rec("gamma_exp_dgamma", np.abs(ex - gamma(np.diag(np.exp(1j * theta)), fb).toarray()).max())
    q, _ = np.linalg.qr(rng.standard_normal((n_modes, n_modes)) + 1j * rng.standard_normal((n_modes, n_modes)))
    gu = gamma(q, fb).toarray()
    rec("gamma_unitary", np.abs(gu.conj().T @ gu - np.eye(fb.dimension)).max())

    # identification on disjoint mode subsets of the combined basis
    if n_modes >= 2 and n_max >= 2:
        split = n_modes // 2
        ma, mb_ = np.arange(split), np.arange(split, n_modes)
        na = n_max // 2
        ba = FockBasis(ModeBasis.uniform(len(ma), 1.0), na)
        bb = FockBasis(ModeBasis.uniform(len(mb_), 1.0), n_max - na)
        ident = identification(ba, bb, fb, ma, mb_)
        phi, psi = _random_vector(rng, ba.dimension), _random_vector(rng, bb.dimension)
        out = ident.apply(phi, psi)
        rec("identification_isometry",
            abs(np.linalg.norm(out) - np.linalg.norm(phi) * np.linalg.norm(psi)) / (np.linalg.norm(phi) * np.linalg.norm(psi)))
        rec("identification_vacuum", np.abs(ident.apply(phi, bb.vacuum()) - _embed(phi, ba, fb, ma)).max())
    # eq. a(h) I = I (a(h) (x) 1 + 1 (x) a(h)) in a shared mode basis
    na = max(n_max // 2, 0)
    ba = FockBasis(modes, na)
    bb = FockBasis(modes, n_max - na)
    ident = identification(ba, bb, fb)
    im = ident.matrix.toarray()
    lhs = annihilation_op(h, fb).toarray() @ im
    rhs = im @ (np.kron(annihilation_op(h, ba).toarray(), np.eye(bb.dimension))
                + np.kron(np.eye(ba.dimension), annihilation_op(h, bb).toarray()))
    ok_cols = np.setdiff1d(np.arange(im.shape[1]), ident.overflow)
    rec("identification_annihilation", _maxabs((lhs - rhs)[:, ok_cols]) / max(1.0, nh))
    return records


def _embed(phi, sub: FockBasis, full: FockBasis, mode_map) -> np.ndarray:
    out = np.zeros(full.dimension, dtype=complex)
    for i, occ in enumerate(sub.states):
        o = np.zeros(full.n_modes, dtype=np.int64)
        o[mode_map] = occ
        out[full.index(o)] = phi[i]
    return out
