"""Discretized electron + scalar photon field Hamiltonians.

The electron lives on a Dirichlet grid in one dimension, the photon field on
a truncated Fock space over a uniform momentum grid. For N electrons the
Hamiltonian is

    sum_j [ -Lap_j + sqrt(a)(P_j A(x_j) + A(x_j) P_j) + a A(x_j)^2 ]
        + sum_j v(x_j) + w(x_1 - x_2) + H_f  (+ optional spin surrogate)

with A(x) = a(G_x) + a*(G_x), P the central-difference momentum and Lap the
three-point Laplacian (units with 2m = 1). A(x)^2 is assembled normal-ordered,
which makes the truncated operator an exact compression of the untruncated
one; ground energies are therefore nonincreasing in ``n_max``.

Basis order: electron configuration major, internal (spin (x) Fock) minor.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Literal

import numpy as np
import scipy.sparse as sp

from .fock import (
    FockBasis,
    FockOperator,
    ModeBasis,
    annihilation_op,
    creation_op,
    dgamma,
    field_op,
)

__all__ = [
    "ElectronGrid",
    "Profile",
    "PotentialSpec",
    "CouplingSpec",
    "ModelSpec",
    "AssembledHamiltonian",
    "PART_TAGS",
    "build_form_factor",
    "assemble_hamiltonian",
    "drop_external_potential",
    "dirichlet_restrict",
    "ir_cutoff_variant",
    "soft_sector_check",
    "localization_error",
    "field_bound_check",
    "coupling_constants",
    "ir_shift_constant",
    "electron_hamiltonian",
    "lattice_dirichlet_ground",
]

PART_TAGS = ("kinetic", "interaction", "potential", "field")
MAX_TOTAL_DIMENSION = 200_000


# ----------------------------------------------------------------------------
# specifications
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ElectronGrid:
    """n interior points of (-L, L) with Dirichlet walls at +-L."""

    extent: float
    points: int

    def __post_init__(self):
        if self.points < 8:
            raise ValueError("electron grid needs at least 8 points")
        if not self.extent > 0:
            raise ValueError("grid extent must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / (self.points + 1)

    @property
    def coordinates(self) -> np.ndarray:
        return -self.extent + (np.arange(self.points) + 1) * self.spacing

    def laplacian(self) -> sp.csr_matrix:
        """-d^2/dx^2, three-point stencil."""
        h2 = self.spacing**2
        n = self.points
        return sp.diags([np.full(n - 1, -1.0 / h2), np.full(n, 2.0 / h2), np.full(n - 1, -1.0 / h2)],
                        [-1, 0, 1], format="csr", dtype=complex)

    def momentum(self) -> sp.csr_matrix:
        """-i d/dx by central differences (Hermitian)."""
        c = 1.0 / (2.0 * self.spacing)
        n = self.points
        return sp.diags([np.full(n - 1, 1j * c), np.full(n - 1, -1j * c)], [-1, 1], format="csr")


def lattice_dirichlet_ground(grid: ElectronGrid) -> float:
    """Lowest eigenvalue of the three-point Dirichlet Laplacian."""
    h = grid.spacing
    return 4.0 / h**2 * math.sin(math.pi / (2 * (grid.points + 1))) ** 2


_PROFILES: dict[str, Callable[[np.ndarray, float, float], np.ndarray]] = {
    "zero": lambda x, a, s: np.zeros_like(x),
    "gaussian": lambda x, a, s: a * np.exp(-(x**2) / (2 * s**2)),
    "soft_coulomb": lambda x, a, s: a / np.sqrt(x**2 + s**2),
    "square": lambda x, a, s: np.where(np.abs(x) <= s, a, 0.0),
}


@dataclass(frozen=True)
class Profile:
    """Radial potential profile ``amplitude * shape(|x| / width)``."""

    kind: str = "zero"
    amplitude: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in _PROFILES:
            raise ValueError(f"unknown profile kind {self.kind!r}; choose from {sorted(_PROFILES)}")
        if self.kind != "zero" and not self.width > 0:
            raise ValueError("profile width must be positive")

    def __call__(self, x) -> np.ndarray:
        return _PROFILES[self.kind](np.asarray(x, dtype=float), self.amplitude, self.width)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.amplitude == 0.0

    def envelope(self, r) -> np.ndarray:
        """Decreasing majorant of |profile| for |x| >= r."""
        r = np.asarray(r, dtype=float)
        return np.abs(self(r)) if self.kind != "square" else np.where(r <= self.width, abs(self.amplitude), 0.0)


@dataclass(frozen=True)
class PotentialSpec:
    v: Profile = field(default_factory=Profile)
    w: Profile = field(default_factory=Profile)
    decay_tolerance: float = 1e-6

    def decay_radius(self) -> float:
        """Radius beyond which |v| and |w| stay below ``decay_tolerance``."""
        out = 0.0
        for p in (self.v, self.w):
            if p.is_zero:
                continue
            if p.kind == "gaussian":
                ratio = abs(p.amplitude) / self.decay_tolerance
                out = max(out, p.width * math.sqrt(2 * math.log(ratio)) if ratio > 1 else 0.0)
            elif p.kind == "soft_coulomb":
                out = max(out, math.sqrt(max((p.amplitude / self.decay_tolerance) ** 2 - p.width**2, 0.0)))
            else:
                out = max(out, p.width)
        return out


@dataclass(frozen=True)
class CouplingSpec:
    alpha: float = 0.0
    uv_cutoff: float = 1.0
    ir_cutoff: float = 0.0
    spin_g: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not (self.uv_cutoff > 0 and 0 <= self.ir_cutoff <= self.uv_cutoff):
            raise ValueError("need uv_cutoff > 0 and 0 <= ir_cutoff <= uv_cutoff")


Statistics = Literal["distinguishable", "antisymmetric"]


@dataclass(frozen=True)
class ModelSpec:
    grid: ElectronGrid
    coupling: CouplingSpec = field(default_factory=CouplingSpec)
    potentials: PotentialSpec = field(default_factory=PotentialSpec)
    n_electrons: int = 1
    statistics: Statistics = "distinguishable"
    n_modes: int = 4
    n_max: int = 2
    max_dimension: int = MAX_TOTAL_DIMENSION

    def __post_init__(self):
        if self.n_electrons not in (1, 2):
            raise ValueError("only N = 1 or N = 2 electrons are supported")
        if self.statistics not in ("distinguishable", "antisymmetric"):
            raise ValueError(f"unknown statistics {self.statistics!r}")
        if self.statistics == "antisymmetric" and self.coupling.spin_g != 0:
            raise ValueError("the spin surrogate is only available for distinguishable electrons")
        if self.n_modes < 1 or self.n_max < 0:
            raise ValueError("need n_modes >= 1 and n_max >= 0")

    @property
    def mode_basis(self) -> ModeBasis:
        return ModeBasis.uniform(self.n_modes, self.coupling.uv_cutoff, self.coupling.ir_cutoff)

    @property
    def spin_enabled(self) -> bool:
        return self.coupling.spin_g != 0

    @property
    def n_configurations(self) -> int:
        n = self.grid.points
        if self.n_electrons == 1:
            return n
        return n * n if self.statistics == "distinguishable" else n * (n - 1) // 2

    @property
    def fock_dimension(self) -> int:
        return math.comb(self.n_modes + self.n_max, self.n_modes)

    @property
    def internal_dimension(self) -> int:
        return (2**self.n_electrons if self.spin_enabled else 1) * self.fock_dimension

    @property
    def dimension(self) -> int:
        return self.n_configurations * self.internal_dimension

    def with_(self, **changes) -> "ModelSpec":
        """Copy with changes; nested keys ``alpha``, ``v``, ``extent``... are routed."""
        coupling = {k: changes.pop(k) for k in ("alpha", "uv_cutoff", "ir_cutoff", "spin_g") if k in changes}
        pots = {k: changes.pop(k) for k in ("v", "w") if k in changes}
        grid = {k: changes.pop(k) for k in ("extent", "points") if k in changes}
        spec = self
        if coupling:
            spec = replace(spec, coupling=replace(spec.coupling, **coupling))
        if pots:
            spec = replace(spec, potentials=replace(spec.potentials, **pots))
        if grid:
            spec = replace(spec, grid=replace(spec.grid, **grid))
        return replace(spec, **changes) if changes else spec

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        grid = ElectronGrid(**d.pop("grid"))
        coupling = CouplingSpec(**d.pop("coupling", {}))
        pots = dict(d.pop("potentials", {}))
        potentials = PotentialSpec(v=Profile(**pots.pop("v", {})), w=Profile(**pots.pop("w", {})), **pots)
        return cls(grid=grid, coupling=coupling, potentials=potentials, **d)


# ----------------------------------------------------------------------------
# form factor
# ----------------------------------------------------------------------------

def build_form_factor(coupling: CouplingSpec, x, mode_basis: ModeBasis) -> np.ndarray:
    """G_x(k) = |k|^(-1/2) 1{mu <= |k| <= Lambda} exp(-i k x) sqrt(w_k).

    ``x`` may be an array, in which case rows index positions.
    """
    k = mode_basis.momenta
    ak = np.abs(k)
    # a k = 0 node (odd uniform grids) is left uncoupled: |k|^(-1/2) has no finite value there
    mask = (ak >= coupling.ir_cutoff) & (ak <= coupling.uv_cutoff) & (ak > 0)
    base = np.where(mask, 1.0 / np.sqrt(np.where(mask, ak, 1.0)), 0.0) * np.sqrt(mode_basis.weights)
    x = np.asarray(x, dtype=float)
    return np.exp(-1j * np.multiply.outer(x, k)) * base


def _norms(g: np.ndarray, omega: np.ndarray) -> dict[str, float]:
    inv = np.where(omega > 0, 1.0 / np.sqrt(np.where(omega > 0, omega, 1.0)), 0.0)
    return {
        "g": float(np.sum(np.abs(g) ** 2)),
        "w_minus_half": float(np.sum(np.abs(g * inv) ** 2)),
        "w_half": float(np.sum(omega * np.abs(g) ** 2)),
        "w_one": float(np.sum(omega**2 * np.abs(g) ** 2)),
    }


def coupling_constants(g: np.ndarray, omega: np.ndarray) -> tuple[float, float]:
    """(c1, c2) with A^2 <= c1 H_f + c2 for A = a(g) + a*(g).

    c1 = 4 ||w^(-1/2) g||^2, c2 = 2 ||g||^2 + c1.
    """
    n = _norms(g, omega)
    c1 = 4.0 * n["w_minus_half"]
    return c1, 2.0 * n["g"] + c1


def _kappa(g: np.ndarray, omega: np.ndarray) -> float:
    # tight form of A^2 <= 4 a*a + 2||g||^2 <= kappa (H_f + 1)
    n = _norms(g, omega)
    return max(4.0 * n["w_minus_half"], 2.0 * n["g"])


# ----------------------------------------------------------------------------
# assembled operators
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AssembledHamiltonian:
    """Assembled Hamiltonian with part-wise bookkeeping.

    ``components`` holds the finer pieces (laplacian, cross, a_squared, spin,
    v, w, field); ``parts`` groups them into the four tags. ``configurations``
    has one row of electron coordinates per configuration.
    """

    total: FockOperator
    parts: dict[str, FockOperator]
    components: dict[str, sp.csr_matrix]
    spec: ModelSpec
    fock_basis: FockBasis
    configurations: np.ndarray
    internal_dimension: int
    electron_isometry: sp.csr_matrix | None = None

    @property
    def dimension(self) -> int:
        return self.total.dimension

    @property
    def n_configurations(self) -> int:
        return len(self.configurations)

    @property
    def radii(self) -> np.ndarray:
        """|X| = (sum_j x_j^2)^(1/2) per configuration."""
        return np.sqrt(np.sum(self.configurations**2, axis=1))

    def lift(self, per_config) -> np.ndarray:
        """Repeat configuration samples over the internal factor."""
        return np.repeat(np.asarray(per_config), self.internal_dimension)

    def marginal_density(self, psi: np.ndarray, electron: int = 0) -> np.ndarray:
        """One-electron position density of ``psi`` on the grid."""
        p = np.sum(np.abs(np.asarray(psi).reshape(self.n_configurations, -1)) ** 2, axis=1)
        x = self.spec.grid.coordinates
        idx = np.searchsorted(x, self.configurations[:, electron])
        idx = np.clip(idx, 0, len(x) - 1)
        out = np.zeros(len(x))
        np.add.at(out, idx, p)
        return out

    def internal_indices(self, mask: np.ndarray) -> np.ndarray:
        """Full-space indices for internal states selected by ``mask``."""
        sel = np.flatnonzero(mask)
        return (np.arange(self.n_configurations)[:, None] * self.internal_dimension + sel[None, :]).ravel()

    def with_parts(self, **replacements: sp.csr_matrix) -> "AssembledHamiltonian":
        comps = dict(self.components)
        comps.update(replacements)
        return _finalize(comps, self.spec, self.fock_basis, self.configurations,
                         self.internal_dimension, self.electron_isometry)


def _finalize(comps, spec, fb, configs, d_int, iso) -> AssembledHamiltonian:
    groups = {
        "kinetic": ("laplacian", "cross"),
        "interaction": ("a_squared", "spin"),
        "potential": ("v", "w"),
        "field": ("field",),
    }
    parts = {}
    total = None
    for tag, names in groups.items():
        m = sum((comps[n] for n in names), sp.csr_matrix(comps["field"].shape, dtype=complex))
        m = sp.csr_matrix(m)
        parts[tag] = FockOperator(m, hermitian=True, tag=tag)
        total = m if total is None else total + m
    total = FockOperator(total.tocsr(), hermitian=True, tag="total")
    defect = total.hermiticity_defect()
    if defect > 1e-12:
        raise RuntimeError(f"assembled Hamiltonian is not Hermitian (defect {defect:.3e})")
    return AssembledHamiltonian(total, parts, comps, spec, fb, configs, d_int, iso)


def _configurations(spec: ModelSpec) -> tuple[np.ndarray, sp.csr_matrix | None]:
    x = spec.grid.coordinates
    n = len(x)
    if spec.n_electrons == 1:
        return x[:, None], None
    prod = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2)
    if spec.statistics == "distinguishable":
        return prod, None
    i, j = np.triu_indices(n, k=1)
    rows = np.concatenate([i * n + j, j * n + i])
    cols = np.concatenate([np.arange(len(i))] * 2)
    vals = np.concatenate([np.full(len(i), 1.0), np.full(len(i), -1.0)]) / math.sqrt(2.0)
    iso = sp.csr_matrix((vals, (rows, cols)), shape=(n * n, len(i)), dtype=complex)
    return np.column_stack([x[i], x[j]]), iso


def _one_electron_lift(op: sp.spmatrix, electron: int, n_electrons: int, n: int) -> sp.csr_matrix:
    if n_electrons == 1:
        return sp.csr_matrix(op)
    eye = sp.identity(n, format="csr")
    return sp.kron(op, eye, format="csr") if electron == 0 else sp.kron(eye, op, format="csr")


def _coordinate_field(g_rows: np.ndarray, adag: list[sp.csr_matrix], adj: bool) -> sp.csr_matrix:
    # sum_m diag(g[:, m]) (x) a*_m   (or its adjoint-side counterpart)
    out = None
    for m, op in enumerate(adag):
        coef = g_rows[:, m]
        if not np.any(coef):
            continue
        term = sp.kron(sp.diags(np.conj(coef) if adj else coef), op.conj().T if adj else op, format="csr")
        out = term if out is None else out + term
    return out


def _a_squared(g_rows: np.ndarray, adag: list[sp.csr_matrix]) -> sp.csr_matrix:
    """Normal-ordered A(x)^2 = a^2 + a*^2 + 2 a* a + ||G||^2, block-diagonal in x."""
    d = adag[0].shape[0]
    nconf = g_rows.shape[0]
    out = sp.kron(sp.diags(np.sum(np.abs(g_rows) ** 2, axis=1)), sp.identity(d), format="csr")
    active = [m for m in range(len(adag)) if np.any(g_rows[:, m])]
    for m in active:
        for mp in active:
            up = adag[m] @ adag[mp]
            mixed = adag[m] @ adag[mp].conj().T
            c_up = g_rows[:, m] * g_rows[:, mp]
            c_mix = g_rows[:, m] * np.conj(g_rows[:, mp])
            out = out + sp.kron(sp.diags(c_up), up) + sp.kron(sp.diags(np.conj(c_up)), up.conj().T)
            out = out + 2.0 * sp.kron(sp.diags(c_mix), mixed)
    assert out.shape == (nconf * d, nconf * d)
    return out.tocsr()


def assemble_hamiltonian(spec: ModelSpec) -> AssembledHamiltonian:
    """Assemble the full Hamiltonian of ``spec`` with tagged parts."""
    if spec.dimension > spec.max_dimension:
        raise ValueError(f"total dimension {spec.dimension} exceeds cap {spec.max_dimension}")
    grid = spec.grid
    n = grid.points
    ne = spec.n_electrons
    mb = spec.mode_basis
    fb = FockBasis(mb, spec.n_max)
    configs, iso = _configurations(spec)
    # work in the distinguishable product space, compress to the antisymmetric one at the end
    xs = grid.coordinates
    prod_configs = (np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
                    if ne == 2 else xs[:, None])
    nconf = len(prod_configs)

    zeros = np.zeros(mb.size)
    fock_adag = [creation_op(np.eye(mb.size)[m], fb).matrix for m in range(mb.size)]
    n_spin = 2**ne if spec.spin_enabled else 1
    eye_spin = sp.identity(n_spin, format="csr")
    adag = [sp.kron(eye_spin, a, format="csr") for a in fock_adag]
    d_int = n_spin * fb.dimension
    eye_int = sp.identity(d_int, format="csr", dtype=complex)
    eye_conf = sp.identity(nconf, format="csr", dtype=complex)

    alpha = spec.coupling.alpha
    lap = sp.csr_matrix((nconf * d_int,) * 2, dtype=complex)
    cross = lap.copy()
    a2 = lap.copy()
    spin = lap.copy()
    for e in range(ne):
        lap = lap + sp.kron(_one_electron_lift(grid.laplacian(), e, ne, n), eye_int, format="csr")
        if alpha == 0:
            continue
        g_rows = build_form_factor(spec.coupling, prod_configs[:, e], mb)
        up = _coordinate_field(g_rows, adag, adj=False)
        if up is None:
            continue
        d_a = up + up.conj().T
        p_e = sp.kron(_one_electron_lift(grid.momentum(), e, ne, n), eye_int, format="csr")
        cross = cross + math.sqrt(alpha) * (p_e @ d_a + d_a @ p_e)
        a2 = a2 + alpha * _a_squared(g_rows, adag)
        if spec.spin_enabled:
            sz = np.diag([1.0, -1.0])
            sz_e = sp.kron(sz, np.eye(2)) if (ne == 2 and e == 0) else (
                sp.kron(np.eye(2), sz) if ne == 2 else sp.csr_matrix(sz))
            sz_int = sp.kron(sz_e, sp.identity(fb.dimension), format="csr")
            # Phi(i omega G_x): i omega G_x rows
            h_rows = 1j * g_rows * mb.frequencies[None, :]
            phi_up = _coordinate_field(h_rows, adag, adj=False)
            phi = phi_up + phi_up.conj().T
            spin = spin + 0.5 * spec.coupling.spin_g * math.sqrt(alpha) * (
                sp.kron(eye_conf, sz_int, format="csr") @ phi)
    del zeros

    vx = spec.potentials.v(prod_configs).sum(axis=1)
    v = sp.kron(sp.diags(vx.astype(complex)), eye_int, format="csr")
    if ne == 2:
        wx = spec.potentials.w(prod_configs[:, 0] - prod_configs[:, 1])
    else:
        wx = np.zeros(nconf)
    w = sp.kron(sp.diags(wx.astype(complex)), eye_int, format="csr")
    hf_fock = dgamma(mb.frequencies, fb).matrix
    hf = sp.kron(eye_conf, sp.kron(eye_spin, hf_fock), format="csr")

    comps = {"laplacian": lap, "cross": cross, "a_squared": a2, "spin": spin, "v": v, "w": w, "field": hf}
    if iso is not None:
        big = sp.kron(iso, eye_int, format="csr")
        comps = {k: (big.conj().T @ m @ big).tocsr() for k, m in comps.items()}
    for k in comps:
        comps[k] = sp.csr_matrix(comps[k], dtype=complex)
        comps[k].sum_duplicates()
    return _finalize(comps, spec, fb, configs, d_int, iso)


def electron_hamiltonian(spec: ModelSpec, include_v: bool = True) -> sp.csr_matrix:
    """Pure electron Schroedinger operator (no field) on the configuration space."""
    spec0 = spec.with_(alpha=0.0, n_max=0, spin_g=0.0)
    h = assemble_hamiltonian(spec0)
    m = h.components["laplacian"] + h.components["w"]
    if include_v:
        m = m + h.components["v"]
    return sp.csr_matrix(m)


def drop_external_potential(H: AssembledHamiltonian) -> AssembledHamiltonian:
    """Remove v; keep w and every other component unchanged."""
    spec = H.spec.with_(v=Profile())
    comps = dict(H.components)
    comps["v"] = sp.csr_matrix(comps["v"].shape, dtype=complex)
    return _finalize(comps, spec, H.fock_basis, H.configurations, H.internal_dimension, H.electron_isometry)


def dirichlet_restrict(H: AssembledHamiltonian, R: float,
                       operator: FockOperator | None = None) -> FockOperator:
    """Compress to configurations with |X| >= R; ``support`` holds the kept indices."""
    if R >= H.spec.grid.extent * math.sqrt(H.spec.n_electrons):
        raise ValueError(f"R={R} leaves no room inside the box")
    keep_conf = H.radii >= R - 1e-12
    if not np.any(keep_conf):
        raise ValueError(f"Dirichlet restriction at R={R} leaves an empty subspace")
    keep = np.flatnonzero(np.repeat(keep_conf, H.internal_dimension))
    m = (operator or H.total).matrix
    sub = m[keep][:, keep].tocsr()
    return FockOperator(sub, hermitian=True, tag=f"dirichlet R={R:g}", support=keep)


def ir_cutoff_variant(spec: ModelSpec, mu: float) -> ModelSpec:
    """Same model with coupling removed on modes with |k| < mu (H_f keeps them)."""
    if not 0 <= mu <= spec.coupling.uv_cutoff:
        raise ValueError("need 0 <= mu <= uv_cutoff")
    return spec.with_(ir_cutoff=float(mu))


# ----------------------------------------------------------------------------
# checks
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SoftSectorReport:
    full_ground: float
    soft_vacuum_ground: float
    difference: float
    soft_modes: list[int]
    sector_dimension: int


def soft_sector_check(H: AssembledHamiltonian, tol: float = 1e-10) -> SoftSectorReport:
    """Compare the ground energy with its soft-vacuum-sector restriction."""
    from .spectral import eigs_lowest

    mb = H.fock_basis.mode_basis
    if not mb.ir_cutoff > 0:
        raise ValueError("soft_sector_check needs mu > 0")
    soft = mb.soft_set
    fock_mask = np.all(H.fock_basis.states[:, soft] == 0, axis=1) if soft.size else np.ones(
        H.fock_basis.dimension, bool)
    n_spin = H.internal_dimension // H.fock_basis.dimension
    mask = np.tile(fock_mask, n_spin)
    idx = H.internal_indices(mask)
    sub = FockOperator(H.total.matrix[idx][:, idx], hermitian=True)
    e_full = eigs_lowest(H.total, 1, tol).eigenvalues[0]
    e_soft = eigs_lowest(sub, 1, tol).eigenvalues[0]
    return SoftSectorReport(float(e_full), float(e_soft), float(abs(e_full - e_soft)),
                            soft.tolist(), int(len(idx)))


@dataclass(frozen=True)
class LocalizationErrorReport:
    operator: FockOperator
    norm: float
    bound: float
    max_gradient_sq: float
    part_norms: dict[str, float]


def _double_commutator(m: sp.csr_matrix, f: np.ndarray) -> sp.csr_matrix:
    # (2 f H f - f^2 H - H f^2)_ij = -(f_i - f_j)^2 H_ij
    coo = m.tocoo()
    d = f[coo.row] - f[coo.col]
    return sp.csr_matrix((-(d**2) * coo.data, (coo.row, coo.col)), shape=m.shape)


def localization_error(H: AssembledHamiltonian, f) -> LocalizationErrorReport:
    """L(f) = 2 f H f - f^2 H - H f^2 for real configuration samples ``f``.

    Only the x-nonlocal kinetic part contributes. ``bound`` is the Schur
    row-sum bound max_i sum_j (f_i - f_j)^2 ||K_ij||, which equals
    2 max (df/h)^2 for one electron at zero coupling.
    """
    f = np.asarray(f)
    if np.iscomplexobj(f) and np.any(np.imag(f) != 0):
        raise ValueError("localization weight must be real")
    f = np.real(f).astype(float)
    if f.shape != (H.n_configurations,):
        raise ValueError("need one sample per electron configuration")
    fl = H.lift(f)
    parts = {tag: _double_commutator(op.matrix, fl) for tag, op in H.parts.items()}
    total = _double_commutator(H.total.matrix, fl)
    op = FockOperator(total, hermitian=True, tag="localization-error")

    def _norm(m):
        if m.nnz == 0:
            return 0.0
        from .spectral import operator_norm
        return operator_norm(m)

    # block norms of the kinetic hops between configurations
    d = H.internal_dimension
    kin = H.parts["kinetic"].matrix.tocoo()
    ci, cj = kin.row // d, kin.col // d
    off = ci != cj
    blocks: dict[tuple[int, int], float] = {}
    if np.any(off):
        keys = ci[off] * H.n_configurations + cj[off]
        order = np.argsort(keys, kind="stable")
        uniq, start = np.unique(keys[order], return_index=True)
        rows, cols, vals = kin.row[off][order], kin.col[off][order], kin.data[off][order]
        bounds = list(start[1:]) + [len(order)]
        for key, s, t in zip(uniq, start, bounds):
            blk = np.zeros((d, d), dtype=complex)
            blk[rows[s:t] % d, cols[s:t] % d] = vals[s:t]
            blocks[(int(key // H.n_configurations), int(key % H.n_configurations))] = float(
                np.linalg.norm(blk, 2))
    row_sum = np.zeros(H.n_configurations)
    grad = 0.0
    h = H.spec.grid.spacing
    for (i, j), nb in blocks.items():
        row_sum[i] += (f[i] - f[j]) ** 2 * nb
        grad = max(grad, ((f[i] - f[j]) / h) ** 2)
    return LocalizationErrorReport(op, _norm(total), float(row_sum.max(initial=0.0)), grad,
                                   {k: _norm(m) for k, m in parts.items()})


@dataclass(frozen=True)
class FieldBoundReport:
    c1: float
    c2: float
    min_margin_pointwise: float
    worst_point: float
    kinetic_C: float
    kinetic_D: float
    kinetic_margin: float
    tolerance: float
    certified: bool


def field_bound_check(H: AssembledHamiltonian, tol: float = 1e-8, scale: float = 1.0) -> FieldBoundReport:
    """Certify A(x)^2 <= c1 H_f + c2 for every grid x and the kinetic bound

        sum_j (-Lap_j) <= C (sum_j K_j + H_f) + D,   K_j = (p_j + sqrt(a) A(x_j))^2 part,

    with c1 = 4||w^(-1/2) G||^2, c2 = 2||G||^2 + c1, C = max(2, 2 a N c1),
    D = 2 a N c2. ``scale`` multiplies G throughout.
    """
    from .spectral import eigs_lowest

    spec = H.spec
    mb = spec.mode_basis
    fb = H.fock_basis
    omega = mb.frequencies
    xs = spec.grid.coordinates
    g_rows = scale * build_form_factor(spec.coupling, xs, mb)
    c1, c2 = coupling_constants(g_rows[0], omega)
    hf = dgamma(omega, fb).matrix.toarray()
    worst, worst_x = np.inf, float("nan")
    adag = [creation_op(np.eye(mb.size)[m], fb).matrix for m in range(mb.size)]
    for x, g in zip(xs, g_rows):
        a2 = _a_squared(g[None, :], adag).toarray()
        margin = float(np.linalg.eigvalsh(c1 * hf + c2 * np.eye(fb.dimension) - a2)[0])
        if margin < worst:
            worst, worst_x = margin, float(x)

    alpha = spec.coupling.alpha
    ne = spec.n_electrons
    big_c = max(2.0, 2.0 * alpha * ne * c1)
    big_d = 2.0 * alpha * ne * c2
    comps = H.components
    kin = comps["laplacian"] + scale * comps["cross"] + scale**2 * comps["a_squared"]
    check = big_c * (kin + comps["field"]) + big_d * sp.identity(H.dimension) - comps["laplacian"]
    kin_margin = float(eigs_lowest(FockOperator(check, hermitian=True), 1, 1e-10).eigenvalues[0])
    ok = worst >= -tol and kin_margin >= -tol
    return FieldBoundReport(c1, c2, worst, worst_x, big_c, big_d, kin_margin, tol, bool(ok))


@dataclass(frozen=True)
class IRConstant:
    eta: float
    kappa: float
    kappa_ref: float
    kappa_spin: float


def ir_shift_constant(spec: ModelSpec, mu: float, mu_ref: float) -> IRConstant:
    """eta with +-(H_{mu_ref} - H_mu) <= eta sum_j (-Lap_j + H_f + 1).

    The band mu_ref <= |k| < mu is the dropped coupling dG. With
    kappa(g) = max(4||w^(-1/2) g||^2, 2||g||^2) one has A(g)^2 <= kappa (H_f + 1),
    and Cauchy-Schwarz on the three difference terms gives
    eta = sqrt(a k) + 2 a sqrt(k k') + a k + (|g|/2) sqrt(a k_B).
    """
    mb = spec.mode_basis
    omega = mb.frequencies
    g_ref = build_form_factor(replace(spec.coupling, ir_cutoff=mu_ref), 0.0, mb)
    g_mu = build_form_factor(replace(spec.coupling, ir_cutoff=mu), 0.0, mb)
    dg = g_ref - g_mu
    k = _kappa(dg, omega)
    kp = _kappa(g_mu, omega)
    n = _norms(dg, omega)
    kb = max(4.0 * n["w_half"], 2.0 * n["w_one"])
    a = spec.coupling.alpha
    eta = math.sqrt(a * k) + 2 * a * math.sqrt(k * kp) + a * k + 0.5 * abs(spec.coupling.spin_g) * math.sqrt(a * kb)
    return IRConstant(eta, k, kp, kb)
