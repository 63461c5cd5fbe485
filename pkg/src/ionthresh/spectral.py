"""Eigensolvers, spectral projectors, resolvent solves and the
almost-analytic (Helffer-Sjoestrand) functional calculus."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fock import FockOperator, glue

__all__ = [
    "DENSE_LIMIT",
    "EigenResult",
    "ConvergenceError",
    "EigenvalueCollision",
    "eigs_lowest",
    "operator_norm",
    "spectral_projector",
    "spectral_subspace",
    "shifted_solve",
    "SmoothBumpSpec",
    "HSQuadratureSpec",
    "hs_function",
    "hs_scalar",
    "eig_function",
]

DENSE_LIMIT = 4000
DEFAULT_SEED = 20240917


_SEED = {"value": DEFAULT_SEED}


def set_seed(seed: int) -> None:
    """Set the process-wide seed used by randomized start vectors."""
    _SEED["value"] = int(seed)


def current_seed(seed: int | None = None) -> int:
    return _SEED["value"] if seed is None else int(seed)


class ConvergenceError(RuntimeError):
    """An iterative method did not reach its tolerance within budget."""


class EigenvalueCollision(ValueError):
    """A spectral cut falls on an eigenvalue; the projector rank is ill-defined."""

    def __init__(self, cut: float, eigenvalue: float, tol: float):
        super().__init__(f"cut {cut!r} is within {tol:g} of eigenvalue {eigenvalue!r}")
        self.cut = cut
        self.eigenvalue = eigenvalue


def _as_matrix(H):
    if isinstance(H, FockOperator):
        return H.matrix
    if sp.issparse(H):
        return H.tocsr()
    return np.asarray(H)


def _dense(m) -> np.ndarray:
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def _norm_bound(m) -> float:
    # infinity norm: an upper bound on the spectral norm of a Hermitian matrix
    if sp.issparse(m):
        return float(abs(m).sum(axis=1).max()) if m.nnz else 0.0
    return float(np.abs(m).sum(axis=1).max()) if m.size else 0.0


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    method: str
    iterations: int
    seed: int | None = None

    @property
    def ground(self) -> float:
        return float(self.eigenvalues[0])


def _bandwidth(m) -> int:
    coo = m.tocoo()
    return int(np.abs(coo.row - coo.col).max()) if coo.nnz else 0


def gershgorin_lower(m) -> float:
    sm = sp.csr_matrix(m)
    diag = np.real(sm.diagonal())
    radius = np.asarray(abs(sm).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - radius))


def eigs_lowest(H, k: int = 1, tol: float = 1e-10, *, seed: int | None = None,
                dense_limit: int = DENSE_LIMIT, maxiter: int | None = None,
                shift_invert: bool | None = None) -> EigenResult:
    """k lowest eigenpairs of a Hermitian operator.

    Dense LAPACK up to ``dense_limit``; above it, implicitly restarted
    Lanczos (ARPACK, which keeps the Krylov basis fully reorthogonalized)
    from a seeded start vector. ``shift_invert`` runs Lanczos on
    (H - s)^-1 with s below the Gershgorin bound; by default it is used when
    the band profile keeps the sparse LU small. Each pair is checked for
    ||Hv - lv|| <= tol * ||H||.
    """
    m = _as_matrix(H)
    dim = m.shape[0]
    if not 1 <= k <= dim:
        raise ValueError(f"k={k} outside [1, {dim}]")
    scale = max(_norm_bound(m), 1.0)
    if dim <= dense_limit:
        vals, vecs = sla.eigh(_dense(m), subset_by_index=[0, k - 1], driver="evr")
        method, iters, used_seed = "dense", 0, None
    else:
        m = sp.csr_matrix(m)
        if shift_invert is None:
            shift_invert = _bandwidth(m) * dim <= 4e7
        rng = np.random.default_rng(current_seed(seed))
        v0 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        ncv = min(dim, max(2 * k + 1, 24))
        try:
            if shift_invert:
                sigma = gershgorin_lower(m) - 1.0
                vals, vecs = spla.eigsh(sp.csc_matrix(m), k=k, sigma=sigma, which="LM", v0=v0,
                                        ncv=ncv, tol=tol * 1e-2, maxiter=maxiter or 20 * dim)
                method = "shift-invert-lanczos"
            else:
                vals, vecs = spla.eigsh(m, k=k, which="SA", tol=tol * 1e-2, v0=v0, ncv=ncv,
                                        maxiter=maxiter or 20 * dim)
                method = "lanczos"
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos did not converge for k={k} (dimension {dim})") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        iters, used_seed = -1, current_seed(seed)
    res = np.linalg.norm(m @ vecs - vecs * vals, axis=0)
    if np.any(res > max(tol, 1e-13) * scale * 10):
        raise ConvergenceError(f"eigen residuals {res.max():.3e} exceed {tol:g} * ||H||")
    return EigenResult(np.asarray(vals, float), vecs, res, method, iters, used_seed)


def operator_norm(A, *, hermitian: bool = True, seed: int | None = None, rtol: float = 1e-10) -> float:
    """Spectral norm; dense for small operators, Lanczos otherwise."""
    m = _as_matrix(A)
    dim = m.shape[0]
    if dim <= DENSE_LIMIT:
        d = _dense(m)
        if hermitian:
            w = np.linalg.eigvalsh(d)
            return float(max(abs(w[0]), abs(w[-1])))
        return float(np.linalg.norm(d, 2))
    rng = np.random.default_rng(current_seed(seed))
    v0 = rng.standard_normal(dim) + 0j
    if hermitian:
        w = spla.eigsh(m, k=1, which="LM", tol=rtol, v0=v0, return_eigenvectors=False)
        return float(abs(w[0]))
    s = spla.svds(m, k=1, tol=rtol, v0=v0, return_singular_vectors=False)
    return float(s[0])


def spectral_subspace(H, cut: float, tol: float = 1e-9, *, seed: int | None = None,
                      dense_limit: int = 1000):
    """(eigenvalues, eigenvectors) of all eigenpairs with eigenvalue <= cut.

    Dense up to ``dense_limit``; above it, shift-invert Lanczos anchored
    below the Gershgorin lower bound, doubling k until an eigenvalue beyond
    the cut is seen. Raises EigenvalueCollision if an eigenvalue lies within
    ``tol`` of the cut.
    """
    m = _as_matrix(H)
    dim = m.shape[0]
    if dim <= dense_limit:
        vals, vecs = np.linalg.eigh(_dense(m))
    else:
        sm = sp.csc_matrix(m)
        sigma = gershgorin_lower(sm) - 1.0
        rng = np.random.default_rng(current_seed(seed))
        v0 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        k = 6
        while True:
            kk = min(k, dim - 2)
            vals, vecs = spla.eigsh(sm, k=kk, sigma=sigma, which="LM", v0=v0, tol=1e-14)
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
            if vals[-1] > cut + tol or kk >= dim - 2:
                break
            k *= 2
    near = np.abs(vals - cut)
    if near.size and near.min() < tol:
        i = int(near.argmin())
        raise EigenvalueCollision(cut, float(vals[i]), tol)
    sel = vals <= cut
    return vals[sel], vecs[:, sel]


def spectral_projector(H, cut: float, tol: float = 1e-9) -> FockOperator:
    """Orthogonal projector onto eigenvectors with eigenvalue <= cut."""
    _, vecs = spectral_subspace(H, cut, tol)
    p = vecs @ vecs.conj().T
    return FockOperator(sp.csr_matrix(p), hermitian=True, tag=f"projector<= {cut:g}")


def shifted_solve(H, z: complex, rhs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Solve (z - H) x = rhs; GMRES first, sparse LU as fallback."""
    m = _as_matrix(H)
    dim = m.shape[0]
    rhs = np.asarray(rhs, dtype=complex)
    nb = np.linalg.norm(rhs)
    if nb == 0:
        return np.zeros_like(rhs)
    shifted = (z * sp.identity(dim, format="csr") - m) if sp.issparse(m) else z * np.eye(dim) - m
    x = None
    if sp.issparse(m) and dim > 400:
        x, info = spla.gmres(shifted, rhs, rtol=tol * 0.1, atol=0.0, restart=min(dim, 200),
                             maxiter=50)
        if info != 0:
            x = None
    if x is None:
        x = spla.splu(sp.csc_matrix(shifted)).solve(rhs) if sp.issparse(shifted) else np.linalg.solve(shifted, rhs)
    if np.linalg.norm(shifted @ x - rhs) > tol * nb * 10:
        raise ConvergenceError(f"shifted solve at z={z} did not reach tolerance")
    return x


# ----------------------------------------------------------------------------
# almost-analytic functional calculus
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothBumpSpec:
    """g = 1 on [lower, threshold], 0 outside [lower - lower_width, threshold + margin/2].

    ``lower`` should sit below the spectrum so that g(H) = E-cutoff at threshold.
    """

    threshold: float
    margin: float
    lower: float
    lower_width: float = 1.0

    def __post_init__(self):
        if not (self.margin > 0 and self.lower_width > 0 and self.lower < self.threshold):
            raise ValueError("need margin > 0, lower_width > 0 and lower < threshold")

    @property
    def support(self) -> tuple[float, float]:
        return self.lower - self.lower_width, self.threshold + self.margin / 2

    def __call__(self, x, derivative: int = 0):
        x = np.asarray(x, dtype=float)
        w = self.lower_width
        r = self.margin / 2
        tl = (x - (self.lower - w)) / w
        tr = (x - self.threshold) / r
        left = [glue(tl, d) / w**d for d in range(4)]
        right = [1 - glue(tr, 0)] + [-glue(tr, d) / r**d for d in range(1, 4)]
        if derivative not in (0, 1, 2, 3):
            raise ValueError("derivative must be 0, 1, 2 or 3")
        # Leibniz rule for the product of the two ramps
        return sum(math.comb(derivative, j) * left[j] * right[derivative - j]
                   for j in range(derivative + 1))


@dataclass(frozen=True)
class HSQuadratureSpec:
    """Quadrature over the bump support (a third of the nx nodes per ramp and plateau)
    times (0, 2 * half_width] in y (split at half_width).

    ``rule`` is ``midpoint`` (second order) or ``gauss`` (Gauss-Legendre per segment).
    """

    nx: int = 200
    ny: int = 100
    half_width: float = 1.0
    order: int = 2
    rule: str = "midpoint"

    def __post_init__(self):
        if self.nx < 3 or self.ny < 2 or self.half_width <= 0:
            raise ValueError("need nx >= 3, ny >= 2 and half_width > 0")
        if self.order not in (1, 2):
            raise ValueError("almost-analytic extension order must be 1 or 2")
        if self.rule not in ("midpoint", "gauss"):
            raise ValueError("rule must be 'midpoint' or 'gauss'")

    def refined(self, factor: int = 2) -> "HSQuadratureSpec":
        return HSQuadratureSpec(self.nx * factor, self.ny * factor, self.half_width, self.order, self.rule)


def _panel_nodes(edges, counts, rule: str) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite rule with counts[i] nodes on [edges[i], edges[i+1]]."""
    xs, ws = [], []
    for lo, hi, n in zip(edges, edges[1:], counts):
        if rule == "gauss":
            t, w = np.polynomial.legendre.leggauss(n)
            xs.append(lo + (t + 1) * (hi - lo) / 2)
            ws.append(w * (hi - lo) / 2)
        else:
            xs.append(lo + (np.arange(n) + 0.5) * (hi - lo) / n)
            ws.append(np.full(n, (hi - lo) / n))
    return np.concatenate(xs), np.concatenate(ws)


def _cutoff_y(y, derivative: int = 0, c: float = 1.0):
    t = (np.abs(y) - c) / c
    if derivative == 0:
        return 1.0 - glue(t)
    return -glue(t, 1) / c * np.sign(y)


def _dbar_nodes(bump: SmoothBumpSpec, quad: HSQuadratureSpec):
    """Nodes z (upper half plane) and weights w = dbar(g~)(z) dx dy."""
    a, b = bump.support
    nx3 = quad.nx // 3
    x, dx = _panel_nodes((a, bump.lower, bump.threshold, b), (nx3, quad.nx - 2 * nx3, nx3), quad.rule)
    c = quad.half_width
    y, dy = _panel_nodes((0.0, c, 2 * c), (quad.ny // 2, quad.ny - quad.ny // 2), quad.rule)
    X, Y = np.meshgrid(x, y, indexing="ij")
    W = dx[:, None] * dy[None, :]
    g, g1, g2 = bump(X, 0), bump(X, 1), bump(X, 2)
    gam, gam1 = _cutoff_y(Y, 0, quad.half_width), _cutoff_y(Y, 1, quad.half_width)
    if quad.order == 1:
        # g~ = (g + i y g') gamma
        dbar = 0.5j * Y * g2 * gam + 0.5j * (g + 1j * Y * g1) * gam1
    else:
        # g~ = (g + i y g' - y^2 g''/2) gamma
        g3 = bump(X, 3)
        dbar = -0.25 * Y**2 * g3 * gam + 0.5j * (g + 1j * Y * g1 - 0.5 * Y**2 * g2) * gam1
    w = (dbar * W).ravel()
    z = (X + 1j * Y).ravel()
    keep = w != 0
    return z[keep], w[keep]


def hs_scalar(lam, bump: SmoothBumpSpec, quad: HSQuadratureSpec) -> np.ndarray:
    """The Helffer-Sjoestrand quadrature applied to scalars (diagnostic)."""
    z, w = _dbar_nodes(bump, quad)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    out = np.zeros(lam.shape, dtype=complex)
    for i in range(0, len(z), 4096):
        k = w[i:i + 4096, None] / (z[i:i + 4096, None] - lam[None, :])
        out += k.sum(axis=0)
    return (-(out + out.conj()) / np.pi).real


def hs_function(H, bump: SmoothBumpSpec, quad: HSQuadratureSpec, *, method: str = "auto",
                chunk: int = 256) -> FockOperator:
    """g(H) = -(1/pi) int dbar(g~)(z) (z - H)^(-1) dx dy.

    The lower half plane is folded onto the upper one using
    (conj z - H)^(-1) = ((z - H)^(-1))^dagger. ``method='solve'`` performs
    batched dense resolvent solves; ``method='spectral'`` applies the same
    quadrature through one eigendecomposition (identical sum, cheaper for
    large H). ``auto`` picks ``solve`` up to dimension 200.
    """
    m = _dense(_as_matrix(H))
    dim = m.shape[0]
    if method == "auto":
        method = "solve" if dim <= 200 else "spectral"
    z, w = _dbar_nodes(bump, quad)
    if method == "spectral":
        lam, v = np.linalg.eigh(m)
        vals = hs_scalar(lam, bump, quad)
        out = (v * vals) @ v.conj().T
    elif method == "solve":
        acc = np.zeros((dim, dim), dtype=complex)
        eye = np.eye(dim)
        for i in range(0, len(z), chunk):
            zs = z[i:i + chunk]
            sys = zs[:, None, None] * eye[None] - m[None]
            try:
                res = np.linalg.solve(sys, np.broadcast_to(eye, sys.shape))
            except np.linalg.LinAlgError as exc:
                raise ConvergenceError(f"resolvent solve failed near z in {zs[[0, -1]]}") from exc
            acc += np.tensordot(w[i:i + chunk], res, axes=1)
        out = -(acc + acc.conj().T) / np.pi
    else:
        raise ValueError(f"unknown method {method!r}")
    return FockOperator(sp.csr_matrix(out), hermitian=True, tag="hs-function")


def eig_function(H, fn) -> np.ndarray:
    """fn(H) through a full eigendecomposition (oracle)."""
    lam, v = np.linalg.eigh(_dense(_as_matrix(H)))
    return (v * fn(lam)) @ v.conj().T
