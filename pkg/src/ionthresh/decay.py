"""Exponential localization below the threshold: weighted projector norms,
Agmon-rate fits, the H_R lower bound and Combes-Thomas certificates."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .model import AssembledHamiltonian, ModelSpec, assemble_hamiltonian
from .spectral import (
    current_seed,
    HSQuadratureSpec,
    SmoothBumpSpec,
    _dbar_nodes,
    eigs_lowest,
    hs_function,
    spectral_subspace,
)
from .thresholds import sigma_R

__all__ = [
    "WeightSpec",
    "WeightedNorm",
    "AgmonFit",
    "HRCertificate",
    "CTCertificate",
    "PipelineCheck",
    "weighted_projector_norm",
    "power_norm",
    "scaled_box",
    "agmon_fit",
    "transfer_matrix_rate",
    "lattice_amplitude_rate",
    "hr_operator",
    "hr_lower_bound_check",
    "combes_thomas_range_check",
    "proof_pipeline_check",
]


@dataclass(frozen=True)
class WeightSpec:
    """f(X) = beta <X> / (1 + eps <X>), <X> = (1 + |X|^2)^(1/2)."""

    beta: float
    eps: float = 1e-2

    def __post_init__(self):
        if self.beta < 0 or self.eps <= 0:
            raise ValueError("need beta >= 0 and eps > 0")

    def samples(self, radii) -> np.ndarray:
        br = np.sqrt(1.0 + np.asarray(radii, dtype=float) ** 2)
        return self.beta * br / (1.0 + self.eps * br)

    @property
    def bound(self) -> float:
        return self.beta / self.eps


def power_norm(B: np.ndarray, *, seed: int | None = None, rtol: float = 1e-8,
               maxiter: int = 10_000) -> tuple[float, int]:
    """Largest singular value of B by power iteration on B^dagger B."""
    if B.shape[1] == 0:
        return 0.0, 0
    gram = B.conj().T @ B
    rng = np.random.default_rng(current_seed(seed))
    x = rng.standard_normal(gram.shape[0]) + 1j * rng.standard_normal(gram.shape[0])
    x /= np.linalg.norm(x)
    prev = 0.0
    for it in range(1, maxiter + 1):
        y = gram @ x
        val = float(np.real(np.vdot(x, y)))
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0, it
        x = y / ny
        if abs(val - prev) <= rtol * abs(val):
            return math.sqrt(max(val, 0.0)), it
        prev = val
    raise RuntimeError("power iteration did not converge")


@dataclass(frozen=True)
class WeightedNorm:
    norm: float
    log_norm: float
    rank: int
    iterations: int
    cut: float
    beta: float


def weighted_projector_norm(H: AssembledHamiltonian, cut: float, beta: float, *,
                            weight: WeightSpec | None = None, tol: float = 1e-9,
                            seed: int | None = None, rtol: float = 1e-8) -> WeightedNorm:
    """||e^(beta |X|) E_cut(H)||, or ||e^f E_cut(H)|| when ``weight`` is given.

    The largest weight is factored out before exponentiation so the power
    iteration never overflows.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    _, vecs = spectral_subspace(H.total, cut, tol)
    if vecs.shape[1] == 0:
        return WeightedNorm(0.0, -math.inf, 0, 0, float(cut), float(beta))
    logw = H.lift(weight.samples(H.radii) if weight is not None else beta * H.radii)
    top = float(logw.max())
    B = np.exp(logw - top)[:, None] * vecs
    s, it = power_norm(B, seed=seed, rtol=rtol)
    log_norm = top + math.log(s)
    return WeightedNorm(math.exp(log_norm), log_norm, vecs.shape[1], it, float(cut), float(beta))


def scaled_box(spec: ModelSpec, factor: int) -> ModelSpec:
    """Box of extent factor * L at the same grid spacing."""
    n = spec.grid.points
    return spec.with_(extent=spec.grid.extent * factor, points=factor * (n + 1) - 1)


# ----------------------------------------------------------------------------
# Agmon rates
# ----------------------------------------------------------------------------

def transfer_matrix_rate(energy: float, spacing: float, potential: float = 0.0) -> float:
    """Density decay rate of the lattice equation -Lap psi = (E - V) psi with E < V.

    The decaying root of r + 1/r = 2 + (V - E) h^2 gives rho ~ r^(2x/h).
    """
    g = potential - energy
    if g <= 0:
        return 0.0
    c = 2.0 + g * spacing**2
    r = (c - math.sqrt(c * c - 4.0)) / 2.0
    return -2.0 * math.log(r) / spacing


def lattice_amplitude_rate(gap: float, spacing: float) -> float:
    """Amplitude rate (2/h) asinh(h sqrt(gap) / 2), the lattice form of sqrt(gap)."""
    if gap <= 0:
        return 0.0
    return 2.0 / spacing * math.asinh(spacing * math.sqrt(gap) / 2.0)


@dataclass(frozen=True)
class AgmonFit:
    rate: float
    amplitude_rate: float
    residual: float
    r_squared: float
    window: tuple[float, float]
    decay_efolds: float
    flag: str


def agmon_fit(H: AssembledHamiltonian, psi: np.ndarray, window: tuple[float, float], *,
              boundary_layer: float | None = None, electron: int = 0) -> AgmonFit:
    """Least-squares slope of log(marginal density) over ``window`` (x > 0 side).

    ``flag`` is ``ok`` or ``no-decay`` (fewer than two e-folds of decay over
    the window, or a poor linear fit). Windows reaching into the boundary
    layer next to the wall are rejected.
    """
    grid = H.spec.grid
    layer = 0.15 * grid.extent if boundary_layer is None else boundary_layer
    a, b = window
    if not (0 <= a < b):
        raise ValueError("window must satisfy 0 <= a < b")
    if b > grid.extent - layer:
        raise ValueError(f"window end {b} touches the boundary layer (wall at {grid.extent}, layer {layer})")
    x = grid.coordinates
    rho = H.marginal_density(psi, electron)
    sel = (x >= a) & (x <= b)
    if np.count_nonzero(sel) < 3:
        raise ValueError("window holds fewer than 3 grid points")
    if np.any(rho[sel] <= 0):
        raise ValueError("density vanishes inside the window")
    xs, ys = x[sel], np.log(rho[sel])
    slope, icpt = np.polyfit(xs, ys, 1)
    fit = slope * xs + icpt
    ss_res = float(np.sum((ys - fit) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    rate = -float(slope)
    efolds = rate * (xs[-1] - xs[0])
    flag = "ok" if (efolds >= 2.0 and r2 >= 0.999) else "no-decay"
    return AgmonFit(rate, rate / 2.0, math.sqrt(ss_res / len(xs)), r2, (float(a), float(b)),
                    float(efolds), flag)


# ----------------------------------------------------------------------------
# H_R and Combes-Thomas
# ----------------------------------------------------------------------------

def hr_operator(H: AssembledHamiltonian, R: float, shift: float) -> sp.csr_matrix:
    """H + shift * 1{|X| <= 2R}."""
    ind = H.lift((H.radii <= 2 * R + 1e-12).astype(float))
    return (H.total.matrix + shift * sp.diags(ind)).tocsr()


@dataclass(frozen=True)
class HRCertificate:
    R: float
    sigma_R: float
    ground_energy: float
    min_eig: float
    C: float


def hr_lower_bound_check(H: AssembledHamiltonian, R: float, sigma: float | None = None,
                         E: float | None = None, tol: float = 1e-10) -> HRCertificate:
    """min-eig(H_R) and C(R) = R^2 (Sigma_R - min-eig(H_R))."""
    if E is None:
        E = eigs_lowest(H.total, 1, tol).ground
    if sigma is None:
        sigma = sigma_R(H, R, tol) if R > 0 else E
    if sigma < E - tol:
        raise ValueError("need Sigma_R >= E")
    m = eigs_lowest(hr_operator(H, R, sigma - E), 1, tol).ground
    return HRCertificate(float(R), float(sigma), float(E), float(m), float(R**2 * (sigma - m)))


@dataclass
class CTCertificate:
    R: float
    beta: float
    eps: float
    cut: float
    delta: float
    sym_min_eig: float
    hr_min_eig: float
    margins: list[float]
    z_real: list[float]
    min_margin: float
    identity_defect: float
    resolvent_norms: list[float]
    resolvent_bound: float
    certified: bool
    phi_norm: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def combes_thomas_range_check(H: AssembledHamiltonian, R: float, weight: WeightSpec,
                              bump: SmoothBumpSpec, hr: HRCertificate, *,
                              quad: HSQuadratureSpec | None = None,
                              resolvent_samples: int = 5) -> CTCertificate:
    """Numerical-range certificate for the conjugated H_R.

    H_{R,f} = e^f H_R e^-f has symmetric part H_R o cosh(f_i - f_j) = H_R - Phi_f.
    With delta = Sigma_R - C/R^2 - 2 beta^2 - lambda, every z with
    Re z <= lambda + delta/2 must satisfy min-eig(Sym) - Re z >= delta/2,
    which bounds ||(z - H_{R,f})^-1|| by 2/delta.
    """
    quad = quad or HSQuadratureSpec(40, 10, 1.0)
    hrm = hr_operator(H, R, hr.sigma_R - hr.ground_energy)
    dense = hrm.toarray()
    f = H.lift(weight.samples(H.radii))
    diff = f[:, None] - f[None, :]
    # similarity transform and its symmetric part, computed from the conjugated matrix
    conj = dense * np.exp(diff)
    sym = 0.5 * (conj + conj.conj().T)
    phi = dense * (1.0 - np.cosh(diff))
    defect = float(np.abs(sym - (dense - phi)).max())
    sym_min = float(np.linalg.eigvalsh(sym)[0])
    lam = bump.threshold
    C = hr.C
    delta = hr.sigma_R - C / R**2 - 2 * weight.beta**2 - lam if R > 0 else hr.min_eig - 2 * weight.beta**2 - lam
    if delta <= 0:
        raise ValueError(f"precondition lambda + 2 beta^2 < Sigma_R - C/R^2 fails (delta={delta:.4g})")
    z, _ = _dbar_nodes(bump, quad)
    re = np.unique(np.round(z.real, 14))
    margins = (sym_min - re).tolist()
    min_margin = float(min(margins))
    # direct resolvent norms at a few grid points closest to the real axis
    picks = np.linspace(0, len(re) - 1, min(resolvent_samples, len(re))).astype(int)
    ymin = float(np.min(z.imag))
    norms = []
    eye = np.eye(dense.shape[0])
    for i in picks:
        zz = re[i] + 1j * ymin
        norms.append(float(1.0 / np.linalg.svd(zz * eye - conj, compute_uv=False)[-1]))
    bound = 2.0 / delta
    ok = min_margin >= delta / 2 - 1e-12 and defect <= 1e-10 and max(norms) <= bound * (1 + 1e-9)
    return CTCertificate(float(R), weight.beta, weight.eps, float(lam), float(delta), sym_min, hr.min_eig,
                         margins, re.tolist(), min_margin, defect, norms, bound, bool(ok),
                         float(np.linalg.norm(phi, 2)))


@dataclass(frozen=True)
class PipelineCheck:
    hs_norm: float
    direct_norm: float
    ratio: float
    within_factor: bool
    hs_error: float


def proof_pipeline_check(H: AssembledHamiltonian, bump: SmoothBumpSpec, weight: WeightSpec,
                         quad: HSQuadratureSpec, *, factor: float = 10.0,
                         method: str = "auto") -> PipelineCheck:
    """||e^f g(H)|| through the almost-analytic calculus against ||e^(beta|X|) E_lambda(H)||."""
    g = hs_function(H.total, bump, quad, method=method).toarray()
    lam, vecs = np.linalg.eigh(H.total.toarray())
    exact = (vecs * bump(lam)) @ vecs.conj().T
    err = float(np.linalg.norm(g - exact, 2))
    f = H.lift(weight.samples(H.radii))
    top = float(f.max())
    s = np.linalg.norm(np.exp(f - top)[:, None] * g, 2)
    hs_norm = math.exp(top) * float(s)
    direct = weighted_projector_norm(H, bump.threshold, weight.beta).norm
    ratio = hs_norm / direct if direct > 0 else math.inf
    return PipelineCheck(hs_norm, direct, ratio, bool(1.0 / factor <= ratio <= factor), err)


def weighted_norm_schedule(spec: ModelSpec, factors: Sequence[int], cut: float, beta: float,
                           **kwargs) -> list[WeightedNorm]:
    """Weighted projector norms over boxes factor * L at fixed spacing."""
    return [weighted_projector_norm(assemble_hamiltonian(scaled_box(spec, k)), cut, beta, **kwargs)
            for k in factors]
