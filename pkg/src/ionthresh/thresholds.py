"""Localization threshold Sigma, cluster threshold tau, their comparison,
infrared stability and the trial-state construction."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit

from .fock import (
    FockBasis,
    TruncationError,
    cutoff_profile,
    gamma,
    identification,
    one_boson_translation,
    position_localizer,
)
from .model import (
    AssembledHamiltonian,
    ModelSpec,
    Profile,
    assemble_hamiltonian,
    dirichlet_restrict,
    ir_cutoff_variant,
    ir_shift_constant,
)
from .spectral import EigenResult, eigs_lowest

__all__ = [
    "ThresholdReport",
    "TrialStateReport",
    "IRShiftReport",
    "ground_state",
    "ground_energy",
    "sigma_R",
    "sigma_schedule",
    "sigma_extrapolate",
    "cluster_specs",
    "tau",
    "equivalence_report",
    "threshold_finalize",
    "ir_threshold_shift",
    "trial_state_energy",
    "coarse_spec",
]

DEFAULT_TOL = 1e-10
MONOTONE_TOL = 1e-10


def ground_state(H: AssembledHamiltonian | ModelSpec, tol: float = DEFAULT_TOL) -> EigenResult:
    if isinstance(H, ModelSpec):
        H = assemble_hamiltonian(H)
    return eigs_lowest(H.total, 1, tol)


def ground_energy(spec: ModelSpec | AssembledHamiltonian, tol: float = DEFAULT_TOL) -> float:
    """inf sigma(H) with a residual-certified eigensolve."""
    return ground_state(spec, tol).ground


def sigma_R(H: AssembledHamiltonian, R: float, tol: float = DEFAULT_TOL) -> float:
    """Lowest eigenvalue on states vanishing where |X| < R."""
    return eigs_lowest(dirichlet_restrict(H, R), 1, tol).ground


def sigma_schedule(H: AssembledHamiltonian, schedule: Sequence[float], tol: float = DEFAULT_TOL) -> dict[float, float]:
    values = {float(R): sigma_R(H, R, tol) for R in schedule}
    check_monotone(values)
    return values


def check_monotone(values: dict[float, float], tol: float = MONOTONE_TOL) -> None:
    Rs = sorted(values)
    for a, b in zip(Rs, Rs[1:]):
        if values[b] < values[a] - tol:
            raise ValueError(f"Sigma_R is not monotone: Sigma({b})={values[b]!r} < Sigma({a})={values[a]!r}")


def sigma_extrapolate(values: dict[float, float], *, fit_points: int = 5,
                      residual_tol: float = 1e-3) -> tuple[float, dict]:
    """Fit Sigma_R = Sigma - c exp(-a R) on the tail of the schedule.

    Falls back to the last Sigma_R when the increments do not shrink
    (``boundary-dominated``: the box, not the potential, drives the growth)
    or when the fit residual exceeds ``residual_tol`` relative to the spread
    of the fitted data (``no-fit``).
    """
    if len(values) < 4:
        raise ValueError("sigma_extrapolate needs at least 4 schedule points")
    check_monotone(values)
    R = np.array(sorted(values), dtype=float)
    S = np.array([values[r] for r in R])
    diag = {"points": len(R), "c": 0.0, "a": float("nan"), "rms": 0.0, "last": float(S[-1])}
    spread = float(S[-1] - S[0])
    scale = max(1.0, float(np.max(np.abs(S))))
    if spread <= 1e-13 * scale:
        diag["status"] = "constant"
        return float(S[-1]), diag
    inc = np.diff(S)
    if inc[-1] >= inc[0] or np.all(inc[1:] >= inc[:-1] - 1e-15 * scale):
        diag["status"] = "boundary-dominated"
        return float(S[-1]), diag
    Rf, Sf = R[-fit_points:], S[-fit_points:]
    incf = np.diff(Sf) / np.diff(Rf)
    pos = incf > 0
    a0 = 0.5
    if np.count_nonzero(pos) >= 2:
        slope = np.polyfit(Rf[1:][pos], np.log(incf[pos]), 1)[0]
        a0 = max(-slope, 1e-3)
    c0 = max(inc[-1], 1e-12) / max(math.exp(-a0 * Rf[-2]) - math.exp(-a0 * Rf[-1]), 1e-300)
    shift = Rf[0]

    def model(r, sig, c, a):
        return sig - c * np.exp(-a * (r - shift))

    try:
        p, _ = curve_fit(model, Rf, Sf, p0=(S[-1], c0 * math.exp(-a0 * shift), a0),
                         maxfev=20000, ftol=1e-15, xtol=1e-15, gtol=1e-15)
    except (RuntimeError, ValueError) as exc:
        diag["status"] = "no-fit"
        diag["error"] = str(exc)
        return float(S[-1]), diag
    rms = float(np.sqrt(np.mean((model(Rf, *p) - Sf) ** 2)))
    diag.update(c=float(p[1] * math.exp(p[2] * shift)), a=float(p[2]), rms=rms)
    if not (p[2] > 0 and p[1] >= 0) or rms > residual_tol * max(float(Sf[-1] - Sf[0]), 1e-300):
        diag["status"] = "no-fit"
        return float(S[-1]), diag
    if p[0] < S[-1] - 1e-12 * scale:
        diag["status"] = "no-fit"
        return float(S[-1]), diag
    diag["status"] = "fit"
    return float(p[0]), diag


# ----------------------------------------------------------------------------
# clusters
# ----------------------------------------------------------------------------

def cluster_specs(spec: ModelSpec) -> dict[str, ModelSpec]:
    """Cluster Hamiltonians entering tau.

    Keys: ``E0_1`` (one free electron), ``E_1`` (one electron in v, N = 2 only),
    ``E0_2`` (two free electrons with w, N = 2 only).
    """
    free = Profile()
    one = spec.with_(n_electrons=1, statistics="distinguishable")
    out = {"E0_1": one.with_(v=free)}
    if spec.n_electrons == 2:
        out["E_1"] = one
        out["E0_2"] = spec.with_(v=free)
    return out


def tau(spec: ModelSpec, tol: float = DEFAULT_TOL) -> tuple[float, dict]:
    """tau = min over N' >= 1 of E_{N-N'} + E^0_{N'} with E_0 = 0."""
    energies = {k: ground_energy(s, tol) for k, s in cluster_specs(spec).items()}
    if spec.n_electrons == 1:
        table = {"1": energies["E0_1"]}
    else:
        table = {"1": energies["E_1"] + energies["E0_1"], "2": energies["E0_2"]}
    return min(table.values()), {"clusters": table, "energies": energies}


def coarse_spec(spec: ModelSpec) -> ModelSpec:
    """Same box with half the grid points (discretization proxy)."""
    return spec.with_(points=max(8, spec.grid.points // 2))


@dataclass
class ThresholdReport:
    schedule: list[float]
    sigma_R: list[float]
    sigma: float
    fit: dict
    ground_energy: float
    cluster_table: dict
    tau: float
    discrepancy: float
    relative_discrepancy: float
    model_tolerance: float
    solver_tolerance: float
    coarse_sigma: float | None
    margins: dict = field(default_factory=dict)
    passed: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def equivalence_report(spec: ModelSpec, schedule: Sequence[float], tol: float = DEFAULT_TOL,
                       *, discretization_check: bool = True) -> ThresholdReport:
    """Compute Sigma (via Sigma_R) and tau and compare them.

    PASS when |Sigma - tau| <= max(2 tol, |Sigma_Rmax(n) - Sigma_Rmax(n/2)|).
    """
    H = assemble_hamiltonian(spec)
    E = ground_energy(H, tol)
    values = sigma_schedule(H, schedule, tol)
    t, table = tau(spec, tol)
    coarse = None
    if discretization_check:
        coarse = sigma_R(assemble_hamiltonian(coarse_spec(spec)), max(schedule), tol)
    return threshold_finalize(values, E, t, table, coarse, tol)


def threshold_finalize(values: dict[float, float], E: float, t: float, table: dict,
                       coarse: float | None, tol: float = DEFAULT_TOL) -> ThresholdReport:
    """Combine precomputed Sigma_R values, E, tau and the coarse-grid proxy."""
    values = {float(r): float(v) for r, v in values.items()}
    check_monotone(values)
    Rs = sorted(values)
    sig, diag = sigma_extrapolate(values) if len(values) >= 4 else (values[Rs[-1]], {"status": "short"})
    proxy = abs(values[Rs[-1]] - coarse) if coarse is not None else 0.0
    model_tol = max(2 * tol, proxy)
    disc = sig - t
    gap = sig - E
    margins = {"tau_minus_sigma": model_tol - (t - sig), "sigma_minus_tau": model_tol - (sig - t)}
    return ThresholdReport(
        schedule=Rs, sigma_R=[values[r] for r in Rs],
        sigma=float(sig), fit=diag, ground_energy=float(E), cluster_table=table, tau=float(t),
        discrepancy=float(disc), relative_discrepancy=abs(disc) / gap if gap > 0 else float("inf"),
        model_tolerance=model_tol, solver_tolerance=tol, coarse_sigma=coarse, margins=margins,
        passed=bool(abs(disc) <= model_tol))


# ----------------------------------------------------------------------------
# infrared stability
# ----------------------------------------------------------------------------

@dataclass
class IRShiftReport:
    mu: list[float]
    mu_ref: float
    R: float
    energies: list[float]
    sigmas: list[float]
    energy_shifts: list[float]
    sigma_shifts: list[float]
    eta: list[float]
    b_energy: list[float]
    b_sigma: list[float]
    derived_bound_energy: list[float]
    derived_bound_sigma: list[float]
    constant: float
    sqrt_mu_bound: list[float]
    monotone_shrink: bool
    passed: bool
    zero_cutoff_energy: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _q_expectation(H: AssembledHamiltonian, psi: np.ndarray, support: np.ndarray | None = None) -> float:
    """<sum_j (-Lap_j + H_f + 1)> of a (possibly restricted) vector."""
    n = H.spec.n_electrons
    q = H.components["laplacian"] + n * (H.components["field"] + sp.identity(H.dimension))
    if support is not None:
        q = q[support][:, support]
    return float(np.real(np.vdot(psi, q @ psi)) / np.real(np.vdot(psi, psi)))


def ir_point(spec: ModelSpec, mu: float, R: float, tol: float = DEFAULT_TOL) -> dict:
    """Ground energy, Sigma_R and the two <Q> values at one infrared cutoff."""
    H = assemble_hamiltonian(ir_cutoff_variant(spec, mu))
    g = eigs_lowest(H.total, 1, tol)
    D = dirichlet_restrict(H, R)
    s = eigs_lowest(D, 1, tol)
    return {"mu": float(mu), "energy": g.ground, "sigma": s.ground,
            "q_energy": _q_expectation(H, g.eigenvectors[:, 0]),
            "q_sigma": _q_expectation(H, s.eigenvectors[:, 0], D.support)}


def ir_finalize(spec: ModelSpec, points: list[dict], mu_ref: float, R: float,
                zero_cutoff_energy: float | None = None) -> IRShiftReport:
    ref = next(p for p in points if p["mu"] == mu_ref)
    rows = sorted(points, key=lambda p: -p["mu"])
    eta, be, bs, de, ds, es, ss = [], [], [], [], [], [], []
    for p in rows:
        c = ir_shift_constant(spec, p["mu"], mu_ref).eta
        b_e = max(p["q_energy"], ref["q_energy"])
        b_s = max(p["q_sigma"], ref["q_sigma"])
        eta.append(c)
        be.append(b_e)
        bs.append(b_s)
        de.append(c * b_e)
        ds.append(c * b_s)
        es.append(abs(p["energy"] - ref["energy"]))
        ss.append(abs(p["sigma"] - ref["sigma"]))
    mus = [p["mu"] for p in rows]
    ratios = [max(a, b) / math.sqrt(m) for a, b, m in zip(de, ds, mus) if m > 0]
    const = max(ratios) if ratios else 0.0
    sqrt_bound = [const * math.sqrt(m) for m in mus]
    ok = all(e <= b + 1e-12 and s <= d + 1e-12 for e, s, b, d in zip(es, ss, de, ds))
    ok = ok and all(max(e, s) <= b + 1e-12 for e, s, b in zip(es, ss, sqrt_bound))
    shrink = all(a >= b - 1e-12 for a, b in zip(es, es[1:])) and all(a >= b - 1e-12 for a, b in zip(ss, ss[1:]))
    return IRShiftReport(mus, float(mu_ref), float(R), [p["energy"] for p in rows],
                         [p["sigma"] for p in rows], es, ss, eta, be, bs, de, ds, const, sqrt_bound,
                         bool(shrink), bool(ok), zero_cutoff_energy)


def ir_threshold_shift(spec: ModelSpec, mu_schedule: Sequence[float], R: float,
                       tol: float = DEFAULT_TOL, include_zero_cutoff: bool = True) -> IRShiftReport:
    """Shifts of E and Sigma_R under the infrared cutoff, against the derived bound.

    The reference is the smallest mu. For each mu the bound is
    eta(mu) * B with B = max <sum_j (-Lap_j + H_f + 1)> over the two
    minimizers; C is the supremum of eta B / sqrt(mu) over the schedule.
    """
    mus = sorted({float(m) for m in mu_schedule}, reverse=True)
    points = [ir_point(spec, m, R, tol) for m in mus]
    zero = ground_energy(ir_cutoff_variant(spec, 0.0), tol) if include_zero_cutoff else None
    return ir_finalize(spec, points, mus[-1], R, zero)


# ----------------------------------------------------------------------------
# trial states
# ----------------------------------------------------------------------------

@dataclass
class TrialStateReport:
    schedule: list[float]
    energies: list[float]
    target: float
    target_exact: float
    gaps: list[float]
    field_cross: list[float]
    potential_tail: list[float]
    coupling_overlap: list[float]
    translation_defect: list[float]
    normalization_defect: list[float]
    support_radius: list[float]
    localized_energies: dict
    photon_numbers: dict
    gap_decreasing: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _expect(m: sp.spmatrix, psi: np.ndarray) -> float:
    return float(np.real(np.vdot(psi, m @ psi)))


def _prepare_cluster(spec: ModelSpec, cutoff: float, photon_radius: float, tol: float):
    H = assemble_hamiltonian(spec)
    g = eigs_lowest(H.total, 1, tol)
    psi = g.eigenvectors[:, 0].copy()
    chi = cutoff_profile(H.radii / cutoff)
    psi *= H.lift(chi)
    j = position_localizer(photon_radius, 0.0, None, spec.mode_basis)
    gj = gamma(j, H.fock_basis).matrix
    psi = (psi.reshape(H.n_configurations, -1) @ gj.T.toarray()).ravel()
    nrm = np.linalg.norm(psi)
    if nrm < 1e-8:
        raise ValueError("cutting and localizing removed the whole minimizer")
    return H, g.ground, psi / nrm


def _shift_electrons(psi: np.ndarray, n: int, n_el: int, steps: int) -> np.ndarray:
    arr = psi.reshape((n,) * n_el + (-1,))
    for ax in range(n_el):
        lost = np.take(arr, range(n - steps, n) if steps > 0 else range(0, -steps), axis=ax)
        if np.any(lost != 0):
            raise ValueError(f"translation by {steps} grid points pushes mass through the wall")
        arr = np.roll(arr, steps, axis=ax)
    return arr.reshape(psi.shape)


def trial_state_energy(spec: ModelSpec, n_prime: int, schedule: Sequence[float], *,
                       cutoff: float = 2.0, photon_radius: float = 2.0,
                       tol: float = DEFAULT_TOL) -> TrialStateReport:
    """Energy of psi_R = I(phi_0 (x) T_R phi_inf) along an R schedule.

    phi_0 minimizes the (N - N')-electron Hamiltonian with v, phi_inf the
    N'-electron one without v; both are cut off smoothly at |X| ~ cutoff and
    their photons are localized near y = 0 by Gamma(j). T_R shifts the N'
    cluster electrons by R (an exact grid shift) and its photons by R.
    Electrons are treated as distinguishable.
    """
    if spec.spin_enabled:
        raise ValueError("trial states are built without the spin surrogate")
    n_total = spec.n_electrons
    if not 1 <= n_prime <= n_total:
        raise ValueError("need 1 <= N' <= N")
    spec = spec.with_(statistics="distinguishable")
    a = n_total - n_prime
    mb = spec.mode_basis
    h = spec.grid.spacing
    n = spec.grid.points
    free = Profile()
    nm_part = spec.n_max // 2 if a > 0 else spec.n_max
    spec_inf = spec.with_(n_electrons=n_prime, v=free, n_max=nm_part)
    H_inf, e_inf_exact, phi_inf = _prepare_cluster(spec_inf, cutoff, photon_radius, tol)
    if a > 0:
        spec_0 = spec.with_(n_electrons=a, n_max=nm_part)
        H_0, e_0_exact, phi_0 = _prepare_cluster(spec_0, cutoff, photon_radius, tol)
        basis_a = H_0.fock_basis
    else:
        H_0, e_0_exact, phi_0 = None, 0.0, np.ones(1, dtype=complex)
        basis_a = FockBasis(mb, 0)
    basis_b = H_inf.fock_basis
    H = assemble_hamiltonian(spec)
    ident = identification(basis_a, basis_b, H.fock_basis)

    def parts(Hc, psi):
        c = Hc.components
        return {"field": _expect(c["field"], psi), "potential": _expect(c["v"] + c["w"], psi),
                "coupling": _expect(c["laplacian"] + c["cross"] + c["a_squared"] + c["spin"], psi)}

    zero_parts = {"field": 0.0, "potential": 0.0, "coupling": 0.0}
    p0 = parts(H_0, phi_0) if H_0 is not None else zero_parts
    e0 = sum(p0.values())
    pinf_ref = parts(H_inf, phi_inf)
    einf = sum(pinf_ref.values())
    nconf_a = n**a
    da = basis_a.dimension
    db = basis_b.dimension
    photon_numbers = {"phi_inf": _expect(sp.kron(sp.identity(H_inf.n_configurations),
                                                 sp.diags(basis_b.grades.astype(float))), phi_inf)}
    if H_0 is not None:
        photon_numbers["phi_0"] = _expect(sp.kron(sp.identity(H_0.n_configurations),
                                                  sp.diags(basis_a.grades.astype(float))), phi_0)

    rows = {k: [] for k in ("energy", "gap", "field", "pot", "coup", "trans", "norm", "radius")}
    for R in schedule:
        steps = R / h
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"R={R} is not a multiple of the grid spacing {h}")
        steps = int(round(steps))
        shifted = _shift_electrons(phi_inf, n, n_prime, steps)
        t = gamma(one_boson_translation(-R, mb), basis_b, force=True).matrix
        shifted = (shifted.reshape(-1, db) @ t.T.toarray()).ravel()
        pinf = parts(H_inf, shifted)
        trans = sum(pinf.values()) - einf
        prod = np.einsum("ia,jb->ijab", phi_0.reshape(nconf_a, da), shifted.reshape(n**n_prime, db))
        prod = prod.reshape(nconf_a * n**n_prime, da * db)
        try:
            psi = ident.apply_product(prod.T, tol=0.0).T.ravel()
        except TruncationError:
            raise
        nrm = np.linalg.norm(psi)
        psi_n = psi / nrm
        pp = parts(H, psi_n)
        energy = sum(pp.values())
        rows["energy"].append(energy)
        rows["gap"].append(energy - e0 - einf)
        rows["field"].append(pp["field"] - p0["field"] - pinf["field"])
        rows["pot"].append(pp["potential"] - p0["potential"] - pinf["potential"])
        rows["coup"].append(pp["coupling"] - p0["coupling"] - pinf["coupling"])
        rows["trans"].append(trans)
        rows["norm"].append(float(abs(nrm - 1.0)))
        mass = np.sum(np.abs(psi.reshape(H.n_configurations, -1)) ** 2, axis=1)
        rows["radius"].append(float(H.radii[mass > 0].min()))
    gaps = np.abs(rows["gap"])
    return TrialStateReport(
        schedule=[float(r) for r in schedule], energies=rows["energy"], target=e0 + einf,
        target_exact=e_0_exact + e_inf_exact, gaps=rows["gap"], field_cross=rows["field"],
        potential_tail=rows["pot"], coupling_overlap=rows["coup"], translation_defect=rows["trans"],
        normalization_defect=rows["norm"], support_radius=rows["radius"],
        localized_energies={"phi_0": e0, "phi_inf": einf, "E_0": e_0_exact, "E_inf": e_inf_exact},
        photon_numbers=photon_numbers,
        gap_decreasing=bool(np.all(np.diff(gaps) <= 1e-12)))
