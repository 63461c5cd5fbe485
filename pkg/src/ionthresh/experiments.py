"""Experiments driven by configuration files.

Each experiment enumerates a list of independent jobs, runs them one at a
time (possibly in worker processes) and merges the per-job results into a
report, a flat CSV table and a set of named checks.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from . import fock
from .config import AXES, model_spec
from .decay import (
    WeightSpec,
    agmon_fit,
    combes_thomas_range_check,
    hr_lower_bound_check,
    lattice_amplitude_rate,
    scaled_box,
    weighted_projector_norm,
)
from .model import assemble_hamiltonian, ir_cutoff_variant
from .spectral import SmoothBumpSpec, eigs_lowest, set_seed
from .thresholds import (
    coarse_spec,
    ground_energy,
    ir_finalize,
    ir_point,
    sigma_R,
    tau,
    threshold_finalize,
    trial_state_energy,
)


@dataclass(frozen=True)
class Job:
    kind: str
    params: tuple  # sorted (name, value) pairs

    @property
    def key(self) -> str:
        parts = [self.kind] + [f"{k}={v!r}" for k, v in self.params]
        return "_".join(parts)

    @property
    def filename(self) -> str:
        return re.sub(r"[^A-Za-z0-9._=-]", "_", self.key) + ".json"

    def get(self, name, default=None):
        return dict(self.params).get(name, default)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def make(cls, kind: str, **params) -> "Job":
        return cls(kind, tuple(sorted(params.items())))


@dataclass
class Outcome:
    report: dict
    rows: list[dict]
    checks: dict  # name -> {"passed": bool, "value": float, "limit": float}


def csv_schema() -> dict:
    text = resources.files("ionthresh").joinpath("data/csv_schema.json").read_text()
    return json.loads(text)


def _check(passed: bool, value: float, limit: float) -> dict:
    return {"passed": bool(passed), "value": float(value), "limit": float(limit)}


# ----------------------------------------------------------------------------
# job enumeration
# ----------------------------------------------------------------------------

def jobs_for(cfg: dict) -> list[Job]:
    exp = cfg["experiment"]
    sch = cfg["schedules"]
    opt = cfg["options"]
    if exp == "fock-selftest":
        return [Job.make("selftest", n_modes=m, n_max=n) for m in opt["n_modes"] for n in opt["n_max"]]
    if exp == "spectrum":
        return [Job.make("spectrum", L=L) for L in sch["L"]]
    if exp == "thresholds":
        out = [Job.make("ground"), Job.make("tau")]
        out += [Job.make("sigma", R=R) for R in sch["R"]]
        if opt["coarse_check"]:
            out.append(Job.make("coarse", R=max(sch["R"])))
        return out
    if exp == "ir-study":
        out = [Job.make("ir", mu=m) for m in sch["mu"]]
        if opt["include_zero_cutoff"]:
            out.append(Job.make("ir_zero"))
        return out
    if exp == "trial-state":
        out = [Job.make("trial", R=R) for R in sch["R"]]
        if opt["sigma_R"] is not None:
            out += [Job.make("ground"), Job.make("sigma", R=opt["sigma_R"])]
        return out
    if exp == "decay":
        out = [Job.make("norm", L=L, beta=b, cut=c)
               for L in sch["L"] for b in sch["beta"] for c in sch["lambda"]]
        if opt["expect"] == "localized":
            out += [Job.make("weighted", beta=b, cut=c, eps=e)
                    for b in sch["beta"] if b > 0 for c in sch["lambda"] for e in opt["eps"]]
        if opt["ct_R"] is not None:
            out += [Job.make("ct", beta=b, cut=c, R=opt["ct_R"]) for b in sch["beta"] for c in sch["lambda"]]
        if opt["agmon_window"] is not None:
            out.append(Job.make("agmon"))
        return out
    raise ValueError(f"unknown experiment {exp}")


def axes_for(experiment: str) -> tuple[str, ...]:
    return AXES[experiment]


# ----------------------------------------------------------------------------
# job execution (runs in worker processes; must stay picklable)
# ----------------------------------------------------------------------------

def run_job(cfg: dict, job: Job) -> dict:
    set_seed(cfg["seed"])
    tol = cfg["tolerance"]
    opt = cfg["options"]
    kind = job.kind
    if kind == "selftest":
        recs = fock.selftest(job.get("n_modes"), job.get("n_max"), cfg["seed"], opt["tolerance"])
        return {"records": recs}
    spec = model_spec(cfg)
    if kind == "spectrum":
        H = assemble_hamiltonian(scaled_box(spec, job.get("L")))
        k = min(opt["k"], H.dimension - 1)
        r = eigs_lowest(H.total, k, tol)
        return {"eigenvalues": r.eigenvalues.tolist(), "residuals": np.asarray(r.residuals).tolist(),
                "method": r.method, "dimension": H.dimension}
    if kind == "ground":
        return {"energy": ground_energy(spec, tol)}
    if kind == "tau":
        t, table = tau(spec, tol)
        return {"tau": t, "table": table}
    if kind == "sigma":
        return {"R": job.get("R"), "sigma": sigma_R(assemble_hamiltonian(spec), job.get("R"), tol)}
    if kind == "coarse":
        return {"sigma": sigma_R(assemble_hamiltonian(coarse_spec(spec)), job.get("R"), tol)}
    if kind == "ir":
        return ir_point(spec, job.get("mu"), opt["R"], tol)
    if kind == "ir_zero":
        return {"energy": ground_energy(ir_cutoff_variant(spec, 0.0), tol)}
    if kind == "trial":
        rep = trial_state_energy(spec, opt["n_prime"], [job.get("R")], cutoff=opt["cutoff"],
                                 photon_radius=opt["photon_radius"], tol=tol)
        return rep.to_dict()
    if kind == "norm":
        H = assemble_hamiltonian(scaled_box(spec, job.get("L")))
        w = weighted_projector_norm(H, job.get("cut"), job.get("beta"))
        return asdict(w)
    if kind == "weighted":
        H = assemble_hamiltonian(spec)
        w = weighted_projector_norm(H, job.get("cut"), job.get("beta"),
                                    weight=WeightSpec(job.get("beta"), job.get("eps")))
        return asdict(w)
    if kind == "ct":
        H = assemble_hamiltonian(spec)
        R, beta, cut = job.get("R"), job.get("beta"), job.get("cut")
        hr = hr_lower_bound_check(H, R, tol=tol)
        margin = hr.min_eig - 2 * beta**2 - cut
        if margin <= 0:
            raise ValueError(f"precondition lambda + 2 beta^2 < min-eig(H_R) fails (margin={margin:.4g})")
        bump = SmoothBumpSpec(cut, margin, hr.ground_energy - 0.5, 0.5)
        cert = combes_thomas_range_check(H, R, WeightSpec(beta), bump, hr)
        d = cert.to_dict()
        d["C"] = hr.C
        return d
    if kind == "agmon":
        H = assemble_hamiltonian(spec)
        g = eigs_lowest(H.total, 1, tol)
        R = opt["agmon_sigma_R"]
        sig = sigma_R(H, R, tol) if R is not None else None
        fit = agmon_fit(H, g.eigenvectors[:, 0], tuple(opt["agmon_window"]))
        ref = lattice_amplitude_rate(sig - g.ground, spec.grid.spacing) if sig is not None else None
        d = asdict(fit)
        d.update(energy=g.ground, sigma=sig, reference_rate=ref)
        return d
    raise ValueError(f"unknown job kind {kind}")


# ----------------------------------------------------------------------------
# merging
# ----------------------------------------------------------------------------

def finalize(cfg: dict, results: dict[str, dict]) -> Outcome:
    """Merge per-job results (keyed by Job.key) into a report."""
    exp = cfg["experiment"]
    jobs = jobs_for(cfg)
    by = {j: results[j.key] for j in jobs}
    return _FINALIZERS[exp](cfg, by)


def _fin_selftest(cfg, by):
    rows = [r for j in by for r in by[j]["records"]]
    worst = max((r["value"] for r in rows), default=0.0)
    checks = {"identities": _check(all(r["passed"] for r in rows), worst, cfg["options"]["tolerance"])}
    return Outcome({"records": rows, "worst_defect": worst}, rows, checks)


def _fin_spectrum(cfg, by):
    rows, report = [], {}
    for j, r in by.items():
        L = j.get("L")
        report[str(L)] = r
        rows += [{"L": L, "index": i, "eigenvalue": e, "residual": res}
                 for i, (e, res) in enumerate(zip(r["eigenvalues"], r["residuals"]))]
    worst = max((row["residual"] for row in rows), default=0.0)
    scale = max(1.0, max((abs(row["eigenvalue"]) for row in rows), default=1.0))
    limit = 10 * cfg["tolerance"] * scale
    return Outcome(report, rows, {"residuals": _check(worst <= limit, worst, limit)})


def _fin_thresholds(cfg, by):
    kinds = {j.kind: (j, r) for j, r in by.items() if j.kind != "sigma"}
    values = {j.get("R"): r["sigma"] for j, r in by.items() if j.kind == "sigma"}
    coarse = kinds["coarse"][1]["sigma"] if "coarse" in kinds else None
    rep = threshold_finalize(values, kinds["ground"][1]["energy"], kinds["tau"][1]["tau"],
                             kinds["tau"][1]["table"], coarse, cfg["tolerance"])
    rows = [{"record": "sigma_R", "R": R, "value": v} for R, v in zip(rep.schedule, rep.sigma_R)]
    for name in ("ground_energy", "sigma", "tau", "discrepancy", "relative_discrepancy", "model_tolerance"):
        rows.append({"record": name, "R": "", "value": getattr(rep, name)})
    if coarse is not None:
        rows.append({"record": "coarse_sigma_R", "R": max(rep.schedule), "value": coarse})
    checks = {"monotone": _check(True, 0.0, 0.0),
              "equivalence": _check(rep.passed, abs(rep.discrepancy), rep.model_tolerance)}
    rel = cfg["options"]["relative_tolerance"]
    if rel is not None:
        checks["relative_discrepancy"] = _check(rep.relative_discrepancy <= rel, rep.relative_discrepancy, rel)
    return Outcome(rep.to_dict(), rows, checks)


def _fin_ir(cfg, by):
    points = [r for j, r in by.items() if j.kind == "ir"]
    zero = next((r["energy"] for j, r in by.items() if j.kind == "ir_zero"), None)
    mu_ref = min(p["mu"] for p in points)
    rep = ir_finalize(model_spec(cfg), points, mu_ref, cfg["options"]["R"], zero)
    rows = [{"mu": m, "energy": e, "sigma": s, "energy_shift": de, "sigma_shift": ds, "eta": eta,
             "derived_bound_energy": be, "derived_bound_sigma": bs, "sqrt_mu_bound": sq}
            for m, e, s, de, ds, eta, be, bs, sq in zip(
                rep.mu, rep.energies, rep.sigmas, rep.energy_shifts, rep.sigma_shifts, rep.eta,
                rep.derived_bound_energy, rep.derived_bound_sigma, rep.sqrt_mu_bound)]
    slack = min((min(be - de, bs - ds) for m, de, ds, be, bs in zip(
        rep.mu, rep.energy_shifts, rep.sigma_shifts, rep.derived_bound_energy, rep.derived_bound_sigma)
        if m != rep.mu_ref), default=0.0)
    checks = {"derived_bound": _check(rep.passed, slack, 0.0),
              "monotone_shrink": _check(rep.monotone_shrink, 0.0, 0.0)}
    return Outcome(rep.to_dict(), rows, checks)


def _fin_trial(cfg, by):
    opt = cfg["options"]
    trials = sorted(((j.get("R"), r) for j, r in by.items() if j.kind == "trial"), key=lambda t: t[0])
    merged = dict(trials[0][1])
    for key in ("schedule", "energies", "gaps", "field_cross", "potential_tail", "coupling_overlap",
                "translation_defect", "normalization_defect", "support_radius"):
        merged[key] = [x for _, r in trials for x in r[key]]
    gaps = np.abs(merged["gaps"])
    merged["gap_decreasing"] = bool(np.all(np.diff(gaps) <= 1e-12))
    rows = [{"R": R, "energy": e, "gap": g, "field_cross": fc, "potential_tail": pt,
             "coupling_overlap": co, "translation_defect": td, "normalization_defect": nd,
             "support_radius": sr}
            for R, e, g, fc, pt, co, td, nd, sr in zip(
                merged["schedule"], merged["energies"], merged["gaps"], merged["field_cross"],
                merged["potential_tail"], merged["coupling_overlap"], merged["translation_defect"],
                merged["normalization_defect"], merged["support_radius"])]
    nd = merged["normalization_defect"][-1]
    checks = {"gap_decreasing": _check(merged["gap_decreasing"], float(gaps[-1]), float(gaps[0])),
              "normalization": _check(nd <= opt["normalization_tolerance"], nd, opt["normalization_tolerance"])}
    if opt["sigma_R"] is not None:
        E = next(r["energy"] for j, r in by.items() if j.kind == "ground")
        sig = next(r["sigma"] for j, r in by.items() if j.kind == "sigma")
        limit = opt["gap_fraction"] * (sig - E)
        merged["sigma_scale"] = {"energy": E, "sigma_R": sig, "R": opt["sigma_R"]}
        checks["final_gap"] = _check(float(gaps[-1]) <= limit, float(gaps[-1]), limit)
    return Outcome(merged, rows, checks)


def _fin_decay(cfg, by):
    opt = cfg["options"]
    rows, checks, report = [], {}, {"norms": [], "weighted": [], "ct": [], "agmon": None}
    norms = {}
    for j, r in by.items():
        if j.kind == "norm":
            norms[(j.get("L"), j.get("beta"), j.get("cut"))] = r["norm"]
            report["norms"].append({"L": j.get("L"), "beta": j.get("beta"), "cut": j.get("cut"), **r})
            rows.append({"record": "norm", "L": j.get("L"), "beta": j.get("beta"), "lambda": j.get("cut"),
                         "eps": "", "value": r["norm"]})
    Ls = sorted({k[0] for k in norms})
    worst_ratio = {"localized": 0.0, "delocalized": math.inf}
    for b in sorted({k[1] for k in norms}):
        for c in sorted({k[2] for k in norms}):
            for La, Lb in zip(Ls, Ls[1:]):
                na, nb = norms[(La, b, c)], norms[(Lb, b, c)]
                ratio = nb / na if na > 0 else (1.0 if nb == 0 else math.inf)
                rows.append({"record": "ratio", "L": Lb, "beta": b, "lambda": c, "eps": "", "value": ratio})
                if b > 0:
                    worst_ratio["localized"] = max(worst_ratio["localized"], ratio)
                    worst_ratio["delocalized"] = min(worst_ratio["delocalized"], ratio)
    if len(Ls) > 1:
        if opt["expect"] == "localized":
            w = worst_ratio["localized"]
            checks["bounded_in_L"] = _check(w <= opt["ratio_max"], w, opt["ratio_max"])
        else:
            w = worst_ratio["delocalized"]
            checks["growing_in_L"] = _check(w >= opt["ratio_min"], w, opt["ratio_min"])
    weighted = {}
    for j, r in by.items():
        if j.kind == "weighted":
            weighted.setdefault((j.get("beta"), j.get("cut")), {})[j.get("eps")] = r["norm"]
            report["weighted"].append({"beta": j.get("beta"), "cut": j.get("cut"), "eps": j.get("eps"), **r})
            rows.append({"record": "weighted_norm", "L": 1, "beta": j.get("beta"), "lambda": j.get("cut"),
                         "eps": j.get("eps"), "value": r["norm"]})
    spread = 0.0
    for vals in weighted.values():
        v = list(vals.values())
        if len(v) > 1 and max(v) > 0:
            spread = max(spread, (max(v) - min(v)) / max(v))
    if weighted:
        checks["eps_insensitive"] = _check(spread <= opt["eps_tolerance"], spread, opt["eps_tolerance"])
    cts = [(j, r) for j, r in by.items() if j.kind == "ct"]
    for j, r in cts:
        report["ct"].append(r)
        rows.append({"record": "ct_delta", "L": 1, "beta": j.get("beta"), "lambda": j.get("cut"), "eps": "",
                     "value": r["delta"]})
        rows.append({"record": "ct_min_margin", "L": 1, "beta": j.get("beta"), "lambda": j.get("cut"),
                     "eps": "", "value": r["min_margin"]})
    if cts:
        slack = min(r["min_margin"] - r["delta"] / 2 for _, r in cts)
        checks["combes_thomas"] = _check(all(r["certified"] for _, r in cts), slack, 0.0)
    ag = next((r for j, r in by.items() if j.kind == "agmon"), None)
    if ag is not None:
        report["agmon"] = ag
        rows.append({"record": "agmon_rate", "L": 1, "beta": "", "lambda": "", "eps": "",
                     "value": ag["amplitude_rate"]})
        ok = ag["flag"] == "ok"
        if ag["reference_rate"] is not None:
            limit = opt["agmon_fraction"] * ag["reference_rate"]
            rows.append({"record": "agmon_reference", "L": 1, "beta": "", "lambda": "", "eps": "",
                         "value": ag["reference_rate"]})
            checks["agmon"] = _check(ok and ag["amplitude_rate"] >= limit, ag["amplitude_rate"], limit)
        else:
            checks["agmon"] = _check(ok, ag["decay_efolds"], 2.0)
    return Outcome(report, rows, checks)


_FINALIZERS = {
    "fock-selftest": _fin_selftest,
    "spectrum": _fin_spectrum,
    "thresholds": _fin_thresholds,
    "ir-study": _fin_ir,
    "trial-state": _fin_trial,
    "decay": _fin_decay,
}
