"""Experiment runner: sweeps, checks, CSV tables and a PASS/FAIL summary."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import twopole
from ..geometry import BlowupProfile, Rectangle, build_crack_layout
from ..mesh import CrackedMesh, generate, refine_uniform
from ..potential import L_Psi0, hardy_rayleigh, scan_G, solve_blowup, solve_Veps, theorem1_residual
from ..references import rectangle_modes
from ..spectrum import EigenProblem, extract_local_expansion, require_simple, solve_limit, solve_perturbed
from .config import ExperimentConfig, load_config, parse_config
from .fitting import FitError, aitken_limit, fit_rate, is_cauchy, richardson


class CrossMeshError(ValueError):
    pass


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


@dataclass
class Outcome:
    kind: str
    tables: dict = field(default_factory=dict)     # name -> (header, rows)
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    mesh_h: float | None = None                    # mesh parameter when it is not [mesh] h

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def shift(lim_sol, per_sol) -> float:
    """lam_eps - lam_0, refusing pairs computed on different meshes."""
    if lim_sol.field.mesh.fingerprint() != per_sol.field.mesh.fingerprint():
        raise CrossMeshError("limit and perturbed eigenvalues come from different meshes")
    return per_sol.lam - lim_sol.lam


# --- sweep points -------------------------------------------------------------

def _mesh(cfg: ExperimentConfig, eps: float) -> CrackedMesh:
    return generate(cfg.domain, build_crack_layout(cfg.poles, eps, cfg.domain), cfg.h, cfg.grading)


def _eigen_shift(mesh, cfg, eps):
    prob = EigenProblem(mesh)
    nev = max(cfg.nev, cfg.index + 1)
    lim = require_simple(solve_limit(prob, cfg.poles, nev, cfg.tol), cfg.index)
    per = require_simple(solve_perturbed(prob, cfg.poles, eps, nev, cfg.tol), cfg.index)
    return prob, lim, per


def sweep_point(cfg: ExperimentConfig, eps: float, potential: bool = False) -> dict:
    mesh = _mesh(cfg, eps)
    prob, lim, per = _eigen_shift(mesh, cfg, eps)
    row = {"eps": eps, "n_nodes": mesh.n, "lam0": lim.lam, "lam_eps": per.lam, "delta": shift(lim, per),
           "residual": max(lim.residual, per.residual)}
    if cfg.richardson:
        fine = refine_uniform(mesh)
        _, lim2, per2 = _eigen_shift(fine, cfg, eps)
        row["delta_h2"] = shift(lim2, per2)
        row["delta_rich"] = richardson(row["delta"], row["delta_h2"])
        row["lam0_rich"] = richardson(lim.lam, lim2.lam)
    if potential:
        sol = solve_Veps(mesh, lim.field, cfg.poles, eps, lam0=lim.lam, K=prob.K, M=prob.M)
        r = theorem1_residual(per.lam, lim.lam, sol)
        row.update(E_eps=sol.E_eps, L_eps_v0=sol.L_eps_v0, norm2=sol.norm2, rhs=r.rhs,
                   ratio=r.ratio, lhs_ratio=r.lhs_ratio, identity=sol.identity_residual)
    row["_limit"] = lim
    return row


def _sweep(cfg: ExperimentConfig, threads: int, potential: bool):
    work = lambda e: sweep_point(cfg, e, potential)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, cfg.eps))
    return [work(e) for e in cfg.eps]


def _local_fit(cfg: ExperimentConfig, lim):
    odd = cfg.poles.k % 2 == 1
    radii = cfg.value("fit", "radii", None)
    radii = [float(x) for x in str(radii).split(",")] if isinstance(radii, str) else (
        [radii] if radii else [0.05 * cfg.poles.R, 0.1 * cfg.poles.R])
    if len(radii) == 1:
        radii = [radii[0], 2 * radii[0]]
    return extract_local_expansion(lim.field, 1 if odd else 0, radii, cfg.poles, lam=lim.lam)


def _snap_alpha0(alpha0: float, m: int) -> tuple[float, str | None]:
    """Nearest nodal (j pi/m) or bisector (pi/(2m) + j pi/m) angle, within 0.05 rad."""
    step = math.pi / m
    j = round(alpha0 / step)
    if abs(alpha0 - j * step) < 0.05:
        return j * step, "nodal-family"
    j = round((alpha0 - 0.5 * step) / step)
    if abs(alpha0 - (j + 0.5) * step) < 0.05:
        return (j + 0.5) * step, "bisector-family"
    return alpha0, None


def _two_pole_reference(cfg: ExperimentConfig, fit):
    """(case, beta, coefficient) for two opposite poles, or None without a [reference] block."""
    ref = cfg.section("reference")
    if not ref:
        return None
    m = fit.m
    a0, family = _snap_alpha0(fit.alpha0, m)
    case = ref.get("case", "auto").strip().lower()
    if case == "auto":
        if family is None:
            raise FitError(f"alpha0 = {fit.alpha0:.4f} is neither nodal nor bisector")
        d = (cfg.poles.angles[0] - a0) / (math.pi / m)
        case = twopole.NODAL if abs(d - round(d)) < 1e-6 else twopole.BISECTOR
    beta_spec = ref.get("beta", "fit").strip().lower()
    if beta_spec == "rectangle":
        if not isinstance(cfg.domain, Rectangle):
            raise FitError("beta = rectangle needs a rectangular domain")
        d = cfg.domain
        mode = rectangle_modes(d.xmax - d.xmin, d.ymax - d.ymin, cfg.index, origin=(d.xmin, d.ymin))[-1]
        beta = twopole.beta_from_taylor(mode.partials((0.0, 0.0), m), m, a0)
    elif beta_spec == "fit":
        beta = fit.beta
    else:
        beta = cfg.value("reference", "beta")
    r1 = cfg.poles.radii[0]
    return case, float(beta), twopole.leading_coefficient(m, float(beta), r1, case)


def _sweep_table(rows, keys):
    return keys, [[r[k] for k in keys] for r in rows]


def _run_sweep(cfg: ExperimentConfig, threads: int, potential: bool) -> Outcome:
    if cfg.poles is None or cfg.domain is None:
        raise ValueError("sweeps need [domain] and [poles] blocks")
    out = Outcome(cfg.kind)
    rows = _sweep(cfg, threads, potential)
    fit = _local_fit(cfg, rows[-1]["_limit"])
    odd = cfg.poles.k % 2 == 1
    keys = ["eps", "n_nodes", "lam0", "lam_eps", "delta", "residual"]
    if cfg.richardson:
        keys += ["delta_h2", "delta_rich", "lam0_rich"]
    if potential:
        keys += ["E_eps", "L_eps_v0", "norm2", "rhs", "ratio", "lhs_ratio", "identity"]
    out.tables["sweep"] = _sweep_table(rows, keys)
    out.tables["local_expansion"] = (["m", "beta", "alpha0", "residual", "exponent", "conclusive"],
                                     [[fit.m, fit.beta, fit.alpha0, fit.residual, fit.exponent, fit.conclusive]])
    out.checks.append(Check("local expansion of the limit eigenfunction", fit.conclusive,
                            f"m = {fit.m}, beta = {fit.beta:.6g}, alpha0 = {fit.alpha0:.6g}, "
                            f"fit residual {fit.residual:.2e}"))
    dkey = "delta_rich" if cfg.richardson else "delta"
    noise = 10 * cfg.tol * max(abs(r["lam0"]) for r in rows)
    pts = [(r["eps"], r[dkey]) for r in rows]
    try:
        rate = fit_rate(pts, noise)
    except FitError as exc:
        out.checks.append(Check("power-law fit of the eigenvalue shift", False, str(exc)))
        rate = None
    ref = _two_pole_reference(cfg, fit) if not odd else None
    exp_tol = cfg.value("reference", "exponent_tol", 0.05 if not odd else 0.10)
    target = 2 * fit.m if not odd else fit.m
    if rate is not None:
        out.tables["fit"] = (["exponent", "coefficient", "sign", "loglog_residual", "n_used", "n_rejected"],
                             [[rate.exponent, rate.coefficient, rate.sign, rate.residual,
                               len(rate.used), len(rate.rejected)]])
        out.checks.append(Check("shift exponent", abs(rate.exponent - target) <= exp_tol * target,
                                f"{rate.exponent:.4f} vs {target} (tol {exp_tol:.0%})"))
    if ref is not None:
        case, beta, coef = ref
        coef_tol = cfg.value("reference", "coefficient_tol", 0.10)
        out.tables["reference"] = (["case", "beta", "leading_coefficient"], [[case, beta, coef]])
        if rate is not None:
            # coefficient at the predicted exponent, from the smallest eps
            c_fit = pts[-1][1] / pts[-1][0] ** target
            out.checks.append(Check("shift coefficient", abs(c_fit - coef) <= coef_tol * abs(coef),
                                    f"{c_fit:.6g} vs {coef:.6g} (tol {coef_tol:.0%})"))
        want = 1 if case == twopole.BISECTOR else -1
        ok = all(math.copysign(1, r["delta"]) == want for r in rows)
        out.checks.append(Check("shift sign", ok, f"{'positive' if want > 0 else 'negative'} required "
                                                  f"at every eps ({case})"))
    if potential:
        lr = [r["lhs_ratio"] for r in rows]
        mono = all(b < a for a, b in zip(lr, lr[1:]))
        out.checks.append(Check("energy expansion defect decreases", mono,
                                ", ".join(f"{x:.3e}" for x in lr)))
        out.checks.append(Check("energy expansion defect at smallest eps", lr[-1] < 0.15,
                                f"{lr[-1]:.3e} < 0.15"))
        idn = rows[-1]["identity"]
        out.checks.append(Check("mass identity for V_eps", idn < 1e-4, f"{idn:.2e} < 1e-4"))
        if odd:
            scaled = [r["E_eps"] / r["eps"] ** fit.m for r in rows]
            out.tables["scaled_energy"] = (["eps", "E_eps_scaled"], [[r["eps"], s] for r, s in zip(rows, scaled)])
            out.checks.append(Check("scaled energy is Cauchy", is_cauchy(scaled),
                                    ", ".join(f"{x:.5g}" for x in scaled)))
            if cfg.section("blowup"):
                prof = BlowupProfile(fit.m, fit.beta, fit.alpha0)
                b = solve_blowup(cfg.poles, prof, cfg.value("blowup", "rho", 8.0), cfg.value("blowup", "h", 0.08))
                lim_E = aitken_limit(scaled)
                out.tables["blowup"] = (["rho", "E_rho"], [[r, e] for r, e in zip(b.rhos, b.energies)]
                                        + [["extrapolated", b.E]])
                out.checks.append(Check("scaled energy limit vs blow-up energy",
                                        abs(lim_E - b.E) <= 0.15 * abs(b.E),
                                        f"{lim_E:.6g} vs {b.E:.6g} (tol 15%)"))
    return out


# --- other kinds --------------------------------------------------------------

def _run_limit(cfg: ExperimentConfig, threads: int) -> Outcome:
    out = Outcome(cfg.kind)
    eps = cfg.eps[-1]
    mesh = _mesh(cfg, eps) if cfg.poles is not None else generate(cfg.domain, None, cfg.h, cfg.grading)
    sols = solve_limit(EigenProblem(mesh), cfg.poles, max(cfg.nev, cfg.index + 1), cfg.tol)
    out.tables["limit"] = (["index", "lambda", "residual", "gap", "simple"],
                           [[s.index, s.lam, s.residual, s.gap, s.simple] for s in sols])
    target = next(s for s in sols if s.index == cfg.index)
    out.checks.append(Check(f"eigenvalue {cfg.index} is simple", target.simple, f"relative gap {target.gap:.2e}"))
    if cfg.poles is not None:
        fit = _local_fit(cfg, target)
        out.tables["local_expansion"] = (["m", "beta", "alpha0", "residual", "exponent", "conclusive"],
                                         [[fit.m, fit.beta, fit.alpha0, fit.residual, fit.exponent,
                                           fit.conclusive]])
        out.checks.append(Check("local expansion", fit.conclusive, f"m = {fit.m}, exponent {fit.exponent:.4f}"))
    return out


def _profile(cfg: ExperimentConfig) -> BlowupProfile:
    sec = "profile"
    return BlowupProfile(int(cfg.value(sec, "m", 1)), cfg.value(sec, "beta", 1.0), cfg.value(sec, "alpha0", 0.0),
                         cfg.poles.k % 2 == 1)


def _run_blowup(cfg: ExperimentConfig, threads: int) -> Outcome:
    out = Outcome(cfg.kind, mesh_h=cfg.value("blowup", "h", 0.08))
    prof = _profile(cfg)
    levels = int(cfg.value("blowup", "levels", 3))
    b = solve_blowup(cfg.poles, prof, cfg.value("blowup", "rho", 8.0), cfg.value("blowup", "h", 0.08), levels)
    L = L_Psi0(cfg.poles, prof)
    out.tables["blowup"] = (["rho", "E_rho"], [[r, e] for r, e in zip(b.rhos, b.energies)])
    out.tables["summary"] = (["E", "L_Psi0", "G", "norm2"], [[b.E, L, b.E - L, b.norm2]])
    if b.converged is not None:
        out.checks.append(Check("truncation increments decay", b.converged,
                                ", ".join(f"{e:.8g}" for e in b.energies)))
    return out


def _run_scan(cfg: ExperimentConfig, threads: int) -> Outcome:
    out = Outcome(cfg.kind, mesh_h=cfg.value("blowup", "h", 0.08))
    prof = _profile(cfg)
    n = int(cfg.value("scan", "points", 17))
    zetas = np.linspace(0.0, math.pi / prof.m, n)
    sc = scan_G(cfg.poles, prof, zetas, cfg.value("blowup", "rho", 8.0), cfg.value("blowup", "h", 0.08),
                cfg.value("scan", "rel_tol", 1e-4))
    out.tables["scan"] = (["zeta", "G"], [[z, g] for z, g in zip(sc.zetas, sc.values)])
    out.tables["root"] = (["bracket_lo", "bracket_hi", "zeta0", "G_zeta0", "iterations"],
                          [[sc.bracket[0], sc.bracket[1], sc.root, sc.G_root, sc.iterations]])
    gmax = max(abs(g) for g in sc.values)
    out.checks.append(Check("G(0) < 0", sc.values[0] < 0, f"{sc.values[0]:.6g}"))
    out.checks.append(Check("G(pi/m) > 0", sc.values[-1] > 0, f"{sc.values[-1]:.6g}"))
    out.checks.append(Check("root of G inside (0, pi/m)",
                            0 < sc.root < math.pi / prof.m and abs(sc.G_root) < 1e-4 * gmax,
                            f"zeta0 = {sc.root:.8f}, |G| = {abs(sc.G_root):.2e}"))
    return out


def _run_twopole(cfg: ExperimentConfig, threads: int) -> Outcome:
    out = Outcome(cfg.kind)
    m_max = int(cfg.value("twopole", "m_max", 8))
    beta = cfg.value("twopole", "beta", 1.0)
    r1 = cfg.value("twopole", "r1", 1.0)
    rows, ok = [], True
    for m in range(1, m_max + 1):
        try:
            s_c, s_d, _, _ = twopole.sums_check(m)
        except twopole.SelfCheckError:
            ok = False
            continue
        rows.append([m, str(s_c), str(s_d), float(s_c), float(s_d),
                     twopole.leading_coefficient(m, beta, r1, twopole.BISECTOR)])
    out.tables["twopole"] = (["m", "sum_j_cj2", "sum_dj2_over_j", "sum_j_cj2_float", "sum_dj2_over_j_float",
                              "bisector_coefficient"], rows)
    out.checks.append(Check("mode sums match closed forms", ok and len(rows) == m_max, f"m = 1..{m_max}, exact"))
    return out


def _run_hardy(cfg: ExperimentConfig, threads: int) -> Outcome:
    out = Outcome(cfg.kind, mesh_h=cfg.value("hardy", "h", 0.05))
    k1s = [int(k) for k in str(cfg.section("hardy").get("k1", "1, 2")).split(",")]
    rs = [float(x) for x in str(cfg.section("hardy").get("r", "1, 2, 4")).split(",")]
    h = cfg.value("hardy", "h", 0.05)
    rows = []
    for k in k1s:
        vals = [hardy_rayleigh(k, r, h) for r in rs]
        rows += [[k, r, v] for r, v in zip(rs, vals)]
        spread = (max(vals) - min(vals)) / max(abs(max(vals)), 1e-300)
        if k % 2:
            out.checks.append(Check(f"Hardy quotient k1 = {k} bounded below", min(vals) >= 0.24,
                                    f"min {min(vals):.6f} >= 0.24"))
            out.checks.append(Check(f"Hardy quotient k1 = {k} independent of r", spread < 1e-6,
                                    f"relative spread {spread:.1e}"))
        else:
            out.checks.append(Check(f"Hardy quotient k1 = {k} degenerates", max(vals) < 1e-3,
                                    f"max {max(vals):.2e} < 1e-3"))
    out.tables["hardy"] = (["k1", "r", "value"], rows)
    return out


def _run_report(cfg: ExperimentConfig, threads: int, out_dir: Path) -> Outcome:
    out = Outcome(cfg.kind)
    dirs = [Path(d.strip()) for d in cfg.section("report").get("dirs", "").split(",") if d.strip()]
    if not dirs:
        dirs = sorted(p.parent for p in out_dir.glob("*/summary.txt"))
    for d in dirs:
        f = d / "summary.txt"
        if not f.exists():
            out.checks.append(Check(f"summary in {d}", False, "missing"))
            continue
        lines = [l for l in f.read_text().splitlines() if l.startswith(("PASS", "FAIL"))]
        failed = [l for l in lines if l.startswith("FAIL")]
        out.checks.append(Check(f"{d.name}", not failed, f"{len(lines) - len(failed)}/{len(lines)} checks pass"))
    return out


_RUNNERS = {
    "limit": _run_limit,
    "perturbed-sweep": lambda c, t: _run_sweep(c, t, potential=False),
    "potential-sweep": lambda c, t: _run_sweep(c, t, potential=True),
    "blowup": _run_blowup,
    "scan-zeta": _run_scan,
    "twopole": _run_twopole,
    "hardy": _run_hardy,
}


# --- output ----------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_outputs(outcome: Outcome, cfg: ExperimentConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    prov = [cfg.hash, _fmt(cfg.h if outcome.mesh_h is None else outcome.mesh_h), _fmt(cfg.tol)]
    for name, (header, rows) in outcome.tables.items():
        with open(out_dir / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["config_hash", "mesh_h", "solver_tol"] + list(header))
            for row in rows:
                w.writerow(prov + [_fmt(x) for x in row])
    lines = [f"experiment {outcome.kind}  config {cfg.hash}"]
    lines += [c.line() for c in outcome.checks]
    lines += outcome.notes
    lines.append(f"overall {'PASS' if outcome.passed else 'FAIL'}")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")


def write_error(out_dir: Path, cfg_hash: str, exc: BaseException):
    out_dir.mkdir(parents=True, exist_ok=True)
    rec = {"config_hash": cfg_hash, "error": type(exc).__name__, "message": str(exc)}
    (out_dir / "error.json").write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
    return rec


def run(config, out_dir, threads: int = 1) -> Outcome:
    """Run one experiment and write its CSV tables and summary.txt into out_dir."""
    if isinstance(config, (str, Path)) and Path(config).exists():
        cfg = load_config(config)
    elif isinstance(config, str):
        cfg = parse_config(config)
    else:
        cfg = config
    out_dir = Path(out_dir)
    if cfg.kind == "report":
        outcome = _run_report(cfg, threads, out_dir)
    else:
        outcome = _RUNNERS[cfg.kind](cfg, threads)
    write_outputs(outcome, cfg, out_dir)
    return outcome
