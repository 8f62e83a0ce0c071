"""Experiment dispatch: one function per kind, each writing CSV tables and grid files."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..besov import SpectralField, TestFunction, MOTHER, FATHER, regularity_slope, standard_family
from ..heat_kernel import (KernelDecomposition, annulus, base_piece, dx_heat_l1, heat_kernel)
from ..parabolic import GriddedField, Rect, SpaceTimeGrid, fit_slope
from ..rough_model import (RenormTable, area_moment_scan, chen_defect, levy_area, renorm_limit_check)
from ..solver import (SolverConfig, bump_affine, bump_sin, convergence_study, solve_batch,
                      solve_ito_batch, solver_lattice, zero_field)
from ..spectral_field import (AxisParams, SheetSpec, evaluate, evaluate_grid, exact_increment_moment,
                              exact_second_moment, exact_test_moment, sample_noise)
from .config import ExperimentConfig
from .gridfile import write_grid


class RunError(RuntimeError):
    pass


@dataclass
class Report:
    out: Path
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class _Writer:
    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.report = Report(out)

    def table(self, name: str, columns: list[tuple[str, str]], rows, note: str = "") -> Path:
        """columns: (name, unit) pairs; the unit and provenance go in a comment line."""
        buf = io.StringIO()
        units = " ".join(f"{c}[{u}]" for c, u in columns)
        buf.write(f"# units: {units} | kind={self.cfg.kind} seed={self.cfg.seed} "
                  f"version={__version__}{' | ' + note if note else ''}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([c for c, _ in columns])
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        path = self.out / f"{name}.csv"
        path.write_text(buf.getvalue())
        self.report.files.append(path.name)
        return path

    def grid(self, name: str, f: GriddedField) -> Path:
        path = write_grid(self.out / f"{name}.fhg", f)
        self.report.files.append(path.name)
        return path


# shared builders ---------------------------------------------------------

def _axes(cfg: ExperimentConfig) -> tuple[AxisParams, AxisParams]:
    s = cfg.section("sheet")
    return tuple(AxisParams(s[f"{p}_inner_exp"], s[f"{p}_per_octave"], s[f"{p}_max_spacing"],
                            s[f"{p}_uniform_until"], s[f"{p}_far_per_octave"]) for p in ("time", "space"))


def _spec(cfg: ExperimentConfig, n: int | None = None, pair=None) -> SheetSpec:
    H1, H2 = pair or cfg.hurst_pairs()[0]
    return SheetSpec(H1, H2, cfg[("sheet", "n")] if n is None else n, *_axes(cfg))


def _kd(cfg: ExperimentConfig) -> KernelDecomposition:
    k = cfg.section("kernel")
    return KernelDecomposition(k["n_max"], k["nt_table"], k["nx_table"])


def _window(cfg: ExperimentConfig) -> SpaceTimeGrid:
    g = cfg.section("grid")
    return SpaceTimeGrid(g["t_min"], g["t_max"], g["nt"], g["x_min"], g["x_max"], g["nx"])


def _vector_field(cfg: ExperimentConfig):
    s = cfg.section("solver")
    if s["F"] == "bump_sin":
        return bump_sin(s["a"], s["amp"])
    if s["F"] == "bump_affine":
        return bump_affine(s["a"], s["amp"], s["slope"])
    return zero_field(s["a"])


_PSI0 = {"gauss": lambda x: np.exp(-x ** 2), "one": lambda x: np.ones_like(x), "zero": np.zeros_like}


def _solver_cfg(cfg: ExperimentConfig, level: int, save_rows: int | None = None) -> SolverConfig:
    s = cfg.section("solver")
    return SolverConfig.for_level(level, L=s["L"], T=s["T"], time_margin=s["time_margin"],
                                  psi0=_PSI0[s["psi0"]], save_rows=save_rows or s["save_rows"])


def _solver_axes(cfg: ExperimentConfig, n_top: int):
    s = cfg.section("solver")
    return solver_lattice(n_top, s["lattice_ht"], s["lattice_hx"])


# kinds -----------------------------------------------------------------

def _run_sample(cfg, w: _Writer):
    spec = _spec(cfg)
    r = sample_noise(spec, cfg.seed)
    win = _window(cfg)
    kd = _kd(cfg)
    rows = []
    for kind in cfg[("sample", "fields")]:
        if kind not in ("sheet", "noise", "K_noise"):
            raise RunError(f"unknown field {kind!r}")
        f = evaluate_grid(r, win, kind, kd if kind == "K_noise" else None)
        w.grid(kind, f)
        v = f.values
        rows.append((kind, v.min(), v.max(), v.mean(), math.sqrt(float(np.mean(v ** 2)))))
    w.table("fields", [("field", "-"), ("min", "value"), ("max", "value"), ("mean", "value"), ("rms", "value")],
            rows, f"modes={spec.n_modes}")
    w.report.summary.update(modes=spec.n_modes, fields=[r_[0] for r_ in rows])


def _run_moments(cfg, w: _Writer):
    q = cfg[("moments", "quantity")]
    if q == "covariance":
        spec = _spec(cfg)
        pts = cfg[("moments", "points")]
        if not pts or any(len(p) != 4 for p in pts):
            raise RunError("covariance needs point pairs 't x t x; ...'")
        flat = np.array([[p[0], p[1]] for p in pts] + [[p[2], p[3]] for p in pts])
        D = cfg[("moments", "draws")]
        prod = np.empty((D, len(pts)))
        k = len(pts)
        for d in range(D):
            v = evaluate(sample_noise(spec, cfg.seed + d), flat, "sheet")
            prod[d] = v[:k] * v[k:]
        mc = prod.mean(axis=0)
        se = prod.std(axis=0, ddof=1) / math.sqrt(D)
        rows, z, ratio = [], [], []
        for i, p in enumerate(pts):
            ex = exact_second_moment(spec, p[:2], p[2:])
            mm = min(p[0], p[2]) * min(p[1], p[3])
            rows.append((i, *p, mc[i], se[i], ex, mm, ex / mm))
            z.append(abs(mc[i] - ex) / se[i])
            ratio.append(abs(ex / mm - 1))
        w.table("covariance", [("pair", "-"), ("p_t", "time"), ("p_x", "space"), ("q_t", "time"), ("q_x", "space"),
                               ("mc", "value^2"), ("se", "value^2"), ("exact", "value^2"), ("min_min", "value^2"),
                               ("ratio", "-")], rows, f"draws={D} modes={spec.n_modes}")
        w.report.summary.update(max_z=max(z), max_ratio_dev=max(ratio), draws=D)
    elif q == "increment":
        rows, fits = [], []
        offs = [2.0 ** -k for k in cfg[("moments", "offsets")]]
        side = cfg[("moments", "fixed_side")]
        for H1, H2 in cfg.hurst_pairs():
            spec = _spec(cfg, pair=(H1, H2))
            for direction in ("time", "space"):
                vals = []
                for o in offs:
                    m = exact_increment_moment(spec, (o, side) if direction == "time" else (side, o))
                    vals.append(m)
                    rows.append((H1, H2, direction, o, m))
                slope, res = fit_slope(np.log2(offs), np.log2(vals))
                target = 2 * (H1 if direction == "time" else H2)
                fits.append((H1, H2, direction, slope, target, res))
        w.table("increments", [("H1", "-"), ("H2", "-"), ("direction", "-"), ("offset", "length"),
                               ("moment", "value^2")], rows)
        w.table("increment_fits", [("H1", "-"), ("H2", "-"), ("direction", "-"), ("slope", "log2/log2"),
                                   ("target", "log2/log2"), ("max_residual", "log2")], fits)
        w.report.summary.update(max_slope_error=max(abs(f[3] - f[4]) for f in fits),
                                slopes=[(f[0], f[1], f[2], f[3]) for f in fits])
    else:
        slopes = _test_curve_named(cfg, w, None, "test_moments")
        H1, H2 = cfg.hurst_pairs()[0]
        w.report.summary.update(exact_slopes=slopes, target_moment_slope=2 * (3 - 2 * H1 - H2))


def _run_besov(cfg, w: _Writer):
    spec = _spec(cfg)
    H1, H2 = spec.H1, spec.H2
    fields = cfg[("besov", "fields")]
    kd = _kd(cfg) if "K_noise" in fields else None
    region = Rect(*cfg[("besov", "region")])
    levels = cfg[("besov", "levels")]
    r = sample_noise(spec, cfg.seed)
    target = 2 * (3 - 2 * H1 - H2)
    rows, summary = [], {"target_moment_slope": target}
    for kind in fields:
        exact = _test_curve_named(cfg, w, kd if kind == "K_noise" else None, f"test_moments_{kind}")
        fit = regularity_slope(SpectralField(r, kind, kd if kind == "K_noise" else None),
                               standard_family(), region, levels, cfg[("besov", "cap")])
        rows += [(kind, lev, rms) for lev, rms in zip(fit.levels, fit.rms)]
        summary[kind] = {"exact_slopes": exact, "alpha": fit.alpha, "moment_slope": -2 * fit.alpha,
                         "max_residual": fit.max_residual}
    w.table("level_rms", [("field", "-"), ("level", "-"), ("rms", "value")], rows,
            f"region={tuple(region)} seed={cfg.seed}")
    if "noise" in summary and "K_noise" in summary:
        summary["gain"] = summary["K_noise"]["alpha"] - summary["noise"]["alpha"]
    w.report.summary.update(summary)


def _test_curve_named(cfg, w, kd, name):
    spec = _spec(cfg)
    levels = list(cfg[("besov", "levels")])
    rows, slopes = [], {}
    for psi in standard_family():
        vals = [exact_test_moment(spec, psi, lev, kd=kd) for lev in levels]
        rows += [(psi.name, lev, v) for lev, v in zip(levels, vals)]
        slopes[psi.name] = fit_slope(levels, np.log2(vals))[0]
    w.table(name, [("member", "-"), ("level", "-"), ("moment", "value^2")], rows)
    return slopes


def _run_kernel(cfg, w: _Writer):
    kd = _kd(cfg)
    k = cfg.section("kernel")
    N = min(k["check_levels"], kd.n_max)
    rng = np.random.default_rng(cfg.seed)
    # resolved annulus: parabolic radius in [2^{-N-1}, 1]
    r = 2.0 ** rng.uniform(-N - 1, 0, k["check_points"])
    th = rng.uniform(-1, 1, r.size)
    t = (r ** 2) * np.abs(th) + 1e-300
    x = np.sign(th) * r * np.sqrt(1 - np.abs(th))
    x = np.where(rng.random(r.size) < 0.5, x, -x)
    pieces = kd.pieces(t, x)
    partial = pieces.levels[: N + 1].sum(axis=0)
    K = kd.K_full(t, x)
    sum_err = float(np.max(np.abs(partial - K) / np.maximum(np.abs(K), 1e-300) * (np.abs(K) > 0)))
    sim = []
    for lev in range(N + 1):
        direct = annulus(4.0 ** lev * t, 2.0 ** lev * x) * heat_kernel(t, x)
        scaled = 2.0 ** lev * base_piece(4.0 ** lev * t, 2.0 ** lev * x)
        sim.append(float(np.max(np.abs(direct - scaled)) / max(float(np.abs(direct).max()), 1e-300)))
    times = k["l1_times"]
    l1 = [dx_heat_l1(s) for s in times]
    prod = [v * math.sqrt(s) for v, s in zip(l1, times)]
    spread = (max(prod) - min(prod)) / float(np.mean(prod))
    w.table("l1_scaling", [("t", "time"), ("l1", "1/length"), ("l1_sqrt_t", "-"), ("closed_form", "-")],
            [(s, v, p, 1 / math.sqrt(math.pi)) for s, v, p in zip(times, l1, prod)])
    w.table("self_similarity", [("level", "-"), ("rel_defect", "-")], list(enumerate(sim)))
    g = SpaceTimeGrid(2.0 ** -12, 1.0, 257, -1.0, 1.0, 257)
    Tm, Xm = g.mesh()
    w.grid("K", GriddedField(g, kd.K_full(Tm, Xm)))
    w.report.summary.update(sum_rel_error=sum_err, self_similarity=max(sim), l1_spread=spread,
                            l1_const_error=max(abs(p * math.sqrt(math.pi) - 1) for p in prod),
                            mass_K=kd.mass_K, points=int(r.size), levels=N)


def _run_renorm(cfg, w: _Writer):
    kd = _kd(cfg)
    ns = list(cfg[("renorm", "n")])
    rows, summary = [], {}
    for H1, H2 in cfg.hurst_pairs():
        tab = RenormTable(H1, H2, max(ns), kd, tuple(cfg[("renorm", "nodes")]))
        vals = [tab.values[n] for n in ns]
        for n in ns:
            c = tab.constant(n)
            rows.append((H1, H2, n, c.value, c.value / n if n else float("nan"), c.rel_error, c.imag_residual))
        key = f"{H1}/{H2}"
        ent = {"values": dict(zip(ns, vals)), "target_slope": 2 * (2 - 2 * H1 - H2),
               "max_rel_error": max(tab.rel_errors[n] for n in ns)}
        if len(ns) >= 2:
            ent["slope"] = fit_slope(ns, np.log2(vals))[0]
            a, b = ns[-2], ns[-1]
            if a > 0:
                ent["last_ratio_variation"] = abs(vals[-1] / b - vals[-2] / a) / (vals[-1] / b)
        if cfg[("renorm", "limit_check")] and 2 * H1 + H2 < 2:
            lc = renorm_limit_check(H1, H2, max(ns), kd, tab)
            ent.update(rescaled=lc.rescaled, limit=lc.limit, limit_closed_form=lc.limit_closed_form_G,
                       limit_rel_gap=lc.rel_gap)
            w.table(f"limit_{H1}_{H2}", [("n", "-"), ("rescaled", "value"), ("limit_series", "value"),
                                         ("limit_closed_form", "value")],
                    [(max(ns), lc.rescaled, lc.limit, lc.limit_closed_form_G)])
        summary[key] = ent
    w.table("constants", [("H1", "-"), ("H2", "-"), ("n", "-"), ("C", "value"), ("C_over_n", "value"),
                          ("rel_error", "-"), ("imag_residual", "-")], rows,
            f"nodes={tuple(cfg[('renorm', 'nodes')])}")
    w.report.summary.update(summary)


def _run_levy(cfg, w: _Writer):
    kd = _kd(cfg)
    s = cfg.section("levy")
    H1, H2 = cfg.hurst_pairs()[0]
    if s["mode"] == "chen":
        spec = _spec(cfg)
        C = RenormTable(H1, H2, spec.n, kd).constant(spec.n) if 2 * H1 + H2 < 2 else None
        rows = []
        for i in range(s["seeds"]):
            seed = cfg.seed + i
            r = sample_noise(spec, seed)
            rng = np.random.default_rng([seed, 0xC4E])
            for variant in s["variants"]:
                if variant == "renormalized" and C is None:
                    continue
                worst = 0.0
                for _ in range(s["pairs"]):
                    x, y = rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)
                    probes = rng.uniform(0, 1, (s["probes"], 2))
                    worst = max(worst, chen_defect(r, kd, x, y, probes, variant,
                                                   C if variant == "renormalized" else None))
                rows.append((seed, variant, s["pairs"], worst))
            if i == 0:
                sl = levy_area(r, kd, tuple(s["base"]), _window(cfg))
                w.grid("area", sl.values)
        w.table("chen", [("seed", "-"), ("variant", "-"), ("pairs", "-"), ("max_rel_defect", "-")], rows)
        w.report.summary.update(max_defect=max(r_[3] for r_ in rows), rows=len(rows))
        return
    psi = TestFunction(MOTHER, FATHER, "mother-father")
    n, m = cfg[("sheet", "n")], cfg[("sheet", "m")]
    base = tuple(s["base"])
    scan = area_moment_scan(_spec(cfg, n=m), n, psi, s["levels"], base, s["samples"], cfg.seed, kd)
    w.table("area_scan", [("level", "-"), ("moment", "value^2"), ("std_error", "value^2")],
            list(zip(scan.levels, scan.moments, scan.std_errors)), f"n={n} m={m} samples={scan.samples}")
    summary = {"slope": scan.slope(), "target_slope": 2 * (4 - 4 * H1 - 2 * H2),
               "moments": scan.moments, "std_errors": scan.std_errors}
    if s["decay_n"] and s["decay_levels"]:
        rows, per = [], {lev: [] for lev in s["decay_levels"]}
        for nn in s["decay_n"]:
            sc = area_moment_scan(_spec(cfg, n=nn + s["gap"]), nn, psi, s["decay_levels"], base,
                                  s["samples"], cfg.seed, kd)
            for lev, mo, se in zip(sc.levels, sc.moments, sc.std_errors):
                rows.append((nn, nn + s["gap"], lev, mo, se))
                per[lev].append(mo)
        w.table("area_decay", [("n", "-"), ("m", "-"), ("level", "-"), ("moment", "value^2"),
                               ("std_error", "value^2")], rows)
        summary["decay"] = {lev: -fit_slope(list(s["decay_n"]), np.log2(v))[0] for lev, v in per.items()}
    w.report.summary.update(summary)


def _run_solve(cfg, w: _Writer):
    s = cfg.section("solver")
    H1, H2 = cfg.hurst_pairs()[0]
    n = s["level"]
    F = _vector_field(cfg)
    axes = _solver_axes(cfg, n)
    spec = SheetSpec(H1, H2, n, *axes)
    eq = s["equation"]
    C = float(RenormTable(H1, H2, n).values[n]) if eq in ("renormalized", "compare") else 0.0
    if eq != "compare":
        scfg = _solver_cfg(cfg, n)
        if eq == "ito":
            from ..solver import solve_ito_reference
            path = solve_ito_reference(H2, F, scfg, cfg.seed, n, axes[1])
        else:
            path = solve_batch([sample_noise(spec, cfg.seed)], F, scfg, C, eq)[0]
        w.grid("path", path.field())
        j = int(np.argmin(np.abs(scfg.x - s["probe_x"])))
        w.table("final", [("x", "space"), ("Y_T", "value")], list(zip(scfg.x, path.final())),
                json.dumps(path.provenance, sort_keys=True, default=str))
        w.report.summary.update(final_at_probe=float(path.final()[j]), C=C, nt=scfg.nt, nx=scfg.nx)
        return
    scfg = _solver_cfg(cfg, n, save_rows=2)
    j = int(np.argmin(np.abs(scfg.x - s["probe_x"])))
    P, B = s["paths"], s["batch"]
    ren, ito = [], []
    for start in range(0, P, B):
        k = min(B, P - start)
        rs = [sample_noise(spec, cfg.seed + start + i) for i in range(k)]
        ren += [p.final()[j] for p in solve_batch(rs, F, scfg, C)]
        ito += [p.final()[j] for p in solve_ito_batch(H2, F, scfg, s["ito_seed"] * 1_000_003 + start, k, n, axes[1])]
    ren, ito = np.array(ren), np.array(ito)
    rows, z = [], {}
    for name, fn in (("mean", lambda v: v), ("second_moment", lambda v: v ** 2)):
        a, b = fn(ren), fn(ito)
        sa, sb = a.std(ddof=1) / math.sqrt(a.size), b.std(ddof=1) / math.sqrt(b.size)
        z[name] = abs(a.mean() - b.mean()) / math.hypot(sa, sb)
        rows.append((name, a.mean(), sa, b.mean(), sb, z[name]))
    w.table("ito_compare", [("statistic", "-"), ("renormalized", "value"), ("renormalized_se", "value"),
                            ("ito", "value"), ("ito_se", "value"), ("z", "-")], rows,
            f"paths={P} n={n} C={C!r} probe_x={float(scfg.x[j])!r}")
    w.report.summary.update(z=z, C=C, paths=P)


def _run_converge(cfg, w: _Writer):
    s = cfg.section("solver")
    H1, H2 = cfg.hurst_pairs()[0]
    levels = list(s["levels"])
    top = max(levels)
    F = _vector_field(cfg)
    scfg = _solver_cfg(cfg, top)
    variant = "young" if s["equation"] == "young" else "renormalized"
    constants = None
    if variant == "renormalized":
        tab = RenormTable(H1, H2, top)
        constants = {n: tab.values[n] for n in levels}
    hr = Rect(*s["holder_region"]) if s["holder_region"] else None
    res = convergence_study(cfg.seed, levels, variant, F, scfg, H1, H2, _solver_axes(cfg, top),
                            constants, s["gamma"], hr)
    w.table("convergence", [("n", "-"), ("sup_diff", "value"), ("holder_diff", "value"),
                            ("control_drift", "value"), ("C", "value")],
            [(r.n, r.sup_diff, r.holder_diff, r.control_drift, r.C) for r in res.rows],
            f"variant={variant} nt={scfg.nt} nx={scfg.nx}")
    sup = [r.sup_diff for r in res.rows]
    hol = [r.holder_diff for r in res.rows]
    summary = {"sup": sup, "holder": hol,
               "max_sup_ratio": max(b / a for a, b in zip(sup[:-1], sup[1:])),
               "holder_decreasing": all(b < a for a, b in zip(hol[:-1], hol[1:])),
               "sup_decreasing": all(b < a for a, b in zip(sup[:-1], sup[1:]))}
    if variant == "renormalized":
        ns = sorted(res.drift)
        d = np.log([res.drift[n] for n in ns])
        c = np.log([res.constants[n] for n in ns])
        summary["drift"] = {n: res.drift[n] for n in ns}
        summary["drift_correlation"] = float(np.corrcoef(d, c)[0, 1])
        w.table("control_drift", [("n", "-"), ("drift", "value"), ("C", "value")],
                [(n, res.drift[n], res.constants[n]) for n in ns])
    w.report.summary.update(summary)


_KINDS = {"sample": _run_sample, "moments": _run_moments, "kernel": _run_kernel, "renorm": _run_renorm,
          "levy": _run_levy, "solve": _run_solve, "converge": _run_converge, "besov": _run_besov}


def run(cfg: ExperimentConfig, out: str | Path | None = None, threads: int | None = None) -> Report:
    """Execute one experiment into an empty output directory."""
    out = Path(out if out is not None else cfg.out)
    if out.exists() and any(out.iterdir()):
        raise RunError(f"output directory {out} is not empty")
    out.mkdir(parents=True, exist_ok=True)
    w = _Writer(cfg, out)
    _KINDS[cfg.kind](cfg, w)
    manifest = [f"# fracheat {__version__} manifest; rerun with: fracheat {cfg.kind} --config manifest.ini",
                f"# threads = {threads if threads is not None else 'default'}",
                *(f"# output = {f}" for f in w.report.files), "",
                cfg.replace(out=str(out)).to_text()]
    (out / "manifest.ini").write_text("\n".join(manifest))
    (out / "summary.json").write_text(json.dumps(w.report.summary, indent=2, sort_keys=True, default=_json))
    return w.report


def _json(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(type(v))
