"""
Named experiments: each takes a parameter dict, runs one reproducible check
and returns a report with every threshold, observed value and verdict.

Reports are plain dicts::

    {"experiment": name, "params": {...}, "checks": [...], "metrics": {...},
     "passed": bool, "wall_time": seconds, "artifacts": [(file, kind, payload)]}

Artifact kinds are "json" (payload: object), "csv" (payload: (header, rows))
and "pgm" (payload: 2-D uint8 raster); the runner writes them.
"""

import time

import numpy as np

from . import attain as _at
from . import bundle as _bd
from . import driver as _dr
from . import fields as _f
from . import flowdec as _fd
from . import io as _io
from . import ivk as _ivk
from . import lindec as _ld
from . import marcus as _mc
from .errors import ConfigError

__all__ = ["EXPERIMENTS", "DEFAULTS", "run_experiment", "check", "ROTATION", "SHEAR"]

ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])
SHEAR = np.array([[0.0, 1.0], [0.0, 0.0]])

_OPS = {
    "<=": lambda v, t: v <= t,
    ">=": lambda v, t: v >= t,
    "==": lambda v, t: v == t,
    "in": lambda v, t: t[0] <= v <= t[1],
}


def check(name, value, op, threshold, kind="value"):
    """One verdict line; ``kind='timing'`` marks wall-clock checks."""
    if isinstance(value, (float, np.floating)) and not np.isfinite(value) and op != "==":
        passed = False
    else:
        passed = bool(_OPS[op](value, threshold))
    return {"name": name, "value": value, "op": op, "threshold": threshold,
            "passed": passed, "kind": kind}


def _jumps(spec):
    return [(float(t), float(z)) for t, z in spec]


# -- linear decomposition ----------------------------------------------------


def rotation_decomposition(p):
    dt, T, tol, margin = p["dt"], p["T"], p["tol"], p["margin"]
    R = ROTATION
    Z = _dr.deterministic_time(T, dt)
    fa = _ld.decompose_linear_algebraic(R, Z, 1, p["eps_det"])
    t = Z.t
    F = _f.expm(t[:, None, None] * R)
    reassembly = float(np.max(np.abs(fa.product() - F)))
    c, s = np.cos(t), np.sin(t)
    ent = max(np.max(np.abs(fa.eta[:, 0, 0] - 1 / c)), np.max(np.abs(fa.eta[:, 0, 1] + s / c)),
              np.max(np.abs(fa.psi[:, 1, 0] - s)), np.max(np.abs(fa.psi[:, 1, 1] - c)))
    # breakdown of the algebraic factors beyond pi/2
    Zb = _dr.deterministic_time(p["breakdown_T"], dt)
    bd = _ld.breakdown_time(R, Zb, 1, p["eps_det"])
    tau = bd.time if bd else np.nan
    # first restart of the alternate decomposition sits at pi/2 - margin
    sampler = _fd.FlowSampler(_f.linear(R), Zb)
    fac = _fd.alternate_decompose(sampler, np.array(p["x0"]), eps_det=p["eps_det"], margin=margin,
                                  radius=p["radius"])
    first = fac.times[1] if len(fac.times) > 2 else np.nan
    step = float(np.max(Zb.dt))
    checks = [
        check("reassembly_max_abs", reassembly, "<=", tol),
        check("entries_sec_tan_sin_cos", float(ent), "<=", tol),
        check("breakdown_time_minus_pi_over_2", abs(tau - np.pi / 2), "<=", step),
        check("restart_time_minus_target", abs(first - (np.pi / 2 - margin)), "<=", step),
        check("breakdown_after_horizon", float(fa.tau is None), "==", 1.0),
    ]
    header, rows = _io.factor_pair_rows(fa)
    arts = [("factors.csv", "csv", (header, rows)),
            ("factors.json", "json", {"tau": fa.tau, "eps_det": fa.eps_det, "route": fa.route,
                                      "status": fa.status}),
            ("alternate.json", "json", fac.summary())]
    metrics = {"breakdown_time": tau, "restart_time": first, "grid_step": step,
               "target_restart": np.pi / 2 - margin}
    return checks, metrics, arts


def constituent_sde(p):
    dts = []
    D = []
    ms = p["coarsen"]
    for g in range(p["generators"]):
        A = np.random.default_rng(p["seed"] + g).standard_normal((4, 4)) * p["scale"]
        Zf = _dr.gen_brownian(p["seed"] + 100 + g, p["T"], p["dt_fine"], jumps=_jumps(p["jumps"]))
        row = []
        for m in ms:
            Z = _dr.coarsen(Zf, m)
            fa = _ld.decompose_linear_algebraic(A, Z, p["k"], p["eps_det"])
            fs = _ld.decompose_linear_sde(A, Z, p["k"], p["eps_det"])
            row.append(_ld.factor_deviation(fa, fs, det_floor=p["det_floor"]))
        D.append(row)
    D = np.array(D)
    dts = [p["dt_fine"] * m for m in ms]
    worst = np.nanmax(D, axis=0)
    slope = _ivk.fit_slope(dts, worst)
    checks = [check("max_deviation_slope", slope, ">=", p["min_slope"]),
              check("deviation_finite", float(np.all(np.isfinite(D))), "==", 1.0)]
    rows = np.column_stack([np.arange(len(D)), D])
    arts = [("deviations.csv", "csv", (["generator"] + [f"dt_{d:g}" for d in dts], rows))]
    return checks, {"dt": dts, "max_deviation": worst, "slope": slope}, arts


def _random_spectrum_matrix(rng, n, re_half, im_range, cond_scale, max_cond):
    """Real n x n matrix with a random spectrum (mix of real eigenvalues and
    conjugate pairs) conjugated by a random matrix of condition <= max_cond."""
    n_pairs = int(rng.integers(0, n // 2 + 1))
    blocks = []
    for _ in range(n_pairs):
        a, b = rng.uniform(-re_half, re_half), rng.uniform(*im_range)
        blocks.append(np.array([[a, -b], [b, a]]))
    for _ in range(n - 2 * n_pairs):
        blocks.append(np.array([[rng.uniform(-re_half, re_half)]]))
    D = np.zeros((n, n))
    i = 0
    for bl in blocks:
        s = bl.shape[0]
        D[i:i + s, i:i + s] = bl
        i += s
    while True:
        S = np.eye(n) + cond_scale * rng.standard_normal((n, n))
        if np.linalg.cond(S) <= max_cond:
            break
    return S @ D @ np.linalg.inv(S), n - 2 * n_pairs, n_pairs


def no_explosion(p):
    n = p["n"]
    rng = np.random.default_rng(p["seed"])
    nonfinite = breakdowns = 0
    worst_block = worst_reassembly = 0.0
    rows = []
    for i in range(p["spectra"]):
        A, nr, npair = _random_spectrum_matrix(rng, n, p["re_half"], p["im_range"], p["cond_scale"],
                                               p["max_cond"])
        feas = [(a, b) for a in range(nr + 1) for b in range(npair + 1) if 1 <= a + 2 * b < n]
        a, b = feas[int(rng.integers(len(feas)))]
        P, k = _ld.schur_foliation_select(A, a, b)
        Ac = P.T @ A @ P
        worst_block = max(worst_block, float(np.max(np.abs(Ac[k:, :k]))))
        Z = _dr.gen_brownian(p["seed"] + 1000 + i, p["T"], p["dt"], jumps=_jumps(p["jumps"]))
        fs = _ld.decompose_linear_sde(Ac, Z, k, p["eps_det"])
        fa = _ld.decompose_linear_algebraic(Ac, Z, k, p["eps_det"])
        bad = fs.status == "scheme_failure" or not np.all(np.isfinite(fs.eta))
        bad |= not np.all(np.isfinite(fa.eta))
        brk = fa.tau is not None or fs.tau is not None or fa.crossing
        nonfinite += int(bad)
        breakdowns += int(brk)
        F = _f.expm(Z.values[:, 0, None, None] * Ac)
        rerr = float(np.max(np.abs(fa.product() - F)) / max(1.0, np.max(np.abs(F))))
        worst_reassembly = max(worst_reassembly, rerr)
        rows.append([i, a, b, k, int(bad), int(brk), rerr])
    checks = [check("non_finite_runs", nonfinite, "==", 0),
              check("breakdown_runs", breakdowns, "==", 0),
              check("conjugated_lower_left_block", worst_block, "<=", p["block_tol"])]
    arts = [("spectra.csv", "csv", (["spectrum", "a", "b", "k", "non_finite", "breakdown",
                                     "reassembly_rel"], np.array(rows, dtype=float)))]
    return checks, {"non_finite": nonfinite, "breakdowns": breakdowns,
                    "max_reassembly_rel": worst_reassembly}, arts


# -- solver and composition --------------------------------------------------


def marcus_order(p):
    A = np.array(p["A"], dtype=float)
    X = _f.linear(A)
    x0 = np.array(p["x0"], dtype=float)
    levels = p["halvings"] + 1
    dt_fine = p["dt"] / 2 ** p["halvings"]
    ms = [2 ** (levels - 1 - j) for j in range(levels)]
    errs = np.zeros((p["ensemble"], levels))
    for s in range(p["ensemble"]):
        Zf = _dr.gen_brownian(p["seed"] + s, p["T"], dt_fine, jumps=_jumps(p["jumps"]))
        for j, m in enumerate(ms):
            Z = _dr.coarsen(Zf, m)
            path = _mc.solve_path(X, Z, x0, keep_samples=False)
            ex = _f.expm(Z.values[:, 0, None, None] * A) @ x0
            errs[s, j] = np.max(np.linalg.norm(path.x - ex, axis=1))
    rms = np.sqrt(np.mean(errs ** 2, axis=0))
    dts = [dt_fine * m for m in ms]
    slope = _ivk.fit_slope(dts, rms)
    sizes = np.linspace(-p["max_jump"], p["max_jump"], p["jump_samples"])
    jerr = 0.0
    for z in sizes:
        end = _f.ode_flow(X, np.array([z]), x0, keep_samples=False).endpoint
        jerr = max(jerr, float(np.max(np.abs(end - _f.expm(z * A) @ x0))))
    checks = [check("strong_order_slope", slope, ">=", p["min_slope"]),
              check("jump_transport_error", jerr, "<=", p["jump_tol"])]
    arts = [("order.csv", "csv", (["dt", "rms_error"], np.column_stack([dts, rms])))]
    return checks, {"dt": dts, "rms_error": rms, "slope": slope, "jump_error": jerr}, arts


def ivk_formula(p):
    X, Y = _f.linear(ROTATION), _f.linear(SHEAR)
    x0 = np.array(p["x0"], dtype=float)
    ms = [2 ** (p["levels"] - 1 - j) for j in range(p["levels"])]
    dt_fine = p["dt"] / ms[0]
    res = np.zeros((p["ensemble"], len(ms)))
    for s in range(p["ensemble"]):
        Zf = _dr.gen_brownian(p["seed"] + s, p["T"], dt_fine, jumps=_jumps(p["jumps"]))
        for j, m in enumerate(ms):
            res[s, j] = _ivk.verify_ivk(X, Y, _dr.coarsen(Zf, m), x0, method=p["method"])
    rms = np.sqrt(np.mean(res ** 2, axis=0))
    ratios = rms[:-1] / rms[1:]
    dts = [dt_fine * m for m in ms]
    # commuting pair: the composed flow is the flow of X + Y
    B = p["commuting_scale"] * ROTATION
    Z = _dr.gen_brownian(p["seed"], p["T"], p["commuting_dt"], jumps=_jumps(p["jumps"]))
    terms = _ivk.ivk_terms(X, _f.linear(B), Z, x0)
    target = _f.expm((ROTATION + B) * Z.values[-1, 0]) @ x0
    cerr = float(np.max(np.abs(terms["lhs"] - target)))
    lo, hi = 2.0 * (1 - p["ratio_tol"]), 2.0 * (1 + p["ratio_tol"])
    checks = [check(f"residual_ratio_{i + 1}", float(r), "in", [lo, hi]) for i, r in enumerate(ratios)]
    checks.append(check("commuting_endpoint_error", cerr, "<=", p["commuting_tol"]))
    arts = [("ivk_residuals.csv", "csv", (["dt", "rms_residual"], np.column_stack([dts, rms])))]
    return checks, {"dt": dts, "rms_residual": rms, "ratios": ratios,
                    "slope": _ivk.fit_slope(dts, rms), "commuting_error": cerr}, arts


def truncation(p):
    X, Y = _f.linear(ROTATION), _f.linear(SHEAR)
    x0 = np.array(p["x0"], dtype=float)
    cut = _dr.levy_threshold(p["alpha"], p["eps_coarse"], p["T"], p["intensity"])
    rows = []
    for s in range(p["ensemble"]):
        Zf, _ = _dr.gen_levy_truncated(p["seed"] + s, p["T"], p["dt"], p["alpha"], p["eps_fine"],
                                       intensity=p["intensity"])
        Zc = _dr.drop_jumps(Zf, cut)
        obs, bound = _ivk.truncation_error_bound_check(X, Y, Zf, Zc, x0, p["safety"])
        rows.append([s, obs, bound, int(obs <= bound)])
    rows = np.array(rows)
    frac = float(np.mean(rows[:, 3]))
    # single jump of size delta replaced by its linear part
    deltas = np.array(p["deltas"], dtype=float)
    single = []
    for d in deltas:
        Zf = _dr.gen_brownian(p["seed"], p["T"], p["single_dt"], jumps=[(p["T"] / 2, float(d))])
        obs, bound = _ivk.truncation_error_bound_check(X, Y, Zf, _dr.drop_jumps(Zf, d), x0,
                                                       p["safety"])
        single.append([d, obs, bound])
    single = np.array(single)
    slope = _ivk.fit_slope(single[:, 0], single[:, 1])
    checks = [check("bound_holds_fraction", frac, ">=", p["min_fraction"]),
              check("single_jump_slope", slope, ">=", p["min_slope"]),
              check("single_jump_bound_holds", float(np.all(single[:, 1] <= single[:, 2])), "==", 1.0)]
    arts = [("ensemble.csv", "csv", (["seed", "observed", "bound", "holds"], rows)),
            ("single_jump.csv", "csv", (["delta", "observed", "bound"], single))]
    return checks, {"fraction": frac, "slope": slope, "coarse_threshold": cut}, arts


# -- nonlinear flows ---------------------------------------------------------


def alternate(p):
    Z = _dr.deterministic_time(p["T"], p["dt"])
    sampler = _fd.FlowSampler(_f.linear(ROTATION), Z)
    x0 = np.array(p["x0"], dtype=float)
    F = _f.expm(Z.t[:, None, None] * ROTATION)
    probes = x0 + p["probe_offsets"] * np.array([[1.0, 0.0], [0.0, 1.0], [-0.7, 0.7]])
    probes = np.vstack([x0, probes])
    out = {}
    checks = []
    idx = np.arange(0, Z.N + 1, p["check_stride"])
    for margin in p["margins"]:
        fac = _fd.alternate_decompose(sampler, x0, eps_det=p["eps_det"], margin=margin,
                                      radius=p["radius"], grid=p["grid"])
        err = 0.0
        for i in idx:
            y = _fd.recompose(fac, Z.t[i], probes)
            err = max(err, float(np.max(np.abs(y - probes @ F[i].T))))
        out[margin] = fac
        checks.append(check(f"restarts_margin_{margin:g}", fac.restarts, ">=", p["min_restarts"]))
        checks.append(check(f"recompose_error_margin_{margin:g}", err, "<=", p["tol"]))
    ms = sorted(p["margins"], reverse=True)
    mono = True
    for big, small in zip(ms, ms[1:]):
        a, b = out[big].times[1:-1], out[small].times[1:-1]
        mono &= all(x <= y + 1e-12 for x, y in zip(a, b))
    checks.append(check("margin_monotone_breakpoints", float(mono), "==", 1.0))
    arts = [(f"alternate_margin_{m:g}.json", "json", out[m].summary()) for m in p["margins"]]
    return checks, {f"breakpoints_margin_{m:g}": out[m].times for m in p["margins"]}, arts


def _attain_artifacts(am, prefix=""):
    arts = [(prefix + "first_reached.pgm", "pgm", _io.attain_raster(am.first_reached()))]
    for j, m in enumerate(am.masks, 1):
        arts.append((f"{prefix}A{j}.pgm", "pgm", np.where(m, 255, 0).astype(np.uint8)))
    arts.append((prefix + "growth.json", "json", am.growth_table()))
    return arts


def attain_example1(p):
    pair = _at.foliation("hyperbolic", res=p["resolution"], half=p["half_width"])
    pt = tuple(p["point"])
    t0 = time.perf_counter()
    am = _at.attainable_sets(pt, pair, p["kmax"])
    k, _ = _at.attainability_index(pt, pair, p["kmax"], am=am)
    X, Y = pair.centers()
    v = pair.valid()
    a1 = float(np.mean((am.masks[0] == (X + Y > 0))[v]))
    C = _at.co_attainable(pt, pair, 1)
    c1 = float(np.mean((C == ((X > 0) & (Y > 0)))[v]))
    wall = time.perf_counter() - t0
    checks = [check("A1_agreement_half_plane", a1, ">=", p["a1_min"]),
              check("attainability_index", -1 if k is None else k, "==", p["expected_index"]),
              check("C1_agreement_quadrant", c1, ">=", p["c1_min"]),
              check("runtime_seconds", wall, "<=", p["max_seconds"], kind="timing")]
    arts = _attain_artifacts(am) + [("C1.pgm", "pgm", np.where(C, 255, 0).astype(np.uint8))]
    return checks, {"coverage": am.coverage, "index": k}, arts


def attain_example2(p):
    pair = _at.foliation("secant")
    pt = tuple(p["point"])
    am = _at.attainable_sets(pt, pair, p["kmax"])
    k, _ = _at.attainability_index(pt, pair, p["kmax"], am=am)
    X, _ = pair.centers()
    dx = pair.cell[0]
    v = pair.valid()
    far_bad = []
    for j, m in enumerate(am.masks, 1):
        lo, hi = -j * np.pi + np.pi / 2, j * np.pi + np.pi / 2
        S = _at.strip_mask(pair, lo, hi)
        edge = np.minimum(np.abs(X - lo), np.abs(X - hi)) <= p["layers"] * dx + 0.5 * dx
        far_bad.append(int(np.count_nonzero((m != S) & v & ~edge)))
    growing = all(b > a for a, b in zip(am.coverage, am.coverage[1:]))
    verdict = "covered" if k is not None else ("window-unbounded" if growing else "saturated")
    checks = [check(f"strip_mismatch_k{j}", c, "==", 0) for j, c in enumerate(far_bad, 1)]
    checks.append(check("verdict_window_unbounded", float(verdict == "window-unbounded"), "==", 1.0))
    return checks, {"coverage": am.coverage, "verdict": verdict, "index": k}, _attain_artifacts(am)


# -- bundles -----------------------------------------------------------------


def trivial_bundle(p):
    Z = _dr.gen_brownian(p["seed"], p["T"], p["dt"], jumps=_jumps(p["jumps"]))
    A = p["a_rate"] * ROTATION
    B = p["b_rate"] * ROTATION
    th = p["y0_angle"]
    y0 = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    tf = _bd.trivial_bundle_decompose(A, B, Z, np.eye(2), y0)
    err = tf.error()
    checks = [check("recompose_error", err, "<=", p["tol"])]
    arts = [("eta.csv", "csv", _mat_csv(Z.t, tf.eta, "eta")),
            ("h.csv", "csv", _mat_csv(Z.t, tf.h, "h"))]
    return checks, {"error": err}, arts


def _mat_csv(t, mats, name):
    n, m = mats.shape[-2:]
    return (["t"] + [f"{name}_{i}{j}" for i in range(n) for j in range(m)],
            np.column_stack([t, mats.reshape(len(t), -1)]))


def reductive(p):
    split = _bd.so3_split()
    W = sum(c * _bd.E[i] for i, c in enumerate(p["W"]))
    g0 = _bd.polar(np.eye(3) + p["g0_tilt"] * _bd.hat(p["g0_axis"]))
    Zf = _dr.gen_brownian(p["seed"], p["T"], p["dt"], jumps=_jumps(p["jumps"]))
    errs, hs, conn = [], [], []
    for m in p["coarsen"]:
        r = _bd.reductive_decompose(W, split, _dr.coarsen(Zf, m), g0)
        errs.append(r.error())
        hs.append(p["dt"] * m)
        conn.append(_bd.horizontal_lift_check(r, split))
    # residual checks use the finest level
    finest = (r, conn[-1])
    slope = _ivk.fit_slope(hs, errs)
    proj, cres = finest[1]
    sw = _bd.reductive_decompose(W, split.swapped(), _dr.coarsen(Zf, p["coarsen"][0]), g0)
    _, sw_conn = _bd.horizontal_lift_check(sw, split)
    lo, hi = p["slope_range"]
    checks = [check("composite_error_slope", slope, "in", [lo, hi]),
              check("projection_residual", proj, "<=", p["projection_tol"]),
              check("connection_residual", cres, "<=", p["connection_tol"]),
              check("swapped_control_connection_residual", sw_conn, ">=", p["connection_tol"])]
    r = finest[0]
    arts = [("eta.csv", "csv", _mat_csv(r.t, r.eta, "eta")),
            ("psi.csv", "csv", _mat_csv(r.t, r.psi, "psi")),
            ("refinement.csv", "csv", (["dt", "composite_error", "projection", "connection"],
                                       np.column_stack([hs, errs, [c[0] for c in conn],
                                                        [c[1] for c in conn]])))]
    return checks, {"dt": hs, "composite_error": errs, "slope": slope,
                    "connection": [c[1] for c in conn], "swapped_connection": sw_conn}, arts


# -- registry ----------------------------------------------------------------

DEFAULTS = {
    "rotation_decomposition": dict(T=1.4, dt=1e-3, tol=1e-9, eps_det=1e-6, breakdown_T=2.0,
                                   margin=0.05, radius=0.1, x0=[0.3, 0.2]),
    "constituent_sde": dict(generators=20, scale=0.5, k=2, T=1.0, dt_fine=2.5e-4,
                            coarsen=[4, 2, 1], jumps=[[0.25, 0.4], [0.5, -0.3], [0.75, 0.5]],
                            eps_det=1e-6, det_floor=0.1, min_slope=0.8, seed=0),
    "no_explosion": dict(spectra=100, n=4, T=5.0, dt=1e-2, re_half=0.5, im_range=[0.5, 2.0],
                         cond_scale=0.3, max_cond=5.0, jumps=[[2.5, 0.8]],
                         eps_det=1e-6, block_tol=1e-9, seed=0),
    "marcus_order": dict(A=[[0.0, -1.0, 0.3], [1.0, -0.2, 0.0], [0.5, 0.4, -0.1]],
                         x0=[1.0, 0.5, -0.3], T=1.0, dt=1e-2, halvings=4, ensemble=8,
                         jumps=[[0.3, 0.7], [0.6, -0.5], [0.85, 1.0]], min_slope=0.9,
                         max_jump=1.0, jump_samples=21, jump_tol=1e-9, seed=0),
    "ivk": dict(x0=[1.0, 0.5], T=1.0, dt=1e-3, levels=3, ensemble=48, method="exact",
                jumps=[[0.3, 0.6], [0.55, -0.4], [0.8, 0.5]], ratio_tol=0.2,
                commuting_scale=2.0, commuting_dt=1e-4, commuting_tol=1e-6, seed=0),
    "truncation": dict(x0=[1.0, 0.5], T=1.0, dt=1e-2, alpha=1.5, intensity=0.1,
                       eps_fine=0.05, eps_coarse=0.2, ensemble=100, safety=4.0,
                       min_fraction=0.95, deltas=[0.4, 0.2, 0.1, 0.05], single_dt=1e-3,
                       min_slope=1.9, seed=0),
    "alternate": dict(T=2 * np.pi, dt=1e-3, x0=[0.3, 0.2], margins=[1e-2, 5e-3, 2.5e-3],
                      eps_det=1e-6, radius=0.1, grid=5, probe_offsets=0.02, check_stride=1,
                      min_restarts=2, tol=1e-4),
    "attain_example1": dict(point=[1.0, 1.0], resolution=600, half_width=3.0, kmax=4,
                            expected_index=3, a1_min=0.99, c1_min=0.98, max_seconds=120.0),
    "attain_example2": dict(point=[np.pi / 2, 1.0], kmax=5, layers=1),
    "trivial_bundle": dict(T=1.0, dt=1e-3, jumps=[[0.3, 1.2], [0.6, -0.8]], a_rate=1.0,
                           b_rate=2.0, y0_angle=0.9273, tol=1e-12, seed=4),
    "reductive": dict(W=[1.0, 0.0, 1.0], g0_axis=[0.2, 0.5, -0.4], g0_tilt=0.3, T=1.0, dt=1e-4,
                      coarsen=[8, 4, 2, 1], jumps=[[0.4, 0.9], [0.7, -0.6]],
                      slope_range=[0.7, 1.3], projection_tol=1e-4, connection_tol=0.05, seed=7),
}

EXPERIMENTS = {
    "rotation_decomposition": rotation_decomposition,
    "constituent_sde": constituent_sde,
    "no_explosion": no_explosion,
    "marcus_order": marcus_order,
    "ivk": ivk_formula,
    "truncation": truncation,
    "alternate": alternate,
    "attain_example1": attain_example1,
    "attain_example2": attain_example2,
    "trivial_bundle": trivial_bundle,
    "reductive": reductive,
}


def resolve_params(name, params=None, dt_override=None, seed_override=None):
    """Defaults merged with scenario params; unknown keys are config errors."""
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}", field="experiment")
    merged = dict(DEFAULTS[name])
    for key, val in (params or {}).items():
        if key not in merged:
            raise ConfigError(f"unknown parameter {key!r} for experiment {name!r}",
                              field=f"params.{key}")
        merged[key] = val
    if dt_override is not None:
        for key in ("dt", "dt_fine"):
            if key in merged:
                merged[key] = float(dt_override)
    if seed_override is not None and "seed" in merged:
        merged["seed"] = int(seed_override)
    return merged


def run_experiment(name, params=None, dt_override=None, seed_override=None):
    p = resolve_params(name, params, dt_override, seed_override)
    t0 = time.perf_counter()
    checks, metrics, arts = EXPERIMENTS[name](p)
    wall = time.perf_counter() - t0
    return {"experiment": name, "params": p, "checks": checks, "metrics": metrics,
            "passed": all(c["passed"] for c in checks), "wall_time": wall, "artifacts": arts}
