"""
Verification of the generalized Ito-Ventzel-Kunita composition formula

    F_t(G_t(x)) = x + int X(F_s G_s) <> dZ + int F_s*(Y(G_s)) <> dZ

for two flows dF = X(F) <> dZ, dG = Y(G) <> dZ driven by one driver, and
of its Leibniz form.  Linear and affine flows are evaluated with matrix
exponentials; other flows with the Marcus scheme plus the variational
equation for the flow derivative F'.
"""

import numpy as np

from . import fields as _f
from .errors import EvaluationError, ParameterError
from .marcus import (exact_linear_path, marcus_consistency_residual, simpson_weights,
                     solve_path)

__all__ = [
    "FlowEvaluator", "gen_ivk_integral", "ivk_terms", "verify_ivk", "verify_leibniz",
    "truncation_error_bound_check", "ivk_convergence_report", "fit_slope",
]

FD_REL = 1e-4  # relative step for second flow derivatives along Y


def fit_slope(h, err):
    """Least-squares slope of log2(err) against log2(h)."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    return float(np.polyfit(np.log2(h), np.log2(err), 1)[0])


def _is_exact(field, method):
    if method == "scheme":
        return False
    lin = getattr(field, "A", None) is not None and field.kind in ("linear", "affine")
    if method == "exact" and not lin:
        raise ParameterError("exact method needs linear or affine fields")
    return lin


def _variational_field(X):
    n, k = X.n, X.k

    def func(s):
        x = s[..., :n]
        J = s[..., n:].reshape(s.shape[:-1] + (n, n))
        Xv = X.evaluate(x)
        Xp = X.jacobian(x)
        dJ = np.einsum("...ajb,...bc->...acj", Xp, J)
        return np.concatenate([Xv, dJ.reshape(s.shape[:-1] + (n * n, k))], axis=-2)

    def lip(s):
        return 2.0 * X.lipschitz(s[..., :n])

    return _f.CallableField(n + n * n, k, func, name="variational", lip=lip)


class FlowEvaluator:
    """Evaluate F_{t_i}(p) and F'_{t_i}(p) for batches of (point, grid index)
    queries, with ``left`` selecting the pre-jump value F_{t_i -}."""

    def __init__(self, X, Z, method="auto"):
        self.X, self.Z = X, Z
        self.exact = _is_exact(X, method)
        if self.exact:
            gen = lambda s: _f.linear_generator(X, s)
            self._E = _f.expm(np.stack([gen(v) for v in Z.values]))
            self._El = _f.expm(np.stack([gen(v) for v in Z.left_limits]))
            if np.any(Z.linear_jump_mask):
                raise ParameterError("exact flows do not support truncated linear jumps")

    def __call__(self, points, idx, left=None, deriv=True):
        P = np.asarray(points, dtype=float).reshape(-1, self.X.n)
        idx = np.broadcast_to(np.asarray(idx, dtype=int), (P.shape[0],))
        left = np.zeros(P.shape[0], bool) if left is None else np.broadcast_to(left, idx.shape)
        if self.exact:
            return self._exact(P, idx, left, deriv)
        return self._scheme(P, idx, left, deriv)

    def _exact(self, P, idx, left, deriv):
        n = self.X.n
        E = np.where(left[:, None, None], self._El[idx], self._E[idx])
        vals = np.einsum("mab,mb->ma", E[:, :n, :n], P)
        if E.shape[-1] > n:
            vals = vals + E[:, :n, n]
        return vals, (E[:, :n, :n].copy() if deriv else None)

    def _scheme(self, P, idx, left, deriv):
        X, Z, n = self.X, self.Z, self.X.n
        M = P.shape[0]
        if deriv:
            field = _variational_field(X)
            s = np.concatenate([P, np.tile(np.eye(n).ravel(), (M, 1))], axis=1)
        else:
            field = X
            s = P.copy()
        out = np.full_like(s, np.nan)
        post_at = {}
        pre_at = {}
        for m in range(M):
            (pre_at if left[m] else post_at).setdefault(int(idx[m]), []).append(m)
        has_dz = np.any(Z.dz != 0, axis=1)
        for i in range(Z.N + 1):
            if i in post_at:
                out[post_at[i]] = s[post_at[i]]
            if i == Z.N:
                break
            if has_dz[i]:
                k1 = field.evaluate(s) @ Z.dz[i]
                k2 = field.evaluate(s + k1) @ Z.dz[i]
                s = s + 0.5 * (k1 + k2)
            if i + 1 in pre_at:
                out[pre_at[i + 1]] = s[pre_at[i + 1]]
            if Z.linear_jump_mask[i]:
                s = s + field.evaluate(s) @ Z.linear_jump[i]
            if Z.jump_mask[i]:
                s = _f.ode_flow(field, Z.jump[i], s, keep_samples=False).endpoint
            if not np.all(np.isfinite(s)):
                raise EvaluationError(f"flow evaluation became non-finite at t={Z.t[i + 1]}")
        vals = out[:, :n]
        D = out[:, n:].reshape(M, n, n) if deriv else None
        return vals, D


def _g_path(Y, Z, x0, method):
    if _is_exact(Y, method):
        return exact_linear_path(Y, Z, x0)
    p = solve_path(Y, Z, x0)
    if not p.complete:
        raise EvaluationError(f"G flow stopped at t={p.stop_time}: {p.reason}")
    return p


def _contract(T, v):
    """(..., n, k, n) derivative tensor applied to (..., n) vector -> (..., n, k)."""
    return np.einsum("...ajb,...b->...aj", T, v)


def ivk_terms(X, Y, Z, x0, method="auto", jump_order="G_first"):
    """Both integrals of the composition formula and the composed endpoint.

    Returns a dict with 'lhs' = F_T(G_T(x0)), 'I_X', 'I_Y' and the split of
    I_Y into its Ito, correction and jump parts.
    """
    x0 = np.asarray(x0, dtype=float)
    if X.n != Y.n or X.k != Y.k or Z.dim != X.k:
        raise ParameterError("fields and driver dimensions must agree")
    if jump_order not in ("G_first", "F_first"):
        raise ParameterError("jump_order must be 'G_first' or 'F_first'")
    n, k, N = X.n, X.k, Z.N
    gp = _g_path(Y, Z, x0, method)
    G = gp.x
    F = FlowEvaluator(X, Z, method)
    nonlinear_F = not F.exact and np.any(Z.dw)

    # grid evaluations c_i = F_{t_i}(G_i), derivatives at G_i
    pts = [G]
    ids = [np.arange(N + 1)]
    lefts = [np.zeros(N + 1, bool)]
    Yg = Y.evaluate(G[:-1])
    if nonlinear_F:
        for l in range(k):
            eps = FD_REL * (1.0 + np.linalg.norm(G[:-1], axis=-1, keepdims=True))
            for sgn in (1.0, -1.0):
                pts.append(G[:-1] + sgn * eps * Yg[:, :, l])
                ids.append(np.arange(N))
                lefts.append(np.zeros(N, bool))
    jrecs = [r for r in gp.jumps if r.rule == "marcus"]
    for r in jrecs:
        pts.append(np.stack([r.pre, r.post]))
        ids.append(np.array([r.step + 1, r.step + 1]))
        lefts.append(np.array([True, True]))
    vals, D = F(np.concatenate(pts), np.concatenate(ids), np.concatenate(lefts))
    c, Fp = vals[:N + 1], D[:N + 1]
    pos = N + 1
    F2 = np.zeros((N, n, k, k))
    if nonlinear_F:
        for l in range(k):
            Dp = D[pos:pos + N]
            Dm = D[pos + N:pos + 2 * N]
            pos += 2 * N
            eps = FD_REL * (1.0 + np.linalg.norm(G[:-1], axis=-1))
            dF = (Dp - Dm) / (2.0 * eps)[:, None, None]
            if not np.all(np.isfinite(dF)):
                raise EvaluationError("singular finite-difference stencil for F''")
            F2[:, :, l, :] = np.einsum("tab,tbj->taj", dF, Yg)
    h = np.einsum("tab,tbj->taj", Fp[:-1], Yg)
    cl = c[:-1]
    Xc = X.evaluate(cl)
    dz = Z.dz

    IX_ito = np.einsum("taj,tj->a", Xc, dz)
    IY_ito = np.einsum("taj,tj->a", h, dz)
    IX_cor = np.zeros(n)
    IY_cor = np.zeros(n)
    if np.any(Z.dw):
        dq = Z.dw[:, :, None] * Z.dw[:, None, :]
        Xp = X.jacobian(cl)
        Yp = Y.jacobian(G[:-1])
        IX_cor = 0.5 * np.einsum("tajb,tbl,tjl->a", Xp, Xc + h, dq)
        t1 = np.einsum("talb,tbj->tajl", Xp, h)              # X_l'(c) h_j
        t3 = np.einsum("tab,tbjc,tcl->tajl", Fp[:-1], Yp, Yg)  # F'(Y_j' Y_l)
        t2 = np.transpose(F2, (0, 1, 3, 2))                    # F''[Y_l, Y_j]
        IY_cor = 0.5 * np.einsum("tajl,tjl->a", t1 + t2 + t3, dq)

    IX_jump = np.zeros(n)
    IY_jump = np.zeros(n)
    for r in gp.jumps:
        if r.rule != "marcus":
            raise ParameterError("truncated linear jumps are only supported by the bound check")
    for q, r in enumerate(jrecs):
        cm, Fm_post = vals[pos + 2 * q], vals[pos + 2 * q + 1]
        dZ = r.size
        phi_c = _f.ode_flow(X, dZ, cm, keep_samples=False).endpoint
        IX_jump = IX_jump + (phi_c - cm)
        if jump_order == "G_first":
            phi_g = _f.ode_flow(X, dZ, Fm_post, keep_samples=False).endpoint
            IY_jump = IY_jump + (phi_g - phi_c)
        else:
            IY_jump = IY_jump + (Fm_post - cm)
    # jumps of the driver where G has no record cannot occur (same driver)
    I_X = IX_ito + IX_cor + IX_jump
    I_Y = IY_ito + IY_cor + IY_jump
    return {
        "lhs": c[-1], "x0": x0, "I_X": I_X, "I_Y": I_Y,
        "I_Y_ito": IY_ito, "I_Y_correction": IY_cor, "I_Y_jump": IY_jump,
        "I_X_ito": IX_ito, "I_X_correction": IX_cor, "I_X_jump": IX_jump,
        "method_F": "exact" if F.exact else "scheme",
        "method_G": "exact" if _is_exact(Y, method) else "scheme",
        "x_prime_evaluated_at": "F_s(G_s)",
    }


def gen_ivk_integral(X, Y, Z, x0, method="auto", jump_order="G_first"):
    """The generalized integral int F_s*(Y(G_s)) <> dZ_s from x0."""
    if _f.is_zero(Y):
        return np.zeros(X.n)
    return ivk_terms(X, Y, Z, x0, method, jump_order)["I_Y"]


def verify_ivk(X, Y, Z, x0, method="auto", jump_order="G_first"):
    """|F_T(G_T(x0)) - x0 - I_X - I_Y|.

    When one field vanishes the formula is a single Marcus equation and the
    residual is, by construction, that solver's consistency residual.
    """
    if _f.is_zero(X):
        return marcus_consistency_residual(Y, Z, x0, "exact" if _is_exact(Y, method) else "scheme")
    if _f.is_zero(Y):
        return marcus_consistency_residual(X, Z, x0, "exact" if _is_exact(X, method) else "scheme")
    d = ivk_terms(X, Y, Z, x0, method, jump_order)
    return float(np.max(np.abs(d["lhs"] - d["x0"] - d["I_X"] - d["I_Y"])))


def verify_leibniz(X, Y, Z, probes, method="auto"):
    """Max over probes and steps of the one-step Leibniz defect

        F_{t+}(G_{t+}) - F_t(G_t) - [F_{t+}(G_t) - F_t(G_t)] - F_{t+*} <> (G_{t+} - G_t).

    Continuous steps use the trapezoid rule for the pushforward term; jump
    steps integrate F_{s*} Y along the stored transport of G's jump.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    Fe = FlowEvaluator(X, Z, method)
    worst = 0.0
    N = Z.N
    for x0 in probes:
        gp = _g_path(Y, Z, x0, method)
        G = gp.x
        Gm = gp.pre_states()
        ar = np.arange(N)
        pts = np.concatenate([G[:-1], G[:-1], Gm[1:], G[1:]])
        ids = np.concatenate([ar, ar + 1, ar + 1, ar + 1])
        lefts = np.concatenate([np.zeros(N, bool), np.ones(N, bool), np.ones(N, bool),
                                np.zeros(N, bool)])
        v, D = Fe(pts, ids, lefts)
        F_i_Gi, Fm_Gi, Fm_Gm, Fpost_Gpost = v[:N], v[N:2 * N], v[2 * N:3 * N], v[3 * N:]
        Dm_Gi, Dm_Gm = D[N:2 * N], D[2 * N:3 * N]
        dG = Gm[1:] - G[:-1]
        push = 0.5 * np.einsum("tab,tb->ta", Dm_Gi + Dm_Gm, dG)
        res = Fm_Gm - F_i_Gi - (Fm_Gi - F_i_Gi) - push
        worst = max(worst, float(np.max(np.abs(res))))
        for r in gp.jumps:
            s = r.step + 1
            S = r.samples
            vp, Dp = Fe(np.concatenate([r.pre[None], S]), np.full(len(S) + 1, s),
                        np.zeros(len(S) + 1, bool))
            F_s_pre = vp[0]
            Ys = Y.evaluate(S) @ r.size
            w = simpson_weights(len(S) - 1)
            push_j = np.einsum("u,uab,ub->a", w, Dp[1:], Ys)
            dc = Fpost_Gpost[s - 1] - Fm_Gm[s - 1]
            dF = F_s_pre - Fm_Gm[s - 1]
            worst = max(worst, float(np.max(np.abs(dc - dF - push_j))))
    return worst


def _coupled(Z_fine, Z_coarse):
    if Z_fine.N != Z_coarse.N or np.any(Z_fine.t != Z_coarse.t):
        return False
    if np.any(Z_fine.dz != Z_coarse.dz) or np.any(Z_fine.dw != Z_coarse.dw):
        return False
    if np.any(Z_fine.total_jump != Z_coarse.total_jump):
        return False
    kept = Z_coarse.jump_mask
    return bool(np.all(Z_coarse.jump[kept] == Z_fine.jump[kept]))


def _composed_endpoint(X, Y, Z, x0):
    gp = solve_path(Y, Z, x0)
    fp = solve_path(X, Z, gp.x[-1])
    if not (gp.complete and fp.complete):
        raise EvaluationError("composed flow stopped before the horizon")
    return fp.x[-1], gp, fp


def _visited(path):
    pts = [path.x]
    for r in path.jumps:
        if r.samples is not None:
            pts.append(r.samples)
    return np.concatenate(pts)


def truncation_error_bound_check(X, Y, Z_fine, Z_coarse, x0, safety=4.0):
    """Compare the composed flow under the full driver and under the driver
    whose small jumps only act linearly.  Returns (observed, bound)."""
    if not _coupled(Z_fine, Z_coarse):
        raise ParameterError("drivers are not a coupled fine/truncated pair")
    x0 = np.asarray(x0, dtype=float)
    omitted = Z_coarse.linear_jump[Z_coarse.linear_jump_mask] - Z_fine.linear_jump[
        Z_coarse.linear_jump_mask]
    q = float(np.sum(omitted ** 2))
    if q == 0.0:
        return 0.0, 0.0
    cf, gpf, fpf = _composed_endpoint(X, Y, Z_fine, x0)
    cc, gpc, fpc = _composed_endpoint(X, Y, Z_coarse, x0)
    observed = float(np.linalg.norm(cf - cc))
    vx = np.concatenate([_visited(fpf), fpc.x])
    vy = np.concatenate([_visited(gpf), gpc.x])

    def second(field, pts):
        Jv = field.jacobian(pts)
        Xv = field.evaluate(pts)
        xx = np.einsum("tajb,tbl->tajl", Jv, Xv)
        return float(np.max(np.linalg.norm(xx.reshape(len(pts), -1), axis=1)))

    def lip(field, pts):
        Jv = field.jacobian(pts)
        return float(np.max(np.linalg.norm(Jv.reshape(len(pts), -1), axis=1)))

    zv = Z_fine.values
    osc = float(np.max(np.linalg.norm(zv - zv[-1], axis=1)))
    PX = np.exp(lip(X, vx) * osc)
    PY = np.exp(lip(Y, vy) * osc)
    K = safety * 0.5 * (second(X, vx) * PX + second(Y, vy) * PY * PX)
    return observed, float(K * q)


def ivk_convergence_report(X, Y, drivers, x0, method="auto"):
    """Residuals over a refinement sequence of drivers and the fitted slope."""
    res = [verify_ivk(X, Y, Z, x0, method) for Z in drivers]
    hs = [float(np.max(Z.dt)) for Z in drivers]
    ratios = [res[i] / res[i + 1] for i in range(len(res) - 1)]
    return {"dt": hs, "residual": res, "ratios": ratios,
            "slope": fit_slope(hs, res) if len(res) > 1 else None,
            "x_prime_evaluated_at": "F_s(G_s)"}
