"""
Marcus (canonical) SDE solver with jumps and the extended Marcus integral.

Continuous increments are integrated with Heun's method (Stratonovich
consistent).  Each jump dZ at a grid point is resolved by flowing the
field X dZ for unit fictitious time with :func:`fields.ode_flow`; truncated
(linear) jumps are applied as x + X(x) dZ.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fields as _f
from .errors import IntegrationError, JumpTransportError, ParameterError, ChangeOfVariablesError

__all__ = [
    "JumpRecord", "StatePath", "MatrixFlowPath", "solve_path", "solve_linear_exact",
    "exact_linear_path", "marcus_integral", "marcus_consistency_residual",
    "change_of_variables_check", "simpson_weights",
]


@dataclass(frozen=True, eq=False)
class JumpRecord:
    step: int          # jump happens at t[step + 1]
    time: float
    pre: np.ndarray
    size: np.ndarray
    post: np.ndarray
    samples: np.ndarray = None
    substeps: int = 0
    rule: str = "marcus"


@dataclass(frozen=True, eq=False)
class StatePath:
    t: np.ndarray
    x: np.ndarray
    jumps: list = field(default_factory=list)
    status: str = "complete"
    stop_time: float = None
    reason: str = None

    @property
    def complete(self):
        return self.status == "complete"

    @property
    def final(self):
        return self.x[-1]

    def pre_states(self):
        """Left limits x(t_i -), equal to x(t_i) except at jump points."""
        out = self.x.copy()
        for r in self.jumps:
            out[r.step + 1] = r.pre
        return out


@dataclass(frozen=True, eq=False)
class MatrixFlowPath:
    t: np.ndarray
    F: np.ndarray
    A: np.ndarray
    driver: object = None

    def apply(self, x0):
        return np.einsum("tab,...b->t...a", self.F, np.asarray(x0, dtype=float))


def simpson_weights(m):
    """Composite Simpson weights on m+1 equispaced points of [0, 1] (m even)."""
    if m < 1:
        raise IntegrationError("need at least one substep")
    if m % 2:
        w = np.full(m + 1, 1.0 / m)
        w[0] = w[-1] = 0.5 / m
        return w
    w = np.ones(m + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * m)


def solve_path(X, Z, x0, jump_rule="marcus", project=None, keep_samples=True):
    """Solve dx = X(x) <> dZ along the driver.

    ``x0`` may carry leading batch dimensions.  ``jump_rule='euler'`` applies
    jumps as x + X(x) dZ (only used to show that the Marcus rule matters).
    ``project`` is an optional map applied after every step.
    """
    x = np.array(x0, dtype=float)
    if x.shape[-1] != X.n:
        raise ParameterError(f"initial state has dimension {x.shape[-1]}, field needs {X.n}")
    if Z.dim != X.k:
        raise ParameterError(f"driver dimension {Z.dim} != field driver dimension {X.k}")
    if jump_rule not in ("marcus", "euler"):
        raise ParameterError(f"unknown jump rule {jump_rule!r}")
    out = np.full((Z.N + 1,) + x.shape, np.nan)
    out[0] = x
    recs = []
    status, stop_time, reason = "complete", None, None
    dz_all, jump_all, lj_all = Z.dz, Z.jump, Z.linear_jump
    has_dz = np.any(dz_all != 0, axis=1)
    for i in range(Z.N):
        try:
            if has_dz[i]:
                dz = dz_all[i]
                k1 = X.evaluate(x) @ dz
                k2 = X.evaluate(x + k1) @ dz
                x = x + 0.5 * (k1 + k2)
            if Z.linear_jump_mask[i]:
                lj = lj_all[i]
                pre = x
                x = x + X.evaluate(x) @ lj
                recs.append(JumpRecord(i, float(Z.t[i + 1]), pre, lj.copy(), x, rule="linear"))
            if Z.jump_mask[i]:
                j = jump_all[i]
                pre = x
                if jump_rule == "marcus":
                    res = _f.ode_flow(X, j, x, keep_samples=keep_samples)
                    x = res.endpoint
                    recs.append(JumpRecord(i, float(Z.t[i + 1]), pre, j.copy(), x,
                                           res.samples if keep_samples else None, res.substeps))
                else:
                    x = x + X.evaluate(x) @ j
                    recs.append(JumpRecord(i, float(Z.t[i + 1]), pre, j.copy(), x, rule="euler"))
            if project is not None:
                x = project(x)
        except JumpTransportError as exc:
            status, stop_time, reason = "stopped", float(Z.t[i + 1]), str(exc)
            break
        if not np.all(np.isfinite(x)):
            status, stop_time, reason = "stopped", float(Z.t[i + 1]), "non-finite state"
            break
        out[i + 1] = x
    return StatePath(Z.t, out, recs, status, stop_time, reason)


def solve_linear_exact(A, Z):
    """Matrix flow F(t_i) = exp(A Z(t_i)) (exact, including across jumps).

    For a vector driver A is a (k, n, n) stack of commuting generators."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 2:
        A = A[None]
    if A.shape[0] != Z.dim or A.shape[1] != A.shape[2]:
        raise ParameterError("generator stack must be (k, n, n) with k the driver dimension")
    for a in A:
        for b in A:
            if np.max(np.abs(a @ b - b @ a)) > 1e-12 * (1 + np.max(np.abs(a)) * np.max(np.abs(b))):
                raise ParameterError("exact exponential flow needs commuting generators")
    M = np.einsum("tj,jab->tab", Z.values, A)
    F = _f.expm(M)
    return MatrixFlowPath(Z.t, F, A if A.shape[0] > 1 else A[0], Z)


def exact_linear_path(X, Z, x0):
    """StatePath of a linear or affine field computed with exponentials; jump
    records carry the exact transport evaluated on an even u-grid."""
    x0 = np.asarray(x0, dtype=float)
    aff = X.b is not None
    n = X.n

    def gen(s):
        return _f.linear_generator(X, s)

    def lift(x):
        return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1) if aff else x

    def drop(y):
        return y[..., :n] if aff else y

    if np.any(Z.linear_jump_mask):
        raise ParameterError("exact exponential paths do not support truncated linear jumps")
    stack = np.stack([gen(v) for v in Z.values])
    F = _f.expm(stack)
    xs = drop(np.einsum("tab,...b->t...a", F, lift(x0)))
    recs = []
    for i in np.flatnonzero(Z.jump_mask):
        Fl = _f.expm(gen(Z.left_limits[i + 1]))
        pre = drop(np.einsum("ab,...b->...a", Fl, lift(x0)))
        j = Z.jump[i]
        a = float(np.linalg.norm(j)) * X.lipschitz(pre)
        m = _f.substep_count(a)
        us = np.linspace(0.0, 1.0, m + 1)
        Es = _f.expm(np.stack([gen(u * j) for u in us]))
        samples = drop(np.einsum("uab,...b->u...a", Es, lift(pre)))
        recs.append(JumpRecord(int(i), float(Z.t[i + 1]), pre, j.copy(), xs[i + 1],
                               samples, m))
    return StatePath(Z.t, xs, recs)


def _jump_average(g, rec):
    """Simpson average of g along the stored transport of one jump."""
    if rec.samples is None:
        raise IntegrationError(f"jump at t={rec.time} has no transport samples")
    m = rec.samples.shape[0] - 1
    gs = g.evaluate(rec.samples)
    w = simpson_weights(m)
    return np.tensordot(w, gs, axes=1)


def marcus_integral(g, X, path, Z):
    """Extended Marcus integral of g along a solved path.

    g maps states to (m, k) matrices.  Returns the sum of the left-point Ito
    sum, the one-half correction against [Z,Z]^c and the per-jump
    fictitious-time averages.
    """
    if path.x.shape[0] != Z.N + 1:
        raise IntegrationError("path and driver grids differ")
    if not path.complete:
        raise IntegrationError(f"path stopped at t={path.stop_time}: {path.reason}")
    xs = path.x[:-1]
    gx = g.evaluate(xs)
    total = np.einsum("t...mk,tk->...m", gx, Z.dz)
    if np.any(Z.dw):
        Gp = g.jacobian(xs)
        Xv = X.evaluate(xs)
        dq = Z.dw[:, :, None] * Z.dw[:, None, :]
        total = total + 0.5 * np.einsum("t...mja,t...al,tjl->...m", Gp, Xv, dq)
    for rec in path.jumps:
        gpre = g.evaluate(rec.pre)
        total = total + gpre @ rec.size
        if rec.rule == "marcus":
            total = total + (_jump_average(g, rec) - gpre) @ rec.size
        elif rec.rule == "euler":
            raise IntegrationError("path was solved with the Euler jump rule")
    return total


def marcus_consistency_residual(X, Z, x0, method="scheme"):
    """|x_T - x_0 - extended integral of X| for the solved path."""
    path = exact_linear_path(X, Z, x0) if method == "exact" else solve_path(X, Z, x0)
    inc = marcus_integral(X, X, path, Z)
    return float(np.max(np.abs(path.x[-1] - path.x[0] - inc)))


def change_of_variables_check(f, X, Z, x0, return_paths=False):
    """max_i |f(x_i) - y_i| where y solves the pushforward equation from f(x0)."""
    x0 = np.asarray(x0, dtype=float)
    xp = solve_path(X, Z, x0)
    if f.name == "identity":
        yp = solve_path(X, Z, f(x0))
    else:
        yp = solve_path(_f.Pushforward(f, X), Z, f(x0))
    if not (xp.complete and yp.complete):
        raise ChangeOfVariablesError("a solution stopped before the horizon",
                                     location=xp.stop_time or yp.stop_time)
    r = float(np.max(np.abs(f(xp.x) - yp.x)))
    return (r, xp, yp) if return_paths else r
