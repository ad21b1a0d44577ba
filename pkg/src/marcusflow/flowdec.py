"""
Pointwise factorization of general flows along Cartesian foliations.

Coordinates split as (x, y) with x in R^k (horizontal block) and y in R^l
(vertical block).  For a flow phi = (phi1, phi2) the factors are

    psi(x, y) = (x, phi2(x, y)),      eta(a, b) = (phi1(a, beta), b),

with beta solving phi2(a, beta) = b, so that eta o psi = phi wherever
det d(phi2)/dy != 0.  psi moves points only inside vertical leaves
{x = const}; eta moves them only inside horizontal leaves {y = const}.
When the determinant degenerates, the flow is restarted from the current
point (alternate decomposition) and the factor pairs are chained.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fields as _f
from .driver import segment
from .errors import BreakdownError, DomainError, EvaluationError, ParameterError
from .marcus import solve_path

__all__ = [
    "FlowSampler", "PointFactorization", "AlternateFactorization", "BreakdownInfo",
    "pointwise_decompose", "detect_breakdown", "alternate_decompose", "recompose",
    "EPS_DET", "FD_REL_STEP",
]

EPS_DET = 1e-6
FD_REL_STEP = 1e-4     # finite-difference step as a fraction of the window radius
NEWTON_TOL = 1e-12
NEWTON_MAXITER = 40


class FlowSampler:
    """Evaluate the flow of one driver realization at arbitrary points.

    ``transition(points, i0, i1)`` returns phi_{t_i0, t_i1}(points); the same
    driver increments are used for every point.  Trajectories are cached by
    (start index, points); the cache is not locked, so a sampler should be
    confined to one worker.
    """

    def __init__(self, X, Z, method="auto"):
        if Z.dim != X.k:
            raise ParameterError(f"driver dimension {Z.dim} != field driver dimension {X.k}")
        self.X, self.Z = X, Z
        lin = getattr(X, "A", None) is not None and X.kind in ("linear", "affine")
        if method == "exact" and not (lin and Z.dim == 1):
            raise ParameterError("exact sampling needs a linear field and a scalar driver")
        self.exact = lin and Z.dim == 1 and method != "scheme" and not np.any(Z.linear_jump_mask)
        self._cache = {}

    @property
    def n(self):
        return self.X.n

    def _exact_traj(self, P, i0):
        Z, X, n = self.Z, self.X, self.X.n
        rel = Z.values[i0:] - Z.values[i0]
        E = _f.expm(np.stack([_f.linear_generator(X, v) for v in rel]))
        out = np.einsum("tab,mb->tma", E[:, :n, :n], P)
        if E.shape[-1] > n:
            out = out + E[:, None, :n, n]
        return out

    def trajectories(self, points, i0=0):
        """States phi_{t_i0, t_i}(p) for i = i0..N, shape (N - i0 + 1, M, n).

        Rows after a solver stop are NaN."""
        P = np.asarray(points, dtype=float).reshape(-1, self.n)
        key = (int(i0), P.tobytes())
        if key in self._cache:
            return self._cache[key]
        if i0 == self.Z.N:
            out = P[None].copy()
        elif self.exact:
            out = self._exact_traj(P, i0)
        else:
            with np.errstate(over="ignore", invalid="ignore"):
                out = solve_path(self.X, segment(self.Z, i0, self.Z.N), P, keep_samples=False).x
        self._cache[key] = out
        return out

    def transition(self, points, i0, i1):
        P = np.asarray(points, dtype=float)
        if not (0 <= i0 <= i1 <= self.Z.N):
            raise ParameterError(f"bad transition indices ({i0}, {i1})")
        if i0 == i1:
            return P.copy()
        lead = P.shape[:-1]
        flat = P.reshape(-1, self.n)
        if self.exact:
            X, n = self.X, self.n
            E = _f.expm(_f.linear_generator(X, self.Z.values[i1] - self.Z.values[i0]))
            out = flat @ E[:n, :n].T
            if E.shape[-1] > n:
                out = out + E[:n, n]
        else:
            out = self.trajectories(flat, i0)[i1 - i0]
        return out.reshape(lead + (self.n,))

    def clear(self):
        self._cache.clear()


def _vertical_jacobian(sampler, pts, i0, i1, k, h):
    """d(phi2)/dy at pts by central differences, shape (M, l, l)."""
    n = sampler.n
    l = n - k
    M = pts.shape[0]
    offs = np.zeros((2 * l, n))
    for j in range(l):
        offs[2 * j, k + j] = h
        offs[2 * j + 1, k + j] = -h
    probe = (pts[:, None, :] + offs[None]).reshape(-1, n)
    img = sampler.transition(probe, i0, i1).reshape(M, 2 * l, n)[..., k:]
    return np.stack([(img[:, 2 * j] - img[:, 2 * j + 1]) / (2 * h) for j in range(l)], axis=-1)


@dataclass(eq=False)
class PointFactorization:
    sampler: FlowSampler
    start_index: int
    index: int
    x0: np.ndarray
    radius: float
    k: int
    axes: list
    grid_points: np.ndarray
    psi_values: np.ndarray
    eta_points: np.ndarray
    eta_values: np.ndarray
    eta_mask: np.ndarray
    det: np.ndarray
    det_x0: float
    residual: float

    @property
    def t(self):
        return float(self.sampler.Z.t[self.index])

    @property
    def h(self):
        return FD_REL_STEP * self.radius

    def contains(self, pts, slack=1.0):
        d = np.max(np.abs(np.asarray(pts) - self.x0), axis=-1)
        return d <= self.radius * slack + 1e-12

    def phi(self, pts):
        return self.sampler.transition(pts, self.start_index, self.index)

    def psi(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = pts.copy()
        out[..., self.k:] = self.phi(pts)[..., self.k:]
        return out

    def beta(self, ab, seed=None):
        """Solve phi2(a, beta) = b by damped Newton.  Returns (beta, converged)."""
        ab = np.asarray(ab, dtype=float).reshape(-1, self.sampler.n)
        k, n = self.k, self.sampler.n
        a, b = ab[:, :k], ab[:, k:]
        y = np.broadcast_to(self.x0[k:] if seed is None else seed, b.shape).copy()
        scale = max(1.0, float(np.max(np.abs(b)))) if b.size else 1.0
        done = np.zeros(len(ab), bool)

        def resid(yy):
            return self.phi(np.concatenate([a, yy], axis=1))[:, k:] - b

        r = resid(y)
        for _ in range(NEWTON_MAXITER):
            nr = np.linalg.norm(r, axis=1)
            done = nr <= NEWTON_TOL * scale
            if np.all(done):
                break
            J = _vertical_jacobian(self.sampler, np.concatenate([a, y], axis=1),
                                   self.start_index, self.index, k, self.h)
            try:
                step = np.linalg.solve(J, r[..., None])[..., 0]
            except np.linalg.LinAlgError:
                break
            step[done] = 0.0
            lam = np.ones(len(ab))
            for _ls in range(12):
                y_try = y - lam[:, None] * step
                r_try = resid(y_try)
                bad = ~(np.linalg.norm(r_try, axis=1) < nr) & ~done
                if not np.any(bad):
                    break
                lam[bad] *= 0.5
            y, r = y_try, r_try
        ok = np.linalg.norm(r, axis=1) <= max(NEWTON_TOL, 1e-9) * scale
        return y, ok

    def eta(self, pts, seed=None):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, self.sampler.n)
        y, ok = self.beta(flat, seed)
        out = flat.copy()
        out[:, :self.k] = self.phi(np.concatenate([flat[:, :self.k], y], axis=1))[:, :self.k]
        out[~ok] = np.nan
        return out.reshape(pts.shape)

    def compose(self, pts):
        return self.eta(self.psi(pts))


def _window_grid(center, radius, res):
    axes = [np.linspace(c - radius, c + radius, res) for c in center]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return axes, mesh.reshape(-1, len(center))


def pointwise_decompose(sampler, index, x0, radius=0.1, grid=11, k=1, start_index=0,
                        eps_det=EPS_DET):
    """Factor phi_{t_start, t_index} around x0 on a square window."""
    x0 = np.asarray(x0, dtype=float)
    n = sampler.n
    if x0.shape != (n,):
        raise ParameterError(f"base point must have shape ({n},)")
    if not (1 <= k < n):
        raise ParameterError("need 1 <= k < n")
    if radius <= 0 or grid < 2:
        raise ParameterError("radius must be positive and grid >= 2")
    index = int(index)
    h = FD_REL_STEP * radius
    J0 = _vertical_jacobian(sampler, x0[None], start_index, index, k, h)[0]
    d0 = float(np.linalg.det(J0))
    if not abs(d0) >= eps_det:
        raise BreakdownError(f"det d(phi2)/dy = {d0:.3e} below threshold at the base point")
    axes, pts = _window_grid(x0, radius, grid)
    pf = PointFactorization(sampler, int(start_index), index, x0, float(radius), k, axes, pts,
                            None, None, None, None, None, d0, np.nan)
    pf.psi_values = pf.psi(pts)
    det = np.linalg.det(_vertical_jacobian(sampler, pts, start_index, index, k, h))
    pf.det = det
    center = pf.psi(x0[None])[0]
    _, ab = _window_grid(center, radius, grid)
    # continuation from the base point: seed every cell with x0's vertical part
    pf.eta_points = ab
    pf.eta_values = pf.eta(ab)
    pf.eta_mask = np.all(np.isfinite(pf.eta_values), axis=1)
    comp = pf.eta(pf.psi_values)
    good = np.all(np.isfinite(comp), axis=1)
    direct = pf.phi(pts)
    pf.residual = float(np.max(np.abs(comp[good] - direct[good]))) if np.any(good) else np.nan
    return pf


@dataclass(frozen=True)
class BreakdownInfo:
    time: float = None
    index: int = None
    kind: str = None          # 'threshold', 'sign' or 'jump'
    det: np.ndarray = None
    crossings: tuple = ()     # grid indices of jumps carrying det across zero

    def __bool__(self):
        return self.time is not None


def detect_breakdown(sampler, x0, start_index=0, stop_index=None, k=1, eps_det=EPS_DET,
                     radius=0.1, skip_first_jump=True):
    """First grid index after start where the transition flow from x0 loses
    the vertical determinant condition.

    A continuous sign change or |det| < eps_det is a breakdown; a jump that
    carries det across zero is a 'jump' breakdown unless it happens on the
    first step after the start (then it is only recorded as a crossing)."""
    Z = sampler.Z
    stop_index = Z.N if stop_index is None else int(stop_index)
    x0 = np.asarray(x0, dtype=float)
    n = sampler.n
    l = n - k
    h = FD_REL_STEP * radius
    offs = np.zeros((2 * l, n))
    for j in range(l):
        offs[2 * j, k + j] = h
        offs[2 * j + 1, k + j] = -h
    traj = sampler.trajectories(x0 + offs, start_index)[: stop_index - start_index + 1]
    img = traj[..., k:]
    J = np.stack([(img[:, 2 * j] - img[:, 2 * j + 1]) / (2 * h) for j in range(l)], axis=-1)
    det = np.linalg.det(np.nan_to_num(J, nan=0.0))
    det[~np.all(np.isfinite(J.reshape(len(J), -1)), axis=1)] = np.nan
    jumpy = (Z.jump_mask | Z.linear_jump_mask)[start_index:stop_index]
    crossings = []
    for m in range(1, len(det)):
        d_prev, d = det[m - 1], det[m]
        i_abs = start_index + m
        if not np.isfinite(d):
            return BreakdownInfo(float(Z.t[i_abs]), i_abs, "threshold", det, tuple(crossings))
        flipped = np.sign(d) != np.sign(d_prev)
        if jumpy[m - 1] and flipped:
            if m == 1 and skip_first_jump:
                crossings.append(i_abs)
                continue
            return BreakdownInfo(float(Z.t[i_abs - 1]), i_abs, "jump", det, tuple(crossings + [i_abs]))
        if abs(d) < eps_det:
            return BreakdownInfo(float(Z.t[i_abs]), i_abs, "threshold", det, tuple(crossings))
        if flipped:
            return BreakdownInfo(float(Z.t[i_abs]), i_abs, "sign", det, tuple(crossings))
    return BreakdownInfo(None, None, None, det, tuple(crossings))


@dataclass(eq=False)
class AlternateFactorization:
    sampler: FlowSampler
    x0: np.ndarray
    breakpoints: list                  # grid indices s_0 = 0 < s_1 < ... ; last is the end
    starts: list                       # base point phi_{0, s_{i-1}}(x0) of each interval
    factors: list                      # PointFactorization at the end of each interval
    margin: float
    eps_det: float
    radius: float
    k: int
    grid: int
    status: str = "complete"
    diagnostic: str = None
    breakdowns: list = field(default_factory=list)

    @property
    def times(self):
        return [float(self.sampler.Z.t[i]) for i in self.breakpoints]

    @property
    def restarts(self):
        return len(self.factors) - 1

    @property
    def end_index(self):
        return self.breakpoints[-1]

    def summary(self):
        return {
            "breakpoints": self.times,
            "restarts": self.restarts,
            "margin": self.margin,
            "eps_det": self.eps_det,
            "radius": self.radius,
            "status": self.status,
            "diagnostic": self.diagnostic,
            "residuals": [f.residual for f in self.factors],
            "breakdowns": [{"time": b.time, "kind": b.kind} for b in self.breakdowns],
        }


def alternate_decompose(sampler, x0, T=None, eps_det=EPS_DET, margin=0.05, radius=0.1,
                        grid=5, k=1):
    """Chain of factor pairs with restarts before each loss of the
    determinant condition.  Breakpoints sit on grid times, at or before
    (breakdown - margin); for a jump crossing, strictly before the jump."""
    if not margin > 0 or not eps_det > 0:
        raise ParameterError("margin and eps_det must be positive")
    Z = sampler.Z
    end = Z.N if T is None else int(np.searchsorted(Z.t, T - 1e-12))
    end = min(max(end, 1), Z.N)
    x0 = np.asarray(x0, dtype=float)
    bps, starts, facs, bds = [0], [x0.copy()], [], []
    cur, p = 0, x0.copy()
    status, diag = "complete", None
    while cur < end:
        bd = detect_breakdown(sampler, p, cur, end, k, eps_det, radius)
        if not bd:
            nxt = end
        else:
            bds.append(bd)
            if bd.kind == "jump":
                nxt = bd.index - 1
            else:
                nxt = int(np.searchsorted(Z.t, Z.t[bd.index] - margin, side="right")) - 1
            if nxt <= cur:
                status = "stall"
                diag = (f"no progress from t={Z.t[cur]:.6g}: breakdown ({bd.kind}) at "
                        f"t={bd.time:.6g} within the margin")
                break
        try:
            pf = pointwise_decompose(sampler, nxt, p, radius, grid, k, cur, eps_det)
        except EvaluationError as exc:
            raise EvaluationError(f"transition flow from s={Z.t[cur]:.6g} failed: {exc}") from exc
        facs.append(pf)
        p = sampler.transition(p[None], cur, nxt)[0]
        if not np.all(np.isfinite(p)):
            raise EvaluationError(f"transition flow from s={Z.t[cur]:.6g} left the domain")
        cur = nxt
        bps.append(cur)
        starts.append(p.copy())
    return AlternateFactorization(sampler, x0, bps, starts, facs, float(margin), float(eps_det),
                                  float(radius), k, grid, status, diag, bds)


def recompose(fac, t, x):
    """Apply the chained factors to x up to time t.

    Completed intervals use their stored pair; the interval containing t
    (left-limit convention at breakpoints) is factored at t on the fly."""
    Z = fac.sampler.Z
    x = np.asarray(x, dtype=float)
    i = int(np.searchsorted(Z.t, t - 1e-12))
    if i > fac.end_index or t > Z.t[fac.end_index] + 1e-12:
        raise ParameterError(f"t={t} beyond the factorized horizon {Z.t[fac.end_index]}")
    flat = x.reshape(-1, fac.sampler.n)
    if not np.all(fac.factors[0].contains(flat) if fac.factors else True):
        raise DomainError("point outside the first factor window")
    if i == 0:
        return x.copy()
    y = flat
    for j, pf in enumerate(fac.factors):
        s0, s1 = fac.breakpoints[j], fac.breakpoints[j + 1]
        if not np.all(pf.contains(y, slack=2.0) | (j == 0)):
            raise DomainError(f"point left the factor window of interval {j}")
        if i <= s1:
            if i == s1:
                return pf.compose(y).reshape(x.shape)
            part = pointwise_decompose(fac.sampler, i, fac.starts[j], pf.radius, 2, pf.k, s0,
                                       eps_det=0.0)
            return part.compose(y).reshape(x.shape)
        y = pf.compose(y)
    raise DomainError("time not covered by any interval")
