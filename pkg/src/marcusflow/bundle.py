"""
Horizontal/vertical factors of right-invariant Marcus flows on matrix groups.

Trivial bundles G x H: the flow of (A, B) is (exp(A Z) x, exp(B Z) y) and
splits in closed form into a left factor (exp(A Z), Id) and a right factor
(Id, y0^-1 exp(B Z) y0).

Reductive case SO(3) -> S^2 = SO(3)/SO(2), with h = span(E3) the isotropy
algebra and n = span(E1, E2) its Ad-invariant complement.  For
g_t = exp(W Z_t) g0 set W' = g0^T W g0, V = vertical (h) part, u = horizontal
(n) part.  Then g_t = eta_t psi_t with

    psi_t = exp(V Z_t),      d eta = eta Ad(psi_t) u <> dZ,   eta_0 = g0,

and eta is a horizontal lift of the base path pi(g_t) = g_t e3: its left
increments eta^-1 d eta stay in n.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fields as _f
from .errors import DomainError, ParameterError
from .marcus import solve_path

__all__ = [
    "E", "so3_basis", "hat", "vee", "polar", "check_group", "ReductiveSplit", "so3_split",
    "trivial_bundle_decompose", "TrivialFactors", "reductive_decompose", "ReductiveResult",
    "horizontal_lift_check", "NORTH",
]

NORTH = np.array([0.0, 0.0, 1.0])


def so3_basis():
    """E_i generates rotation about axis i: (E_i)_{jk} = -eps_{ijk}."""
    E = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        E[i, j, k] = -1.0
        E[i, k, j] = 1.0
    return E


E = so3_basis()


def hat(w):
    return np.tensordot(np.asarray(w, dtype=float), E, axes=1)


def vee(M):
    """Coordinates of the skew part of M in the basis E."""
    S = 0.5 * (M - np.swapaxes(M, -1, -2))
    return np.stack([S[..., 2, 1], S[..., 0, 2], S[..., 1, 0]], axis=-1)


def polar(M):
    """Nearest orthogonal matrix (polar factor)."""
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def check_group(g, tag, tol=1e-8):
    """Raise DomainError if g violates the constraints of ``tag``."""
    g = np.asarray(g, dtype=float)
    dims = {"SO(2)": 2, "SO(3)": 3}
    if tag in dims:
        n = dims[tag]
        if g.shape[-2:] != (n, n):
            raise DomainError(f"{tag} element must be {n} x {n}")
        I = np.eye(n)
        orth = np.max(np.abs(np.swapaxes(g, -1, -2) @ g - I))
        det = np.max(np.abs(np.linalg.det(g) - 1.0))
        if orth > tol or det > tol:
            raise DomainError(f"not in {tag}: orthogonality {orth:.2e}, det {det:.2e}")
        return float(max(orth, det))
    if tag == "SO(2)xSO(2)":
        x, y = g
        return max(check_group(x, "SO(2)", tol), check_group(y, "SO(2)", tol))
    raise ParameterError(f"unknown group tag {tag!r}")


@dataclass(frozen=True)
class ReductiveSplit:
    h_basis: np.ndarray          # (dh, 3, 3)
    n_basis: np.ndarray          # (dn, 3, 3)

    def __post_init__(self):
        B = np.concatenate([self.h_basis, self.n_basis]).reshape(len(self.h_basis) + len(self.n_basis), -1)
        if np.linalg.matrix_rank(B) != 3:
            raise ParameterError("h and n bases must span so(3)")

    def _coords(self, W):
        B = np.concatenate([self.h_basis, self.n_basis]).reshape(-1, 9).T
        c, *_ = np.linalg.lstsq(B, np.asarray(W, float).reshape(-1, 9).T, rcond=None)
        return c.T

    def proj_h(self, W):
        W = np.asarray(W, float)
        c = self._coords(W)[:, :len(self.h_basis)]
        return np.tensordot(c, self.h_basis, axes=1).reshape(W.shape)

    def proj_n(self, W):
        W = np.asarray(W, float)
        c = self._coords(W)[:, len(self.h_basis):]
        return np.tensordot(c, self.n_basis, axes=1).reshape(W.shape)

    def swapped(self):
        return _SwappedSplit(self)

    def ad_invariance_defect(self, angles=(0.3, 1.1, 2.5)):
        """max |h-part of Ad(exp(t X)) n| over h-generators X and sample t."""
        worst = 0.0
        for X in self.h_basis:
            for t in angles:
                k = _f.expm(t * X)
                for N in self.n_basis:
                    worst = max(worst, float(np.max(np.abs(self.proj_h(k @ N @ k.T)))))
        return worst


class _SwappedSplit:
    """Split with the roles of h and n exchanged (negative control)."""

    def __init__(self, base):
        self.base = base
        self.h_basis, self.n_basis = base.h_basis, base.n_basis

    def proj_h(self, W):
        return self.base.proj_n(W)

    def proj_n(self, W):
        return self.base.proj_h(W)


def so3_split():
    return ReductiveSplit(E[2:3].copy(), E[0:2].copy())


@dataclass(frozen=True, eq=False)
class TrivialFactors:
    t: np.ndarray
    eta: np.ndarray        # left factor on G: exp(A Z_t)
    h: np.ndarray          # right factor on H: y0^-1 exp(B Z_t) y0
    x: np.ndarray          # composite G component
    y: np.ndarray          # composite H component
    direct_x: np.ndarray
    direct_y: np.ndarray

    def error(self):
        return float(max(np.max(np.abs(self.x - self.direct_x)),
                         np.max(np.abs(self.y - self.direct_y))))


def _right_invariant_flow(W, Z, g0):
    """Direct Marcus flow of g -> W g from g0 (exact for a scalar driver)."""
    X = _f.matrix_right_invariant(W)
    n = g0.shape[0]
    F = _f.expm(Z.values[:, 0, None, None] * X.A[0])
    return (F @ g0.reshape(-1)).reshape(-1, n, n)


def trivial_bundle_decompose(A, B, Z, x0, y0, tag=("SO(2)", "SO(2)")):
    """Closed-form factors of the flow of (A, B) on G x H from (x0, y0)."""
    A, B = np.asarray(A, float), np.asarray(B, float)
    x0, y0 = np.asarray(x0, float), np.asarray(y0, float)
    if Z.dim != 1:
        raise ParameterError("trivial bundle factors need a scalar driver")
    check_group(x0, tag[0])
    check_group(y0, tag[1])
    z = Z.values[:, 0]
    eta = _f.expm(z[:, None, None] * A)
    eB = _f.expm(z[:, None, None] * B)
    h = np.linalg.inv(y0) @ eB @ y0
    x = eta @ x0
    y = y0 @ h
    dx = _right_invariant_flow(A, Z, x0)
    dy = _right_invariant_flow(B, Z, y0)
    return TrivialFactors(Z.t, eta, h, x, y, dx, dy)


@dataclass(eq=False)
class ReductiveResult:
    t: np.ndarray
    eta: np.ndarray
    psi: np.ndarray
    direct: np.ndarray
    V: np.ndarray
    u: np.ndarray
    path: object
    driver: object = None
    status: str = "complete"
    reports: dict = field(default_factory=dict)

    def composite(self):
        return self.eta @ self.psi

    def error(self):
        ok = np.all(np.isfinite(self.eta.reshape(len(self.t), -1)), axis=1)
        return float(np.max(np.linalg.norm(self.composite()[ok] - self.direct[ok], axis=(1, 2))))


def _eta_field(V, u):
    """Field on (eta flattened, z): (eta Ad(exp(V z)) u, 1)."""

    def func(s):
        eta = s[..., :9].reshape(s.shape[:-1] + (3, 3))
        z = s[..., 9]
        k = _f.expm(z[..., None, None] * V)
        gen = k @ u @ np.swapaxes(k, -1, -2)
        d = eta @ gen
        out = np.concatenate([d.reshape(s.shape[:-1] + (9,)), np.ones(s.shape[:-1] + (1,))], axis=-1)
        return out[..., None]

    lip = lambda s: 2.0 * (np.linalg.norm(u) + np.linalg.norm(V)) + 1.0
    return _f.CallableField(10, 1, func, name="horizontal-lift", lip=lip)


def _project(s):
    s = np.array(s, dtype=float)
    eta = s[..., :9].reshape(s.shape[:-1] + (3, 3))
    s[..., :9] = polar(eta).reshape(s.shape[:-1] + (9,))
    return s


def reductive_decompose(W, split, Z, g0, keep_samples=True):
    """eta, psi with eta_t psi_t = exp(W Z_t) g0 on SO(3)."""
    W = np.asarray(W, float)
    g0 = np.asarray(g0, float)
    if W.shape != (3, 3) or np.max(np.abs(W + W.T)) > 1e-12:
        raise ParameterError("W must be a skew 3 x 3 matrix")
    if Z.dim != 1:
        raise ParameterError("the reductive decomposition needs a scalar driver")
    check_group(g0, "SO(3)")
    Wp = g0.T @ W @ g0
    V = split.proj_h(Wp)
    u = split.proj_n(Wp)
    psi = _f.expm(Z.values[:, 0, None, None] * V)
    direct = _f.expm(Z.values[:, 0, None, None] * W) @ g0
    s0 = np.concatenate([g0.ravel(), [0.0]])
    with np.errstate(over="ignore", invalid="ignore"):
        path = solve_path(_eta_field(V, u), Z, s0, project=_project, keep_samples=keep_samples)
    eta = path.x[:, :9].reshape(-1, 3, 3)
    res = ReductiveResult(Z.t, eta, psi, direct, V, u, path, Z,
                          "complete" if path.complete else "stopped")
    ok = np.all(np.isfinite(eta.reshape(len(eta), -1)), axis=1)
    res.reports = {
        "composite_error": res.error(),
        "group_defect": float(max(check_group(eta[ok], "SO(3)", tol=np.inf),
                                  check_group(psi, "SO(3)", tol=np.inf))),
        "stop_time": path.stop_time,
    }
    return res


def _h_component(split, M):
    """Size of the vertical part of the skew part of M."""
    S = 0.5 * (M - np.swapaxes(M, -1, -2))
    return np.linalg.norm(split.proj_h(S), axis=(-2, -1)) / np.sqrt(2.0)


def horizontal_lift_check(res, split):
    """(projection residual, connection residual).

    Projection: max distance on S^2 between eta_t e3 and the direct flow's
    g_t e3.  Connection: max |h-part of eta^-1 d eta| / |dZ| over steps,
    including the fictitious-time samples of every jump."""
    ok = np.all(np.isfinite(res.eta.reshape(len(res.t), -1)), axis=1)
    proj = float(np.max(np.linalg.norm(res.eta[ok] @ NORTH - res.direct[ok] @ NORTH, axis=-1)))
    Z, path = res.driver, res.path
    eta = res.eta
    pre = path.pre_states()[:, :9].reshape(-1, 3, 3)
    worst = 0.0
    # continuous part of each step: eta_i -> eta(t_{i+1} -)
    dz = np.abs(Z.dz[:, 0])
    m = (dz > 0) & ok[:-1] & ok[1:]
    if np.any(m):
        inc = np.linalg.solve(eta[:-1][m], pre[1:][m]) - np.eye(3)
        worst = float(np.max(_h_component(split, inc) / dz[m]))
    for rec in path.jumps:
        if rec.samples is None:
            continue
        S = rec.samples[:, :9].reshape(-1, 3, 3)
        du = abs(float(rec.size[0])) / (len(S) - 1)
        inc = np.linalg.solve(S[:-1], S[1:]) - np.eye(3)
        worst = max(worst, float(np.max(_h_component(split, inc) / du)))
    return proj, worst
