"""
Horizontal x vertical factorization of linear flows F_t = exp(A Z_t).

With A = [[A1, A2], [A3, A4]] (leading block k x k) the flow splits as
F = eta psi with

    eta = [[g1, g2], [0, I]],   psi = [[I, 0], [g3, g4]],
    g3 = F3, g4 = F4, g2 = F2 F4^-1, g1 = F1 - F2 F4^-1 F3,

valid while det F4 != 0.  The same factors solve the constituent Marcus
equations, whose only nonlinear terms carry A3.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import fields as _f
from .driver import truncate
from .errors import BreakdownError, CascadeBreakdown, ParameterError, SpectralSelectionError
from .marcus import solve_path

__all__ = [
    "BlockPartition", "FactorPair", "BreakdownResult", "decompose_linear_algebraic",
    "decompose_linear_sde", "breakdown_time", "schur_foliation_select", "cascade_factorize",
    "factor_deviation", "constituent_field", "EPS_DET",
]

EPS_DET = 1e-6
JUMP_PROBES = 33  # samples of u in [0, 1] used to follow det F4 through a jump


@dataclass(frozen=True)
class BlockPartition:
    A: np.ndarray
    k: int

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ParameterError("generator must be square")
        if not (1 <= self.k < n):
            raise ParameterError(f"need 1 <= k < n, got k={self.k}, n={n}")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def l(self):
        return self.n - self.k

    @property
    def A1(self):
        return self.A[:self.k, :self.k]

    @property
    def A2(self):
        return self.A[:self.k, self.k:]

    @property
    def A3(self):
        return self.A[self.k:, :self.k]

    @property
    def A4(self):
        return self.A[self.k:, self.k:]

    def reassemble(self):
        return np.block([[self.A1, self.A2], [self.A3, self.A4]])


@dataclass(frozen=True, eq=False)
class FactorPair:
    t: np.ndarray
    eta: np.ndarray
    psi: np.ndarray
    k: int
    tau: float = None
    tau_index: int = None
    det_f4: np.ndarray = None
    crossing: bool = False
    crossing_times: list = field(default_factory=list)
    route: str = "algebraic"
    status: str = "complete"
    eps_det: float = EPS_DET

    @property
    def valid(self):
        """Mask of grid times strictly before breakdown."""
        m = np.all(np.isfinite(self.eta.reshape(len(self.t), -1)), axis=1)
        m &= np.all(np.isfinite(self.psi.reshape(len(self.t), -1)), axis=1)
        return m

    def product(self):
        return self.eta @ self.psi


@dataclass(frozen=True)
class BreakdownResult:
    time: float = None
    index: int = None
    crossing: bool = False
    crossing_times: tuple = ()

    def __bool__(self):
        return self.time is not None


def _blocks(F, k):
    return F[..., :k, :k], F[..., :k, k:], F[..., k:, :k], F[..., k:, k:]


def _assemble_factors(g1, g2, g3, g4, k, n):
    lead = g1.shape[:-2]
    l = n - k
    eta = np.zeros(lead + (n, n))
    psi = np.zeros(lead + (n, n))
    eta[..., :k, :k] = g1
    eta[..., :k, k:] = g2
    eta[..., k:, k:] = np.eye(l)
    psi[..., :k, :k] = np.eye(k)
    psi[..., k:, :k] = g3
    psi[..., k:, k:] = g4
    return eta, psi


def _flows(A, Z):
    A = np.asarray(A, dtype=float)
    if Z.dim != 1:
        raise ParameterError("linear decomposition needs a scalar driver")
    F = _f.expm(Z.values[:, 0, None, None] * A)
    return F


def _scan_breakdown(A, Z, k, eps_det):
    """det F4 on the grid, first index with |det| < eps, and jump crossings.

    A jump crosses the singular set when det F4 changes sign or drops below
    eps along exp(A (Z_- + u dZ)), u in [0, 1].  Returns
    (det, first_bad_index, crossing_indices)."""
    F = _flows(A, Z)
    det = np.linalg.det(F[:, k:, k:])
    small = np.flatnonzero(np.abs(det) < eps_det)
    first = int(small[0]) if len(small) else None
    crossings = []
    us = np.linspace(0.0, 1.0, JUMP_PROBES)
    for i in np.flatnonzero(Z.jump_mask | Z.linear_jump_mask):
        z0 = Z.left_limits[i + 1, 0]
        dzj = Z.total_jump[i, 0]
        Fu = _f.expm((z0 + us * dzj)[:, None, None] * A)
        du = np.linalg.det(Fu[:, k:, k:])
        if np.any(np.sign(du) != np.sign(du[0])) or np.any(np.abs(du) < eps_det):
            crossings.append(int(i + 1))
    # continuous sign change between grid points also means a zero crossing
    cont = np.flatnonzero((np.sign(det[1:]) != np.sign(det[:-1]))
                          & ~(Z.jump_mask | Z.linear_jump_mask)) + 1
    if len(cont):
        c = int(cont[0])
        first = c if first is None else min(first, c)
    return F, det, first, crossings


def breakdown_time(A, Z, k, eps_det=EPS_DET):
    """First grid time with |det F4| < eps_det.  Jumps that carry det F4
    across zero raise the crossing flag but are not themselves breakdowns
    (detection is on post-jump values)."""
    if not eps_det > 0:
        raise ParameterError("eps_det must be positive")
    BlockPartition(np.asarray(A, float), k)
    _, det, first, crossings = _scan_breakdown(A, Z, k, eps_det)
    if first is not None:
        crossings = [c for c in crossings if c <= first]
    ct = tuple(float(Z.t[c]) for c in crossings)
    if first is None:
        return BreakdownResult(None, None, bool(crossings), ct)
    return BreakdownResult(float(Z.t[first]), first, bool(crossings), ct)


def decompose_linear_algebraic(A, Z, k, eps_det=EPS_DET):
    """Algebraic factors from the blocks of exp(A Z_t); NaN from breakdown on."""
    A = np.asarray(A, dtype=float)
    bp = BlockPartition(A, k)
    n = bp.n
    F, det, first, crossings = _scan_breakdown(A, Z, k, eps_det)
    if abs(det[0]) < eps_det:
        raise BreakdownError("det F4 below threshold at t=0")
    stop = Z.N + 1 if first is None else first
    F1, F2, F3, F4 = _blocks(F[:stop], k)
    g2 = np.linalg.solve(np.swapaxes(F4, -1, -2), np.swapaxes(F2, -1, -2))
    g2 = np.swapaxes(g2, -1, -2)
    g1 = F1 - g2 @ F3
    eta_v, psi_v = _assemble_factors(g1, g2, F3, F4, k, n)
    eta = np.full((Z.N + 1, n, n), np.nan)
    psi = np.full((Z.N + 1, n, n), np.nan)
    eta[:stop], psi[:stop] = eta_v, psi_v
    eta[0] = psi[0] = np.eye(n)
    tau = None if first is None else float(Z.t[first])
    return FactorPair(Z.t, eta, psi, k, tau, first, det, bool(crossings),
                      [float(Z.t[c]) for c in crossings], "algebraic",
                      "complete" if first is None else "breakdown", eps_det)


def constituent_field(A, k):
    """Marcus field of the constituent system for (g1, g2, g3, g4):

        dg1 = (A1 g1 - g2 A3 g1) dz,       dg2 = (A1 g2 + A2 - g2 A4 - g2 A3 g2) dz,
        dg3 = (A3 g1 + A3 g2 g3 + A4 g3) dz,
        dg4 = (A3 g2 g4 + A4 g4) dz.
    """
    bp = BlockPartition(np.asarray(A, float), k)
    A1, A2, A3, A4 = bp.A1, bp.A2, bp.A3, bp.A4
    l = bp.l
    sizes = [k * k, k * l, l * k, l * l]
    cuts = np.cumsum([0] + sizes)

    def split(s):
        lead = s.shape[:-1]
        g1 = s[..., cuts[0]:cuts[1]].reshape(lead + (k, k))
        g2 = s[..., cuts[1]:cuts[2]].reshape(lead + (k, l))
        g3 = s[..., cuts[2]:cuts[3]].reshape(lead + (l, k))
        g4 = s[..., cuts[3]:cuts[4]].reshape(lead + (l, l))
        return g1, g2, g3, g4

    def func(s):
        g1, g2, g3, g4 = split(s)
        lead = s.shape[:-1]
        d1 = A1 @ g1 - g2 @ A3 @ g1
        d2 = A1 @ g2 + A2 - g2 @ A4 - g2 @ A3 @ g2
        d3 = A3 @ g1 + A3 @ g2 @ g3 + A4 @ g3
        d4 = A3 @ g2 @ g4 + A4 @ g4
        out = np.concatenate([d.reshape(lead + (-1,)) for d in (d1, d2, d3, d4)], axis=-1)
        return out[..., None]

    def lip(s):
        g1, g2, g3, g4 = split(s)
        na = np.linalg.norm(A, 2)
        ng = max(np.max(np.linalg.norm(g.reshape(g.shape[:-2] + (-1,)), axis=-1))
                 for g in (g1, g2, g3, g4))
        return na * (1.0 + 2.0 * ng)

    return _f.CallableField(int(cuts[-1]), 1, func, name="constituent", lip=lip), split


def decompose_linear_sde(A, Z, k, eps_det=EPS_DET, stop_at_breakdown=True):
    """Integrate the constituent Marcus equations with the marcus solver.

    Integration stops at the algebraic breakdown time (or before a jump
    that crosses the singular set); a non-finite state before that time is
    reported as a scheme failure."""
    A = np.asarray(A, dtype=float)
    bp = BlockPartition(A, k)
    n, l = bp.n, bp.l
    field_, split = constituent_field(A, k)
    s0 = np.concatenate([np.eye(k).ravel(), np.zeros(k * l), np.zeros(l * k), np.eye(l).ravel()])
    _, det, first, crossings = _scan_breakdown(A, Z, k, eps_det)
    end = Z.N
    if stop_at_breakdown:
        cands = [c - 1 for c in crossings] + ([first - 1] if first is not None else [])
        if cands:
            end = min(cands)
    eta = np.full((Z.N + 1, n, n), np.nan)
    psi = np.full((Z.N + 1, n, n), np.nan)
    status = "complete" if end == Z.N else "breakdown"
    if end >= 1:
        with np.errstate(over="ignore", invalid="ignore"):
            path = solve_path(field_, truncate(Z, end) if end < Z.N else Z, s0, keep_samples=False)
        g1, g2, g3, g4 = split(path.x)
        e, p = _assemble_factors(g1, g2, g3, g4, k, n)
        eta[:end + 1], psi[:end + 1] = e, p
        if not path.complete:
            status = "scheme_failure"
    else:
        eta[0] = psi[0] = np.eye(n)
    tau = None if first is None else float(Z.t[first])
    return FactorPair(Z.t, eta, psi, k, tau, first, det, bool(crossings),
                      [float(Z.t[c]) for c in crossings], "sde", status, eps_det)


def factor_deviation(fp_a, fp_b, det_floor=0.0):
    """Max relative deviation between two factor pairs over the common valid
    window, optionally restricted to times before |det F4| first drops
    below ``det_floor``."""
    m = fp_a.valid & fp_b.valid
    if det_floor > 0 and fp_a.det_f4 is not None:
        low = np.flatnonzero(np.abs(fp_a.det_f4) < det_floor)
        if len(low):
            m[low[0]:] = False
        for c in fp_a.crossing_times:
            m[np.searchsorted(fp_a.t, c) - 1:] = False
    if not np.any(m):
        return np.nan
    d = np.maximum(np.linalg.norm(fp_a.eta[m] - fp_b.eta[m], axis=(1, 2)) /
                   (1.0 + np.linalg.norm(fp_a.eta[m], axis=(1, 2))),
                   np.linalg.norm(fp_a.psi[m] - fp_b.psi[m], axis=(1, 2)) /
                   (1.0 + np.linalg.norm(fp_a.psi[m], axis=(1, 2))))
    return float(np.max(d))


def schur_foliation_select(A, a, b, tol=1e-9):
    """Orthogonal P with P^T A P block upper triangular, leading block of
    size k = a + 2b holding a real eigenvalues and b conjugate pairs.

    Eigenvalues are chosen in order of decreasing real part within each
    class.  Returns (P, k)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ParameterError("A must be square")
    T, Q = scipy.linalg.schur(A, output="real")
    # diagonal blocks of the quasi-triangular form
    blocks = []
    i = 0
    while i < n:
        if i + 1 < n and abs(T[i + 1, i]) > 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    reals = [bl for bl in blocks if bl[1] == 1]
    pairs = [bl for bl in blocks if bl[1] == 2]
    k = a + 2 * b
    if a < 0 or b < 0 or a > len(reals) or b > len(pairs) or not (1 <= k < n):
        raise SpectralSelectionError(
            f"cannot select a={a} real eigenvalues and b={b} pairs with 1 <= a+2b < {n}; "
            f"available: {len(reals)} real, {len(pairs)} conjugate pairs")
    reals = sorted(reals, key=lambda bl: -T[bl[0], bl[0]])[:a]
    pairs = sorted(pairs, key=lambda bl: -T[bl[0], bl[0]])[:b]
    select = np.zeros(n, dtype=np.int32)
    for s, size in reals + pairs:
        select[s:s + size] = 1
    trsen = scipy.linalg.lapack.get_lapack_funcs("trsen", (T,))
    res = trsen(select, T, Q, job="N", wantq=1)
    T2, Q2, info = res[0], res[1], res[-1]
    if info != 0:
        raise SpectralSelectionError(f"eigenvalue reordering failed (info={info})")
    T2 = np.asarray(T2)
    if np.max(np.abs(T2[k:, :k])) > tol * max(1.0, np.max(np.abs(A))):
        raise SpectralSelectionError("reordered Schur form has a nonzero lower-left block")
    return np.asarray(Q2), k


def cascade_factorize(F, flag_dims):
    """Factor F = E_1 E_2 ... E_r E_{r+1}, where E_j differs from the identity
    only in the rows of flag step j (rows d_{j-1}..d_j - 1, with d_0 = 0 and
    d_{r+1} = n)."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    dims = list(flag_dims)
    if any(b <= a for a, b in zip(dims, dims[1:])) or not dims or dims[0] < 1 or dims[-1] >= n:
        raise ParameterError("flag dims must be strictly increasing within [1, n-1]")
    factors = []
    rest = F.copy()
    for level, d in enumerate(dims):
        F1, F2, F3, F4 = _blocks(rest, d)
        det = np.linalg.det(F4)
        if abs(det) < EPS_DET:
            raise CascadeBreakdown(f"trailing minor vanishes at flag level {level + 1} (dim {d})",
                                   level=level + 1)
        g2 = np.linalg.solve(F4.T, F2.T).T
        g1 = F1 - g2 @ F3
        eta, psi = _assemble_factors(g1, g2, F3, F4, d, n)
        lo = dims[level - 1] if level else 0
        eta[:lo, :] = np.eye(n)[:lo, :]
        factors.append(eta)
        rest = psi
    factors.append(rest)
    return factors
