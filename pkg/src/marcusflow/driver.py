"""
Semimartingale driver paths with explicit jumps.

A DriverPath stores, for every step (t_i, t_{i+1}], the continuous increment
``dz[i]`` (of which ``dw[i]`` is the martingale part carrying [Z,Z]^c), and
the jumps occurring at t_{i+1}.  Jumps come in two flavours:

``jump``
    ordinary jumps, resolved by the Marcus rule in the solvers;
``linear_jump``
    truncated jumps that enter the dynamics only through their linear
    (Ito) part.  They are produced by :func:`drop_jumps` and represent the
    small-jump set of a truncation argument.

Jump times are inserted into the grid, so a step never mixes a continuous
increment with a jump in a way that hides the pre-jump value:
``left_limit(i+1) = values[i] + dz[i]`` and
``values[i+1] = left_limit(i+1) + jump[i] + linear_jump[i]`` hold bitwise.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ParameterError

__all__ = [
    "JumpEvent", "DriverPath", "gen_brownian", "gen_compound_poisson",
    "gen_levy_truncated", "deterministic_time", "quadratic_variation",
    "with_jumps", "drop_jumps", "coarsen", "truncate", "segment", "levy_threshold",
]

_TIME_TOL = 1e-12


@dataclass(frozen=True)
class JumpEvent:
    time: float
    size: np.ndarray
    index: int = -1  # grid index of the post-jump value


@dataclass(frozen=True, eq=False)
class DriverPath:
    t: np.ndarray
    dz: np.ndarray
    dw: np.ndarray
    jump: np.ndarray
    linear_jump: np.ndarray
    base_index: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t) - 1
        if n < 1:
            raise ParameterError("driver grid needs at least two points")
        for name in ("dz", "dw", "jump", "linear_jump"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != n:
                raise ParameterError(f"{name} must have shape (N, k), got {arr.shape}")
        if np.any(np.diff(self.t) <= 0):
            raise ParameterError("grid must be strictly increasing")
        for arr in (self.t, self.dz, self.dw, self.jump, self.linear_jump):
            arr.setflags(write=False)

    @property
    def N(self):
        return len(self.t) - 1

    @property
    def dim(self):
        return self.dz.shape[1]

    @property
    def T(self):
        return float(self.t[-1])

    @property
    def dt(self):
        return np.diff(self.t)

    @cached_property
    def total_jump(self):
        return self.jump + self.linear_jump

    @cached_property
    def values(self):
        """Post-jump values Z(t_i), shape (N+1, k)."""
        inter = np.empty((2 * self.N, self.dim))
        inter[0::2] = self.dz
        inter[1::2] = self.total_jump
        out = np.zeros((self.N + 1, self.dim))
        out[1:] = np.cumsum(inter, axis=0)[1::2]
        out.setflags(write=False)
        return out

    @cached_property
    def left_limits(self):
        """Z(t_i -) for i >= 1 (index 0 repeats Z(0))."""
        inter = np.empty((2 * self.N, self.dim))
        inter[0::2] = self.dz
        inter[1::2] = self.total_jump
        out = np.zeros((self.N + 1, self.dim))
        out[1:] = np.cumsum(inter, axis=0)[0::2]
        out.setflags(write=False)
        return out

    @cached_property
    def qv_c(self):
        """Cumulative continuous quadratic variation, shape (N+1, k, k)."""
        inc = self.dw[:, :, None] * self.dw[:, None, :]
        out = np.zeros((self.N + 1, self.dim, self.dim))
        out[1:] = np.cumsum(inc, axis=0)
        return out

    @cached_property
    def jump_mask(self):
        return np.any(self.jump != 0, axis=1)

    @cached_property
    def linear_jump_mask(self):
        return np.any(self.linear_jump != 0, axis=1)

    @property
    def jumps(self):
        idx = np.flatnonzero(self.jump_mask)
        return [JumpEvent(float(self.t[i + 1]), self.jump[i].copy(), int(i + 1)) for i in idx]

    @property
    def linear_jumps(self):
        idx = np.flatnonzero(self.linear_jump_mask)
        return [JumpEvent(float(self.t[i + 1]), self.linear_jump[i].copy(), int(i + 1))
                for i in idx]

    def index_of(self, time):
        """Grid index of the largest grid time <= time (with tolerance)."""
        i = int(np.searchsorted(self.t, time + _TIME_TOL * max(1.0, self.T), side="right")) - 1
        return max(0, min(i, self.N))

    def replace(self, **kw):
        d = dict(t=self.t, dz=self.dz, dw=self.dw, jump=self.jump,
                 linear_jump=self.linear_jump, base_index=self.base_index,
                 meta=dict(self.meta))
        d.update(kw)
        return DriverPath(**{k: (np.array(v) if isinstance(v, np.ndarray) else v)
                             for k, v in d.items()})


def _check_T_dt(T, dt):
    if not (T > 0):
        raise ParameterError(f"horizon T must be positive, got {T}")
    if dt is not None and not (0 < dt <= T):
        raise ParameterError(f"dt must satisfy 0 < dt <= T, got dt={dt}, T={T}")


def _base_grid(T, dt):
    n = int(np.ceil(T / dt - 1e-9))
    t = np.arange(n + 1, dtype=float) * dt
    t[-1] = T
    return t


def _insert_times(t, base_index, times):
    """Insert extra times into a grid, returning new grid, base indices and
    the grid index of every requested time."""
    T = t[-1]
    tol = _TIME_TOL * max(1.0, T)
    extra = []
    for s in times:
        if not (0 < s <= T + tol):
            raise ParameterError(f"jump time {s} outside (0, T]")
        j = np.searchsorted(t, s)
        near = [i for i in (j - 1, j) if 0 <= i < len(t) and abs(t[i] - s) <= tol]
        if not near:
            extra.append(s)
    if extra:
        extra = np.unique(np.asarray(extra, dtype=float))
        t_new = np.concatenate([t, extra])
        b_new = np.concatenate([base_index, -np.ones(len(extra), dtype=int)])
        order = np.argsort(t_new, kind="stable")
        t, base_index = t_new[order], b_new[order]
    idx = []
    for s in times:
        idx.append(int(np.argmin(np.abs(t - s))))
    return t, base_index, idx


def _brownian_on_grid(rng_base, rng_bridge, t_base, t, dim):
    """Brownian increments on the base grid, refined onto the (possibly
    finer) grid ``t`` by Brownian bridges, so the base-grid values do not
    depend on inserted points."""
    db = rng_base.standard_normal((len(t_base) - 1, dim)) * np.sqrt(np.diff(t_base))[:, None]
    if len(t) == len(t_base):
        return db
    out = np.empty((len(t) - 1, dim))
    pos = np.searchsorted(t, t_base)
    for i in range(len(t_base) - 1):
        a, b = pos[i], pos[i + 1]
        if b - a == 1:
            out[a] = db[i]
            continue
        rem = db[i].copy()
        for j in range(a, b - 1):
            h = t[j + 1] - t[j]
            L = t[b] - t[j]
            mean = rem * h / L
            var = h * (L - h) / L
            inc = mean + np.sqrt(var) * rng_bridge.standard_normal(dim)
            out[j] = inc
            rem = rem - inc
        out[b - 1] = rem
    return out


def _assemble(t, base_index, dz, dw, jump_idx, jump_sizes, meta, dim):
    N = len(t) - 1
    jump = np.zeros((N, dim))
    for i, s in zip(jump_idx, jump_sizes):
        if i == 0:
            raise ParameterError("jump at t=0 is not allowed")
        jump[i - 1] += s
    return DriverPath(t=t, dz=dz, dw=dw, jump=jump, linear_jump=np.zeros((N, dim)),
                      base_index=base_index, meta=meta)


def _normalise_jumps(jumps, dim):
    times, sizes = [], []
    for item in jumps or ():
        s, z = item
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (dim,):
            raise ParameterError(f"jump size must have shape ({dim},), got {z.shape}")
        if not np.any(z != 0):
            raise ParameterError("jump size must be nonzero")
        times.append(float(s))
        sizes.append(z)
    return times, sizes


def gen_brownian(seed, T, dt, dim=1, jumps=None):
    """Standard Brownian driver, optionally with fixed jumps ``[(time, size), ...]``.

    The Brownian increments on the regular grid depend only on ``seed``;
    jump times are inserted as extra grid points and filled by Brownian
    bridges from an independent stream.
    """
    _check_T_dt(T, dt)
    if dim < 1:
        raise ParameterError("dim must be >= 1")
    times, sizes = _normalise_jumps(jumps, dim)
    t_base = _base_grid(T, dt)
    base_index = np.arange(len(t_base))
    t, base_index, idx = _insert_times(t_base, base_index, times)
    ss = np.random.SeedSequence(int(seed))
    r_base, r_bridge = (np.random.default_rng(s) for s in ss.spawn(2))
    dw = _brownian_on_grid(r_base, r_bridge, t_base, t, dim)
    meta = {"kind": "brownian", "seed": int(seed), "T": float(T), "dt": float(dt), "dim": dim,
            "fixed_jumps": [[s, z.tolist()] for s, z in zip(times, sizes)]}
    return _assemble(t, base_index, dw.copy(), dw, idx, sizes, meta, dim)


def _draw_jump_sizes(rng, law, count, dim):
    kind = law.get("kind")
    if kind == "fixed":
        v = np.broadcast_to(np.asarray(law["value"], dtype=float), (dim,))
        out = np.tile(v, (count, 1))
    elif kind == "uniform":
        out = rng.uniform(law["low"], law["high"], size=(count, dim))
    elif kind == "gaussian":
        out = rng.normal(law.get("mean", 0.0), law["std"], size=(count, dim))
    else:
        raise ParameterError(f"unknown jump law {kind!r}")
    bad = ~np.any(out != 0, axis=1)
    if np.any(bad):
        raise ParameterError("jump law produced a zero jump")
    return out


def gen_compound_poisson(seed, T, rate, jump_law=None, dt=None, dim=1, jumps=None):
    """Compound Poisson driver.  ``jumps`` injects fixed ``(time, size)`` pairs
    in addition to the random ones (deterministic test mode uses rate=0)."""
    if rate < 0:
        raise ParameterError(f"rate must be non-negative, got {rate}")
    dt = T / 100 if dt is None else dt
    _check_T_dt(T, dt)
    rng = np.random.default_rng(int(seed))
    count = int(rng.poisson(rate * T))
    times = np.sort(rng.uniform(0.0, T, size=count))
    times = times[times > 0]
    if count:
        if jump_law is None:
            raise ParameterError("jump_law required when rate > 0")
        sizes = list(_draw_jump_sizes(rng, jump_law, len(times), dim))
    else:
        sizes = []
    ftimes, fsizes = _normalise_jumps(jumps, dim)
    all_times = list(times) + ftimes
    all_sizes = sizes + fsizes
    t_base = _base_grid(T, dt)
    t, base_index, idx = _insert_times(t_base, np.arange(len(t_base)), all_times)
    N = len(t) - 1
    zero = np.zeros((N, dim))
    meta = {"kind": "compound_poisson", "seed": int(seed), "T": float(T), "dt": float(dt),
            "rate": float(rate), "jump_law": jump_law, "dim": dim,
            "fixed_jumps": [[s, z.tolist()] for s, z in zip(ftimes, fsizes)]}
    return _assemble(t, base_index, zero, zero.copy(), idx, all_sizes, meta, dim)


def levy_threshold(alpha, eps_qv, T, intensity=1.0):
    """Jump-size threshold delta whose omitted expected squared mass is eps_qv.

    Levy measure: nu(dx) = c |x|^(-1-alpha) dx on 0 < |x| <= 1 (radially for
    dim > 1, total angular mass 2).  Expected omitted mass over [0, T] is
    2 c T delta^(2-alpha) / (2-alpha).
    """
    d = ((2.0 - alpha) * eps_qv / (2.0 * intensity * T)) ** (1.0 / (2.0 - alpha))
    return min(1.0, d)


def gen_levy_truncated(seed, T, dt, alpha, eps_qv, dim=1, sigma=0.0, aggregate_small=True,
                       intensity=1.0, max_jumps=1_000_000):
    """Truncated power-law Levy driver.  Returns ``(path, tail_qv_bound)``.

    Jumps are generated in decreasing size by the inverse tail-intensity
    series r_j = (1 + alpha Gamma_j / (2cT))^(-1/alpha), so the explicit jump
    set for a smaller threshold always extends the one for a larger
    threshold (same seed).  Omitted jumps are replaced by a Gaussian with
    the same variance when ``aggregate_small``.
    """
    if not (0 < alpha < 2):
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha}")
    if not (eps_qv > 0):
        raise ParameterError("eps_qv must be positive")
    _check_T_dt(T, dt)
    if not (intensity > 0):
        raise ParameterError("intensity must be positive")
    delta = levy_threshold(alpha, eps_qv, T, intensity)
    tail = 2.0 * intensity * T * delta ** (2.0 - alpha) / (2.0 - alpha)
    ss = np.random.SeedSequence(int(seed))
    r_series, r_base, r_bridge = (np.random.default_rng(s) for s in ss.spawn(3))

    times, sizes = [], []
    gamma = 0.0
    block = 1024
    done = False
    while not done:
        e = r_series.exponential(size=block)
        u = r_series.uniform(0.0, T, size=block)
        d = r_series.standard_normal((block, dim))
        for j in range(block):
            gamma += e[j]
            r = (1.0 + alpha * gamma / (2.0 * intensity * T)) ** (-1.0 / alpha)
            if r <= delta:
                done = True
                break
            if dim == 1:
                direction = np.array([1.0 if d[j, 0] >= 0 else -1.0])
            else:
                direction = d[j] / np.linalg.norm(d[j])
            if u[j] > 0:
                times.append(float(u[j]))
                sizes.append(r * direction)
            if len(times) > max_jumps:
                raise ParameterError("too many explicit jumps; increase eps_qv")
    t_base = _base_grid(T, dt)
    t, base_index, idx = _insert_times(t_base, np.arange(len(t_base)), times)
    var = sigma ** 2 + (tail / T if aggregate_small else 0.0) / dim
    dw = _brownian_on_grid(r_base, r_bridge, t_base, t, dim) * np.sqrt(var)
    meta = {"kind": "levy_truncated", "seed": int(seed), "T": float(T), "dt": float(dt),
            "alpha": float(alpha), "eps_qv": float(eps_qv), "threshold": float(delta),
            "sigma": float(sigma), "intensity": float(intensity), "aggregate_small": bool(aggregate_small), "dim": dim}
    return _assemble(t, base_index, dw.copy(), dw, idx, sizes, meta, dim), tail


def deterministic_time(T, dt):
    """Drift driver Z(t) = t."""
    _check_T_dt(T, dt)
    t = _base_grid(T, dt)
    N = len(t) - 1
    dz = np.diff(t)[:, None]
    meta = {"kind": "deterministic_time", "T": float(T), "dt": float(dt), "dim": 1}
    return DriverPath(t=t, dz=dz, dw=np.zeros((N, 1)), jump=np.zeros((N, 1)),
                      linear_jump=np.zeros((N, 1)), base_index=np.arange(N + 1), meta=meta)


def quadratic_variation(path):
    """Return ([Z,Z]^c_T, [Z,Z]^d_T) as (k, k) matrices."""
    qc = path.qv_c[-1].copy()
    j = path.total_jump
    qd = j.T @ j
    return qc, qd


def with_jumps(path, jumps):
    """Add fixed ``(time, size)`` jumps to a path, inserting grid points and
    splitting continuous increments linearly in time for finite-variation
    parts and by a deterministic midpoint split otherwise."""
    times, sizes = _normalise_jumps(jumps, path.dim)
    t, base_index, idx = _insert_times(path.t, path.base_index, times)
    if len(t) != len(path.t):
        pos = np.searchsorted(t, path.t)
        dz = np.empty((len(t) - 1, path.dim))
        dw = np.empty_like(dz)
        for i in range(path.N):
            a, b = pos[i], pos[i + 1]
            w = np.diff(t[a:b + 1]) / (t[b] - t[a])
            dz[a:b] = w[:, None] * path.dz[i]
            dw[a:b] = w[:, None] * path.dw[i]
        jump = np.zeros_like(dz)
        lj = np.zeros_like(dz)
        jump[pos[1:] - 1] = path.jump
        lj[pos[1:] - 1] = path.linear_jump
    else:
        dz, dw = path.dz.copy(), path.dw.copy()
        jump, lj = path.jump.copy(), path.linear_jump.copy()
    for i, s in zip(idx, sizes):
        jump[i - 1] += s
    meta = dict(path.meta)
    meta["added_jumps"] = [[s, z.tolist()] for s, z in zip(times, sizes)]
    return DriverPath(t=t, dz=dz, dw=dw, jump=jump, linear_jump=lj,
                      base_index=base_index, meta=meta)


def drop_jumps(path, threshold):
    """Truncated driver Z^A: jumps with |size| <= threshold keep only their
    linear contribution (they move to ``linear_jump``)."""
    norms = np.linalg.norm(path.jump, axis=1)
    small = path.jump_mask & (norms <= threshold)
    jump = path.jump.copy()
    lj = path.linear_jump.copy()
    lj[small] += jump[small]
    jump[small] = 0.0
    meta = dict(path.meta)
    meta["truncated_at"] = float(threshold)
    return path.replace(jump=jump, linear_jump=lj, meta=meta)


def coarsen(path, m):
    """Coupled coarser driver: keep every m-th regular grid point plus all
    jump points, summing increments in between."""
    if m < 1:
        raise ParameterError("coarsening factor must be >= 1")
    if m == 1:
        return path
    bi = path.base_index
    keep = np.zeros(path.N + 1, dtype=bool)
    keep[0] = keep[-1] = True
    keep |= (bi >= 0) & (bi % m == 0)
    keep[1:] |= path.jump_mask | path.linear_jump_mask
    kidx = np.flatnonzero(keep)
    dz = np.stack([path.dz[a:b].sum(axis=0) for a, b in zip(kidx[:-1], kidx[1:])])
    dw = np.stack([path.dw[a:b].sum(axis=0) for a, b in zip(kidx[:-1], kidx[1:])])
    jump = path.jump[kidx[1:] - 1]
    lj = path.linear_jump[kidx[1:] - 1]
    new_bi = np.where(bi[kidx] >= 0, bi[kidx] // m, -1)
    meta = dict(path.meta)
    meta["coarsened_by"] = int(m) * int(meta.get("coarsened_by", 1))
    return DriverPath(t=path.t[kidx].copy(), dz=dz, dw=dw, jump=jump.copy(), linear_jump=lj.copy(),
                      base_index=new_bi, meta=meta)


def truncate(path, index):
    """Restrict a path to grid points 0..index."""
    index = int(index)
    if index < 1 or index > path.N:
        raise ParameterError("truncation index out of range")
    meta = dict(path.meta)
    meta["truncated_index"] = index
    return DriverPath(t=path.t[:index + 1].copy(), dz=path.dz[:index].copy(),
                      dw=path.dw[:index].copy(), jump=path.jump[:index].copy(),
                      linear_jump=path.linear_jump[:index].copy(),
                      base_index=path.base_index[:index + 1].copy(), meta=meta)


def segment(path, start, stop):
    """Sub-path on grid points start..stop; values restart from zero."""
    start, stop = int(start), int(stop)
    if not (0 <= start < stop <= path.N):
        raise ParameterError(f"segment [{start}, {stop}] out of range for N={path.N}")
    meta = dict(path.meta)
    meta["segment"] = [start, stop]
    return DriverPath(t=path.t[start:stop + 1].copy(), dz=path.dz[start:stop].copy(),
                      dw=path.dw[start:stop].copy(), jump=path.jump[start:stop].copy(),
                      linear_jump=path.linear_jump[start:stop].copy(),
                      base_index=path.base_index[start:stop + 1].copy(), meta=meta)
