"""
Attainable sets for planar bifoliations on a raster window.

Leaves are streamlines of unit line fields.  Saturating a mask adds every
window cell whose leaf meets the mask; leaves are traced with RK4 at half
a cell inside the window and two cells in the surrounding trace box, so
leaves that leave the window and come back stay connected.

Each cell is decided by the leaf through its center, traced until it meets
the source mask.  A leaf that never meets it marks every cell it crossed
as out, so those cells are not traced again.  An optional proxy mode also
marks all cells crossed by meeting leaves as in (faster, but thin sets
such as a single leaf can be swallowed by neighbouring leaves).

Attainable sets apply the horizontal saturation first:
A^1 = V(H(p)), A^k = V(H(A^{k-1})).
"""

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DegeneracyError, DomainError, ParameterError

__all__ = [
    "FoliationPair", "AttainMask", "FOLIATIONS", "foliation", "saturate", "leaf_mask",
    "attainable_sets", "attainability_index", "co_attainable", "commute_check",
    "coverage", "strip_mask", "COVERAGE_THRESHOLD", "AGREEMENT_THRESHOLD",
]

COVERAGE_THRESHOLD = 0.995
AGREEMENT_THRESHOLD = 0.995
MAX_STEPS = 400000

# direction field ids
_CART_H, _CART_V, _HYP_H, _HYP_V, _SEC_H, _SEC_V = range(6)


@numba.njit(cache=True)
def _direction(fid, x, y):
    if fid == 0:
        return 1.0, 0.0
    if fid == 1:
        return 0.0, 1.0
    if fid == 2:
        return x, -y
    if fid == 3:
        return y, x
    if fid == 4:
        s = np.sin(x)
        return s * abs(s), np.cos(x)
    c = np.cos(x)
    return c * abs(c), -np.sin(x)


@numba.njit(cache=True)
def _unit(fid, x, y, px, py):
    u, v = _direction(fid, x, y)
    n = np.hypot(u, v)
    if n < 1e-12:
        return 0.0, 0.0, False
    u /= n
    v /= n
    if u * px + v * py < 0.0:
        u, v = -u, -v
    return u, v, True


@numba.njit(cache=True)
def _rk4(fid, x, y, px, py, h):
    k1x, k1y, ok1 = _unit(fid, x, y, px, py)
    k2x, k2y, ok2 = _unit(fid, x + 0.5 * h * k1x, y + 0.5 * h * k1y, k1x, k1y)
    k3x, k3y, ok3 = _unit(fid, x + 0.5 * h * k2x, y + 0.5 * h * k2y, k1x, k1y)
    k4x, k4y, ok4 = _unit(fid, x + h * k3x, y + h * k3y, k1x, k1y)
    ok = ok1 and ok2 and ok3 and ok4
    return (x + h * (k1x + 2 * k2x + 2 * k3x + k4x) / 6.0,
            y + h * (k1y + 2 * k2y + 2 * k3y + k4y) / 6.0, k1x, k1y, ok)


@numba.njit(cache=True)
def _trace(fid, x0, y0, geom, excl_r, step_frac, buf, nbuf, stop_on):
    """Trace the leaf through (x0, y0) both ways, appending visited window
    cells (flat indices) to buf.  If ``stop_on`` (flat uint8 raster) is
    nonempty the trace ends at the first marked cell with err = -1.
    Returns (nbuf, err, ex, ey)."""
    xmin, ymin, dx, dy, nx, ny, bx0, bx1, by0, by1 = geom
    nx = int(nx)
    ny = int(ny)
    hc = min(dx, dy)
    u0, v0, ok = _unit(fid, x0, y0, 1.0, 1e-3)
    if not ok:
        return nbuf, 1, x0, y0
    for sgn in (1.0, -1.0):
        x, y = x0, y0
        px, py = sgn * u0, sgn * v0
        last = -1
        for _ in range(MAX_STEPS):
            ix = int(np.floor((x - xmin) / dx))
            iy = int(np.floor((y - ymin) / dy))
            inside = 0 <= ix < nx and 0 <= iy < ny
            if inside:
                c = iy * nx + ix
                if c != last and nbuf < buf.shape[0]:
                    buf[nbuf] = c
                    nbuf += 1
                    last = c
                    if stop_on.shape[0] and stop_on[c] == 1:
                        return nbuf, -1, x, y
                h = step_frac * hc
            else:
                h = 2.0 * hc
            x, y, px, py, ok = _rk4(fid, x, y, px, py, h)
            if excl_r > 0.0 and x * x + y * y < excl_r * excl_r:
                break
            if not ok:
                return nbuf, 1, x, y
            if x < bx0 or x > bx1 or y < by0 or y > by1:
                break
    return nbuf, 0, 0.0, 0.0


@numba.njit(cache=True)
def _excluded(geom, excl_r, ix, iy):
    if excl_r <= 0.0:
        return False
    x = geom[0] + (ix + 0.5) * geom[2]
    y = geom[1] + (iy + 0.5) * geom[3]
    return x * x + y * y < excl_r * excl_r


@numba.njit(cache=True)
def _saturate_kernel(fid, src, geom, excl_r, proxy):
    ny, nx = src.shape
    out = np.zeros((ny, nx), np.uint8)
    state = np.zeros((ny, nx), np.uint8)     # 1 in, 2 out (proxy)
    buf = np.empty(MAX_STEPS * 2, np.int64)
    flat_src = src.ravel()
    flat_out = out.ravel()
    flat_state = state.ravel()
    # push
    for c in range(nx * ny):
        if not proxy:
            break
        if flat_src[c] == 0 or flat_out[c] == 1:
            continue
        iy, ix = c // nx, c % nx
        if _excluded(geom, excl_r, ix, iy):
            continue
        x = geom[0] + (ix + 0.5) * geom[2]
        y = geom[1] + (iy + 0.5) * geom[3]
        nb, err, ex, ey = _trace(fid, x, y, geom, excl_r, 0.5, buf, 0, np.zeros(0, np.uint8))
        if err:
            return out, 1, ex, ey
        flat_out[c] = 1
        for m in range(nb):
            flat_out[buf[m]] = 1
    # pull
    for c in range(nx * ny):
        if flat_out[c] == 1 or flat_state[c] != 0:
            continue
        if flat_src[c] == 1:
            flat_out[c] = 1
            continue
        iy, ix = c // nx, c % nx
        if _excluded(geom, excl_r, ix, iy):
            continue
        x = geom[0] + (ix + 0.5) * geom[2]
        y = geom[1] + (iy + 0.5) * geom[3]
        nb, err, ex, ey = _trace(fid, x, y, geom, excl_r, 0.5, buf, 0, flat_src)
        if err == 1:
            return out, 1, ex, ey
        if err == -1:
            flat_out[c] = 1
            if proxy:
                for m in range(nb):
                    flat_out[buf[m]] = 1
        else:
            flat_state[c] = 2
            for m in range(nb):
                if flat_out[buf[m]] == 0:
                    flat_state[buf[m]] = 2
    return out, 0, 0.0, 0.0


@numba.njit(cache=True)
def _leaf_kernel(fid, x0, y0, shape, geom, excl_r):
    ny, nx = shape
    out = np.zeros((ny, nx), np.uint8)
    buf = np.empty(MAX_STEPS * 2, np.int64)
    nb, err, ex, ey = _trace(fid, x0, y0, geom, excl_r, 0.25, buf, 0, np.zeros(0, np.uint8))
    flat = out.ravel()
    for m in range(nb):
        flat[buf[m]] = 1
    # one-cell dilation
    dil = out.copy()
    for iy in range(ny):
        for ix in range(nx):
            if out[iy, ix]:
                for a in range(-1, 2):
                    for b in range(-1, 2):
                        j, i = iy + a, ix + b
                        if 0 <= j < ny and 0 <= i < nx:
                            dil[j, i] = 1
    return dil, err, ex, ey


@dataclass(frozen=True)
class FoliationPair:
    name: str
    h_field: int
    v_field: int
    window: tuple                 # (xmin, xmax, ymin, ymax)
    resolution: tuple             # (nx, ny)
    trace_box: tuple = None       # defaults to the window
    excluded_radius: float = 0.0  # disk around the origin removed from M (in cells)
    description: str = ""

    def __post_init__(self):
        xmin, xmax, ymin, ymax = self.window
        if not (xmax > xmin and ymax > ymin):
            raise ParameterError("empty window")
        nx, ny = self.resolution
        if nx < 2 or ny < 2:
            raise ParameterError("resolution must be at least 2 x 2")

    @property
    def shape(self):
        return (int(self.resolution[1]), int(self.resolution[0]))

    @property
    def cell(self):
        xmin, xmax, ymin, ymax = self.window
        return (xmax - xmin) / self.resolution[0], (ymax - ymin) / self.resolution[1]

    @property
    def excl_r(self):
        return self.excluded_radius * min(self.cell)

    def geom(self):
        xmin, xmax, ymin, ymax = self.window
        dx, dy = self.cell
        box = self.trace_box or self.window
        pad = 1e-9 * max(xmax - xmin, ymax - ymin)
        return np.array([xmin, ymin, dx, dy, self.resolution[0], self.resolution[1],
                         box[0] - pad, box[1] + pad, box[2] - pad, box[3] + pad], float)

    def centers(self):
        xmin, xmax, ymin, ymax = self.window
        dx, dy = self.cell
        xs = xmin + (np.arange(self.resolution[0]) + 0.5) * dx
        ys = ymin + (np.arange(self.resolution[1]) + 0.5) * dy
        return np.meshgrid(xs, ys)

    def valid(self):
        X, Y = self.centers()
        if self.excluded_radius > 0:
            return X ** 2 + Y ** 2 >= self.excl_r ** 2
        return np.ones(self.shape, bool)

    def with_resolution(self, nx, ny):
        return FoliationPair(self.name, self.h_field, self.v_field, self.window, (nx, ny),
                             self.trace_box, self.excluded_radius, self.description)

    def field_id(self, which):
        if which in ("H", "h", "horizontal"):
            return self.h_field
        if which in ("V", "v", "vertical"):
            return self.v_field
        raise ParameterError(f"unknown leaf field {which!r}")


def _hyperbolic(res=600, half=3.0):
    return FoliationPair("hyperbolic", _HYP_H, _HYP_V, (-half, half, -half, half), (res, res),
                         excluded_radius=0.5,
                         description="H: xy = const; V: x^2 - y^2 = const (H rotated by pi/4); origin removed")


def _secant(res=(1200, 200), xhalf=6 * np.pi, yhalf=5.0):
    return FoliationPair("secant", _SEC_H, _SEC_V, (-xhalf, xhalf, -yhalf, yhalf), tuple(res),
                         trace_box=(-xhalf - np.pi, xhalf + np.pi, -yhalf - 1.0, 80.0),
                         description="H: y = -|csc x| + c with lines x = r pi; "
                                     "V: y = -|sec x| + c with lines x = r pi + pi/2")


def _cartesian(res=200, half=1.0):
    return FoliationPair("cartesian", _CART_H, _CART_V, (-half, half, -half, half), (res, res),
                         description="H: y = const; V: x = const")


FOLIATIONS = {
    "cartesian": _cartesian,
    "hyperbolic": _hyperbolic,
    "secant": _secant,
}


def foliation(name, **kw):
    try:
        return FOLIATIONS[name](**kw)
    except KeyError:
        raise ParameterError(f"unknown foliation {name!r}; choose from {sorted(FOLIATIONS)}") from None


def _check_point(pair, p):
    p = np.asarray(p, dtype=float)
    xmin, xmax, ymin, ymax = pair.window
    if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
        raise DomainError(f"point {p.tolist()} outside the window")
    if pair.excluded_radius > 0 and np.hypot(*p) < pair.excl_r:
        raise DomainError(f"point {p.tolist()} in the excluded set")
    return p


def saturate(mask, pair, which, proxy=False):
    """Saturate a boolean raster along the H or V leaves of ``pair``.

    By default every cell is decided by the leaf through its own center.
    ``proxy=True`` also marks all cells crossed by a traced leaf, which is
    faster but lets neighbouring leaves decide thin sets."""
    mask = np.asarray(mask)
    if mask.shape != pair.shape:
        raise ParameterError(f"mask shape {mask.shape} != window raster {pair.shape}")
    out, err, ex, ey = _saturate_kernel(pair.field_id(which), mask.astype(np.uint8),
                                        pair.geom(), pair.excl_r, bool(proxy))
    if err:
        raise DegeneracyError(f"{which} direction field vanishes at ({ex:.6g}, {ey:.6g})",
                              location=(ex, ey))
    return out.astype(bool) & pair.valid()


def leaf_mask(p, pair, which):
    """Raster of the leaf through p (traced finely, dilated by one cell)."""
    p = _check_point(pair, p)
    out, err, ex, ey = _leaf_kernel(pair.field_id(which), float(p[0]), float(p[1]), pair.shape,
                                    pair.geom(), pair.excl_r)
    if err:
        raise DegeneracyError(f"{which} direction field vanishes at ({ex:.6g}, {ey:.6g})",
                              location=(ex, ey))
    return out.astype(bool) & pair.valid()


def coverage(mask, pair):
    v = pair.valid()
    return float(np.count_nonzero(mask & v) / np.count_nonzero(v))


def _chain(p, pair, first, depth):
    """Masks after 1..depth saturations, alternating from ``first``."""
    other = "V" if first == "H" else "H"
    cur = leaf_mask(p, pair, first)
    out = [cur]
    for d in range(1, depth):
        cur = saturate(cur, pair, other if d % 2 else first)
        out.append(cur)
    return out


@dataclass(eq=False)
class AttainMask:
    p: np.ndarray
    pair: FoliationPair
    masks: list                     # A^1 .. A^kmax
    coverage: list
    half_steps: list = field(default_factory=list)

    @property
    def kmax(self):
        return len(self.masks)

    def first_reached(self):
        """Raster of the first k with the cell in A^k (0 = never)."""
        out = np.zeros(self.pair.shape, np.int32)
        for k, m in enumerate(self.masks, start=1):
            out[(out == 0) & m] = k
        return out

    def nested(self):
        return all(np.all(~a | b) for a, b in zip(self.masks, self.masks[1:]))

    def growth_table(self):
        rows = []
        for k, m in enumerate(self.masks, start=1):
            X, _ = self.pair.centers()
            cols = np.any(m, axis=0)
            xs = X[0][cols]
            rows.append({"k": k, "coverage": self.coverage[k - 1],
                         "x_min": float(xs.min()) if xs.size else None,
                         "x_max": float(xs.max()) if xs.size else None})
        return rows


def attainable_sets(p, pair, kmax):
    """A^1 .. A^kmax from p (horizontal saturation first)."""
    if kmax < 1:
        raise ParameterError("kmax must be >= 1")
    chain = _chain(p, pair, "H", 2 * kmax)
    masks = chain[1::2]
    return AttainMask(np.asarray(p, float), pair, masks, [coverage(m, pair) for m in masks],
                      chain[0::2])


def attainability_index(p, pair, kmax, threshold=COVERAGE_THRESHOLD, am=None):
    """Smallest k <= kmax whose mask covers >= threshold of the window and is
    a fixed point (one more H,V round adds no cell).  Returns (k or None, am);
    None means window-unbounded within kmax."""
    am = am or attainable_sets(p, pair, kmax + 1)
    for k in range(1, min(kmax, am.kmax - 1) + 1):
        m, nxt = am.masks[k - 1], am.masks[k]
        if am.coverage[k - 1] >= threshold and not np.any(nxt & ~m):
            return k, am
    return None, am


def co_attainable(p, pair, k):
    """Intersection of the two alternating saturation orders of depth 2k."""
    a = _chain(p, pair, "H", 2 * k)[-1]
    b = _chain(p, pair, "V", 2 * k)[-1]
    return a & b


def commute_check(p, pair, k, threshold=AGREEMENT_THRESHOLD):
    """(agree, mismatch fraction) between the two saturation orders."""
    a = _chain(p, pair, "H", 2 * k)[-1]
    b = _chain(p, pair, "V", 2 * k)[-1]
    v = pair.valid()
    mis = float(np.count_nonzero((a ^ b) & v) / np.count_nonzero(v))
    return mis <= 1.0 - threshold, mis


def strip_mask(pair, lo, hi):
    X, _ = pair.centers()
    return (X >= lo) & (X <= hi)
