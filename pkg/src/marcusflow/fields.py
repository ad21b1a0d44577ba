"""
Vector fields X : R^n -> L(R^k, R^n) with Jacobians, and the fictitious-time
ODE flow used to transport Marcus jumps.

Shapes: ``evaluate`` maps states of shape (..., n) to direction matrices of
shape (..., n, k); ``jacobian`` returns the derivative tensor
dX_{ij}/dx_m with shape (..., n, k, n).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import JumpTransportError, ParameterError, ChangeOfVariablesError

__all__ = [
    "FieldSpec", "CallableField", "OdeFlowResult", "linear", "affine", "polynomial",
    "matrix_right_invariant", "catalog", "zero", "evaluate", "jacobian", "ode_flow",
    "expm", "lipschitz", "substep_count", "is_linear", "linear_generator",
    "field_to_json", "field_from_json", "CATALOG", "Diffeo", "diffeo", "DIFFEOS",
    "Pushforward", "fd_jacobian",
]

FD_STEP = 1e-6  # relative central-difference step for catalog fields
JUMP_TOL = 1e-10  # target error of one jump transport


def expm(M):
    """Matrix exponential (scaling and squaring with Pade approximant)."""
    return scipy.linalg.expm(np.asarray(M, dtype=float))


def fd_jacobian(func, x, n, step=FD_STEP):
    """Central-difference derivative tensor of ``func`` at x: (..., *out, n)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for m in range(n):
        h = step * (1.0 + np.abs(x[..., m]))
        e = np.zeros(n)
        e[m] = 1.0
        hp = h[..., None] * e
        d = (func(x + hp) - func(x - hp))
        hb = (2 * h).reshape(h.shape + (1,) * (d.ndim - h.ndim))
        cols.append(d / hb)
    return np.stack(cols, axis=-1)


# ----------------------------------------------------------------------------
# catalog of closed-form fields (n = 2, k = 1 unless noted)

def _rot(x, p):
    w = p.get("omega", 1.0)
    return np.stack([-w * x[..., 1], w * x[..., 0]], axis=-1)[..., None]


def _shear(x, p):
    s = p.get("s", 1.0)
    return np.stack([s * x[..., 1], np.zeros_like(x[..., 0])], axis=-1)[..., None]


def _pendulum(x, p):
    g = p.get("g", 1.0)
    return np.stack([x[..., 1], -g * np.sin(x[..., 0])], axis=-1)[..., None]


def _duffing(x, p):
    return np.stack([x[..., 1], x[..., 0] - x[..., 0] ** 3], axis=-1)[..., None]


def _vertical(x, p):
    a, c = p.get("a", 1.0), p.get("c", 0.5)
    return np.stack([np.zeros_like(x[..., 0]), c + a * np.sin(x[..., 1])], axis=-1)[..., None]


def _twist(x, p):
    # rotation with radius-dependent speed, preserves circles
    w = p.get("omega", 1.0) * (1.0 + 0.5 * np.tanh(x[..., 0] ** 2 + x[..., 1] ** 2 - 1.0))
    return np.stack([-w * x[..., 1], w * x[..., 0]], axis=-1)[..., None]


CATALOG = {
    "rotation": (_rot, 2, 1, "(-omega*y, omega*x)"),
    "shear": (_shear, 2, 1, "(s*y, 0)"),
    "pendulum": (_pendulum, 2, 1, "(y, -g*sin x)"),
    "duffing": (_duffing, 2, 1, "(y, x - x^3)"),
    "vertical": (_vertical, 2, 1, "(0, c + a*sin y)"),
    "twist": (_twist, 2, 1, "radius-dependent rotation"),
}


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """Immutable description of a vector field.

    kind is one of 'linear', 'affine', 'polynomial', 'matrix_right_invariant',
    'matrix_left_invariant', 'catalog'.  Linear-type fields store their
    generators as A with shape (k, n, n) and offsets b with shape (k, n).
    """
    kind: str
    n: int
    k: int
    A: np.ndarray = None
    b: np.ndarray = None
    coeffs: tuple = ()
    W: np.ndarray = None
    name: str = None
    params: dict = field(default_factory=dict)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ParameterError(f"state dimension {x.shape[-1]} != field dimension {self.n}")
        if self.A is not None:
            out = np.einsum("jab,...b->...aj", self.A, x)
            if self.b is not None:
                out = out + self.b.T
            return out
        if self.kind == "polynomial":
            c = self.coeffs
            out = np.broadcast_to(c[0], x.shape[:-1] + c[0].shape).copy()
            if len(c) > 1 and c[1] is not None:
                out += np.einsum("ajb,...b->...aj", c[1], x)
            if len(c) > 2 and c[2] is not None:
                out += np.einsum("ajbc,...b,...c->...aj", c[2], x, x)
            if len(c) > 3 and c[3] is not None:
                out += np.einsum("ajbcd,...b,...c,...d->...aj", c[3], x, x, x)
            return out
        if self.kind == "catalog":
            return CATALOG[self.name][0](x, self.params)
        raise ParameterError(f"unknown field kind {self.kind!r}")

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        if self.A is not None:
            J = np.transpose(self.A, (1, 0, 2))
            return np.broadcast_to(J, lead + J.shape).copy()
        if self.kind == "polynomial":
            c = self.coeffs
            out = np.zeros(lead + (self.n, self.k, self.n))
            if len(c) > 1 and c[1] is not None:
                out += c[1]
            if len(c) > 2 and c[2] is not None:
                out += np.einsum("ajmc,...c->...ajm", c[2], x)
                out += np.einsum("ajbm,...b->...ajm", c[2], x)
            if len(c) > 3 and c[3] is not None:
                out += np.einsum("ajmcd,...c,...d->...ajm", c[3], x, x)
                out += np.einsum("ajbmd,...b,...d->...ajm", c[3], x, x)
                out += np.einsum("ajbcm,...b,...c->...ajm", c[3], x, x)
            return out
        return fd_jacobian(self.evaluate, x, self.n)

    def lipschitz(self, x):
        if self.A is not None:
            return float(max(np.linalg.norm(a, 2) for a in self.A))
        J = self.jacobian(x)
        return float(np.max(np.linalg.norm(J.reshape(J.shape[:-3] + (-1,)), axis=-1)))


class CallableField:
    """Internal field defined by Python callables (used for matrix-valued
    constituent systems; not serializable)."""

    kind = "callable"

    def __init__(self, n, k, func, jac=None, name="callable", lip=None):
        self.n, self.k, self.func, self.jac, self.name = n, k, func, jac, name
        self._lip = lip
        self.A = None

    def evaluate(self, x):
        return self.func(np.asarray(x, dtype=float))

    def jacobian(self, x):
        if self.jac is not None:
            return self.jac(np.asarray(x, dtype=float))
        return fd_jacobian(self.evaluate, x, self.n)

    def lipschitz(self, x):
        if self._lip is not None:
            return float(self._lip(np.asarray(x, dtype=float)))
        J = self.jacobian(x)
        return float(np.max(np.linalg.norm(J.reshape(J.shape[:-3] + (-1,)), axis=-1)))


def _as_generators(A, k=None):
    A = np.asarray(A, dtype=float)
    if A.ndim == 2:
        A = A[None]
    if A.ndim != 3 or A.shape[1] != A.shape[2]:
        raise ParameterError(f"generator must be (n, n) or (k, n, n), got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ParameterError("generator entries must be finite")
    return A


def linear(A):
    """Linear field x -> A x (one column per generator in a (k, n, n) stack)."""
    A = _as_generators(A)
    return FieldSpec("linear", A.shape[1], A.shape[0], A=A)


def affine(A, b):
    A = _as_generators(A)
    b = np.asarray(b, dtype=float).reshape(A.shape[0], A.shape[1])
    return FieldSpec("affine", A.shape[1], A.shape[0], A=A, b=b)


def polynomial(c0, c1=None, c2=None, c3=None):
    """Polynomial field with coefficient tensors c0 (n,k), c1 (n,k,n),
    c2 (n,k,n,n), c3 (n,k,n,n,n).  Intended for bounded windows only."""
    c0 = np.asarray(c0, dtype=float)
    if c0.ndim != 2:
        raise ParameterError("c0 must have shape (n, k)")
    n, k = c0.shape
    cs = [c0]
    for deg, c in enumerate((c1, c2, c3), start=1):
        if c is None:
            cs.append(None)
            continue
        c = np.asarray(c, dtype=float)
        if c.shape != (n, k) + (n,) * deg:
            raise ParameterError(f"degree-{deg} coefficients must have shape {(n, k) + (n,) * deg}")
        if not np.all(np.isfinite(c)):
            raise ParameterError("polynomial coefficients must be finite")
        cs.append(c)
    return FieldSpec("polynomial", n, k, coeffs=tuple(cs))


def matrix_right_invariant(W, side="right"):
    """Field on m x m matrices (flattened row-major): g -> W g ('right',
    right-invariant) or g -> g W ('left')."""
    W = np.asarray(W, dtype=float)
    m = W.shape[0]
    eye = np.eye(m)
    A = np.kron(W, eye) if side == "right" else np.kron(eye, W.T)
    kind = "matrix_right_invariant" if side == "right" else "matrix_left_invariant"
    return FieldSpec(kind, m * m, 1, A=A[None], W=W, params={"m": m, "side": side})


def catalog(name, **params):
    if name not in CATALOG:
        raise ParameterError(f"unknown catalog field {name!r}; known: {sorted(CATALOG)}")
    _, n, k, _ = CATALOG[name]
    return FieldSpec("catalog", n, k, name=name, params=dict(params))


def zero(n, k=1):
    return affine(np.zeros((k, n, n)), np.zeros((k, n)))


def is_linear(f):
    return getattr(f, "A", None) is not None and getattr(f, "b", None) is None


def is_zero(f):
    return (getattr(f, "A", None) is not None and not np.any(f.A)
            and (getattr(f, "b", None) is None or not np.any(f.b)))


def linear_generator(f, scale=None):
    """Augmented generator of a linear/affine field: (n, n) for linear,
    (n+1, n+1) for affine.  With ``scale`` the columns are combined."""
    A = f.A
    s = np.ones(f.k) if scale is None else np.asarray(scale, dtype=float)
    M = np.tensordot(s, A, axes=1)
    if f.b is None:
        return M
    out = np.zeros((f.n + 1, f.n + 1))
    out[:f.n, :f.n] = M
    out[:f.n, f.n] = s @ f.b
    return out


def evaluate(f, x):
    return f.evaluate(x)


def jacobian(f, x):
    return f.jacobian(x)


def lipschitz(f, x):
    return f.lipschitz(x)


@dataclass(frozen=True, eq=False)
class OdeFlowResult:
    endpoint: np.ndarray
    samples: np.ndarray
    substeps: int


def substep_count(a, tol=JUMP_TOL):
    """RK4 substeps for a jump of strength a = |dZ| * Lip.  At least 16 and
    at least 8a; raised further so the global RK4 error estimate
    a (a/N)^4 / 120 stays below ``tol``.  Always even (Simpson quadrature)."""
    n = max(16, int(np.ceil(8.0 * a)))
    if a > 0:
        n = max(n, int(np.ceil(a * (a / (120.0 * tol)) ** 0.25)))
    return n + (n % 2)


def ode_flow(f, scale, x0, substeps=None, tol=JUMP_TOL, keep_samples=True):
    """Solve du/ds = X(u) . scale on s in [0, 1] from u(0) = x0 with RK4."""
    scale = np.atleast_1d(np.asarray(scale, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    if scale.shape != (f.k,):
        raise ParameterError(f"jump size must have shape ({f.k},)")
    if not np.any(scale):
        return OdeFlowResult(x0.copy(), np.stack([x0, x0]), 1)
    if substeps is None:
        a = float(np.linalg.norm(scale)) * f.lipschitz(x0)
        substeps = substep_count(a, tol)
    elif substeps < 1:
        raise ParameterError("substeps must be >= 1")
    h = 1.0 / substeps

    def rhs(u):
        return f.evaluate(u) @ scale

    u = x0.copy()
    samples = [u] if keep_samples else None
    for _ in range(substeps):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * h * k1)
        k3 = rhs(u + 0.5 * h * k2)
        k4 = rhs(u + h * k3)
        u = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise JumpTransportError(f"non-finite state while transporting jump {scale.tolist()}",
                                     jump=scale, state=x0)
        if keep_samples:
            samples.append(u)
    samples = np.stack(samples) if keep_samples else np.stack([x0, u])
    return OdeFlowResult(u, samples, substeps)


# ----------------------------------------------------------------------------
# serialization

def field_to_json(f):
    d = {"kind": f.kind, "n": f.n, "k": f.k}
    if f.kind in ("linear", "affine"):
        d["A"] = f.A.tolist()
        if f.b is not None:
            d["b"] = f.b.tolist()
    elif f.kind == "polynomial":
        d["coeffs"] = [None if c is None else c.tolist() for c in f.coeffs]
    elif f.kind.startswith("matrix_"):
        d["W"] = f.W.tolist()
        d["side"] = f.params["side"]
    elif f.kind == "catalog":
        d["name"] = f.name
        d["params"] = f.params
    return d


def field_from_json(d):
    kind = d.get("kind")
    if kind == "linear":
        return linear(d["A"])
    if kind == "affine":
        return affine(d["A"], d["b"])
    if kind == "polynomial":
        return polynomial(*d["coeffs"])
    if kind in ("matrix_right_invariant", "matrix_left_invariant"):
        return matrix_right_invariant(d["W"], d.get("side", "right"))
    if kind == "catalog":
        return catalog(d["name"], **d.get("params", {}))
    raise ParameterError(f"unknown field kind {kind!r}")


# ----------------------------------------------------------------------------
# diffeomorphisms for change-of-variables checks

class Diffeo:
    """Catalog diffeomorphism of R^n with analytic Jacobian and Newton inverse."""

    def __init__(self, name, n, fwd, jac, params):
        self.name, self.n, self._fwd, self._jac, self.params = name, n, fwd, jac, params

    def __call__(self, x):
        return self._fwd(np.asarray(x, dtype=float))

    def jacobian(self, x):
        return self._jac(np.asarray(x, dtype=float))

    def inverse(self, y, x_guess=None, tol=1e-13, maxiter=50):
        y = np.asarray(y, dtype=float)
        x = y.copy() if x_guess is None else np.array(x_guess, dtype=float)
        for _ in range(maxiter):
            r = self(x) - y
            if np.max(np.abs(r)) <= tol * (1.0 + np.max(np.abs(y))):
                return x
            J = self.jacobian(x)
            det = np.linalg.det(J)
            if np.any(np.abs(det) < 1e-14):
                raise ChangeOfVariablesError("diffeomorphism Jacobian is singular", location=x)
            x = x - np.linalg.solve(J, r[..., None])[..., 0]
        r = self(x) - y
        if np.max(np.abs(r)) > 1e-9 * (1.0 + np.max(np.abs(y))):
            raise ChangeOfVariablesError("inverse did not converge", location=y)
        return x


def diffeo(name, n=2, **params):
    if name == "identity":
        return Diffeo(name, n, lambda x: x.copy(),
                      lambda x: np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy(), params)
    if name == "affine":
        M = np.asarray(params["M"], dtype=float)
        c = np.asarray(params.get("c", np.zeros(n)), dtype=float)
        if abs(np.linalg.det(M)) < 1e-12:
            raise ParameterError("affine diffeomorphism needs invertible M")
        return Diffeo(name, n, lambda x: x @ M.T + c,
                      lambda x: np.broadcast_to(M, x.shape[:-1] + (n, n)).copy(), params)
    if name == "cubic":
        a = float(params.get("a", 0.1))
        if a < 0:
            raise ParameterError("cubic-plus-identity needs a >= 0 to be invertible")

        def jac(x):
            d = 1.0 + 3.0 * a * x ** 2
            return d[..., :, None] * np.eye(n)
        return Diffeo(name, n, lambda x: x + a * x ** 3, jac, params)
    raise ParameterError(f"unknown diffeomorphism {name!r}")


DIFFEOS = {"identity": "x", "affine": "M x + c", "cubic": "x + a x^3 componentwise"}


class Pushforward:
    """Field y -> f'(f^-1 y) X(f^-1 y)."""

    kind = "pushforward"
    A = None
    b = None

    def __init__(self, f, X):
        self.f, self.X, self.n, self.k = f, X, X.n, X.k

    def evaluate(self, y):
        x = self.f.inverse(y)
        return self.f.jacobian(x) @ self.X.evaluate(x)

    def jacobian(self, y):
        return fd_jacobian(self.evaluate, y, self.n)

    def lipschitz(self, y):
        J = self.jacobian(y)
        return float(np.max(np.linalg.norm(J.reshape(J.shape[:-3] + (-1,)), axis=-1)))
