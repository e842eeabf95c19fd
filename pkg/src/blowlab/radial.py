"""Static objects of the radial problem.

Everything here lives on the half line y > 0 carrying the measure y^3 dy of
radial functions in four dimensions.  The module provides the log-graded grid
and its quadrature, the explicit stationary bubble Q(y) = 1/(1 + y^2/8) and
its scaling family, the linearized operator H = -Delta - 3Q^2 together with
its two explicit zero modes (Lambda Q and the growing solution Gamma), the
variation-of-parameters inverse of H, and the unique negative eigenmode.

All closed forms are evaluated directly, never by differencing another
quantity: the pair (Lambda Q, Gamma) satisfies the exact Wronskian
y^3 (Gamma (Lambda Q)' - Gamma' Lambda Q) = 1 which normalizes the inverse.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded


class StaticKind(enum.Enum):
    Q = "Q"
    LambdaQ = "LambdaQ"
    Lambda2Q = "Lambda2Q"
    V = "V"
    LambdaV = "LambdaV"
    Gamma = "Gamma"
    LambdaGamma = "LambdaGamma"


# ---------------------------------------------------------------------------
# grid and quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialGrid:
    """Log-graded grid on (0, y_max] with weights realizing int f y^3 dy.

    Nodes are uniform in t = log y.  The weights integrate the piecewise
    linear-in-t interpolant of f against the exact panel moments of e^{4t},
    so f == 1 integrates to (y_max^4 - y_min^4)/4 exactly and smooth
    integrands converge at O(h^2) under refinement.
    """

    nodes: np.ndarray
    weights: np.ndarray
    y_max: float
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        y = self.nodes
        if y.ndim != 1 or len(y) < 2:
            raise ValueError("grid needs at least two nodes")
        if y[0] <= 0 or np.any(np.diff(y) <= 0):
            raise ValueError("nodes must be strictly increasing and positive")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def y_min(self) -> float:
        return float(self.nodes[0])

    @property
    def h(self) -> float:
        """Uniform step in t = log y."""
        t = np.log(self.nodes)
        return float((t[-1] - t[0]) / (len(t) - 1))

    def function(self, values) -> "RadialFunction":
        return RadialFunction(self, np.asarray(values, dtype=float))

    def sample(self, f) -> "RadialFunction":
        return self.function(f(self.nodes))


def make_grid(y_min: float, y_max: float, n: int, grading: str = "log") -> RadialGrid:
    """Build the graded grid; density increases toward the origin."""
    if not (0 < y_min < y_max):
        raise ValueError(f"need 0 < y_min < y_max, got ({y_min}, {y_max})")
    if n < 64:
        raise ValueError(f"need n >= 64, got {n}")
    if grading != "log":
        raise ValueError(f"unknown grading policy {grading!r}")
    t = np.linspace(np.log(y_min), np.log(y_max), n)
    y = np.exp(t)
    y[0], y[-1] = y_min, y_max
    m0, m1 = _panel_moments(y)
    w = np.zeros(n)
    w[:-1] += m0 - m1
    w[1:] += m1
    return RadialGrid(nodes=y, weights=w, y_max=float(y_max))


def _panel_moments(y: np.ndarray):
    """Exact moments of e^{4t} against (1, xi) on each log panel."""
    y4 = y**4
    t = np.log(y)
    h = np.diff(t)
    a = 4.0 * h
    m0 = (y4[1:] - y4[:-1]) / 4.0
    # int_0^1 xi e^{a xi} dxi = (e^a (a-1) + 1)/a^2, stable for small a
    small = np.abs(a) < 1e-4
    g = np.empty_like(a)
    g[~small] = (np.exp(a[~small]) * (a[~small] - 1.0) + 1.0) / a[~small] ** 2
    g[small] = 0.5 + a[small] / 3.0 + a[small] ** 2 / 8.0
    m1 = y4[:-1] * h * g
    return m0, m1


@dataclass(frozen=True)
class RadialFunction:
    """Sampled radial function; arithmetic requires the identical grid."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise ValueError("values do not match grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)

    def _check(self, other: "RadialFunction"):
        if other.grid is not self.grid and not np.array_equal(
            other.grid.nodes, self.grid.nodes
        ):
            raise ValueError("operands live on different grids")

    def __add__(self, other):
        if isinstance(other, RadialFunction):
            self._check(other)
            return RadialFunction(self.grid, self.values + other.values)
        return RadialFunction(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, RadialFunction):
            self._check(other)
            return RadialFunction(self.grid, self.values - other.values)
        return RadialFunction(self.grid, self.values - other)

    def __rsub__(self, other):
        return RadialFunction(self.grid, other - self.values)

    def __mul__(self, other):
        if isinstance(other, RadialFunction):
            self._check(other)
            return RadialFunction(self.grid, self.values * other.values)
        return RadialFunction(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return RadialFunction(self.grid, -self.values)


def radial_integral(f: RadialFunction) -> float:
    """Quadrature approximation of int f y^3 dy over [y_min, y_max]."""
    return float(np.dot(f.grid.weights, f.values))


def inner(f: RadialFunction, g: RadialFunction) -> float:
    f._check(g)
    return float(np.dot(f.grid.weights, f.values * g.values))


def norm2(f: RadialFunction) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

# Gamma's constant and log coefficient at the origin, from expanding the
# global closed form: Gamma = 1/(2y^2) - (3/4) log y - 481/896 + O(y^2 log y).
GAMMA_LOG_COEFF = -0.75
GAMMA_CONST0 = -481.0 / 896.0


def q_soliton(y):
    return 1.0 / (1.0 + np.asarray(y, dtype=float) ** 2 / 8.0)


def q_prime(y):
    y = np.asarray(y, dtype=float)
    return -16.0 * y / (y**2 + 8.0) ** 2


def lambda_q(y):
    y = np.asarray(y, dtype=float)
    return 8.0 * (8.0 - y**2) / (y**2 + 8.0) ** 2


def lambda_q_prime(y):
    y = np.asarray(y, dtype=float)
    return 16.0 * y * (y**2 - 24.0) / (y**2 + 8.0) ** 3


def lambda2_q(y):
    y = np.asarray(y, dtype=float)
    return 8.0 * (y**4 - 48.0 * y**2 + 64.0) / (y**2 + 8.0) ** 3


def potential(y):
    y = np.asarray(y, dtype=float)
    return 192.0 / (y**2 + 8.0) ** 2


def lambda_potential(y):
    y = np.asarray(y, dtype=float)
    return -192.0 * (3.0 * y**2 - 8.0) / (y**2 + 8.0) ** 3


def gamma_growing(y):
    """Second zero mode of H, by its global closed form.

    The integral representation degenerates where Lambda Q vanishes
    (y = sqrt(8)); the closed form is smooth there and equals -1/4.
    """
    y = np.asarray(y, dtype=float)
    a = (y**2 - 8.0) / (y**2 + 8.0) ** 2
    bracket = y**2 / 16.0 + 6.0 * np.log(y) - 583.0 / 112.0 - 4.0 / y**2
    return a * bracket - 64.0 / (y**2 + 8.0) ** 2


def gamma_growing_prime(y):
    y = np.asarray(y, dtype=float)
    a = (y**2 - 8.0) / (y**2 + 8.0) ** 2
    da = 2.0 * y * (24.0 - y**2) / (y**2 + 8.0) ** 3
    bracket = y**2 / 16.0 + 6.0 * np.log(y) - 583.0 / 112.0 - 4.0 / y**2
    dbracket = y / 8.0 + 6.0 / y + 8.0 / y**3
    return da * bracket + a * dbracket + 256.0 * y / (y**2 + 8.0) ** 3


_STATIC_EVAL = {
    StaticKind.Q: q_soliton,
    StaticKind.LambdaQ: lambda_q,
    StaticKind.Lambda2Q: lambda2_q,
    StaticKind.V: potential,
    StaticKind.LambdaV: lambda_potential,
    StaticKind.Gamma: gamma_growing,
    StaticKind.LambdaGamma: lambda y: gamma_growing(y) + np.asarray(y, float) * gamma_growing_prime(y),
}


def eval_static(kind: StaticKind, y):
    """Closed-form value of one of the static profiles."""
    return _STATIC_EVAL[kind](y)


# ---------------------------------------------------------------------------
# cutoff
# ---------------------------------------------------------------------------


def _smoothstep(x, order: int = 0):
    """Degree-13 smoothstep on [0,1], C^6 at the joins.

    Six continuous derivatives are required for the deepest quantity built on
    the localized profiles: the H^2-weighted norm of the profile residual
    differentiates the cutoff six times, and any derivative jump at the joins
    makes that norm diverge under grid refinement.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    if order == 0:
        return x**7 * (
            1716.0
            + x * (-9009.0 + x * (20020.0 + x * (-24024.0
                  + x * (16380.0 + x * (-6006.0 + 924.0 * x)))))
        )
    inside = (x > 0.0) & (x < 1.0)
    out = np.zeros_like(x)
    xi = x[inside]
    if order == 1:
        out[inside] = 12012.0 * (xi * (1.0 - xi)) ** 6
    elif order == 2:
        out[inside] = 72072.0 * (xi * (1.0 - xi)) ** 5 * (1.0 - 2.0 * xi)
    else:
        raise ValueError("smoothstep derivative order must be 0, 1 or 2")
    return out


def cutoff(scale: float, y, order: int = 0):
    """Smooth cutoff: exactly 1 for y <= scale, exactly 0 for y >= 2*scale.

    The transition is monotone and C^6 (in particular C^2) at the joins.
    order selects the value (0) or the first/second derivative in y (1, 2).
    """
    if scale <= 0:
        raise ValueError("cutoff scale must be positive")
    x = (np.asarray(y, dtype=float) / scale - 1.0)
    if order == 0:
        return 1.0 - _smoothstep(x)
    return -_smoothstep(x, order) / scale**order


def cutoff_laplacian(scale: float, y):
    """Delta of the cutoff in 4 radial dimensions: chi'' + 3 chi'/y."""
    y = np.asarray(y, dtype=float)
    return cutoff(scale, y, 2) + 3.0 * cutoff(scale, y, 1) / y


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------


def lambda_scale(f: RadialFunction) -> RadialFunction:
    """Scaling generator Lambda f = f + y f' by differencing on the grid."""
    y = f.grid.nodes
    t = np.log(y)
    v = f.values
    ft = np.empty_like(v)
    ft[1:-1] = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
    ft[0] = (v[1] - v[0]) / (t[1] - t[0]) - 0.5 * (
        (v[2] - v[1]) / (t[2] - t[1]) - (v[1] - v[0]) / (t[1] - t[0])
    )
    ft[-1] = (v[-1] - v[-2]) / (t[-1] - t[-2]) + 0.5 * (
        (v[-1] - v[-2]) / (t[-1] - t[-2]) - (v[-2] - v[-3]) / (t[-2] - t[-3])
    )
    # y f' = df/dt
    return RadialFunction(f.grid, v + ft)


def _stencil_coeffs(grid: RadialGrid):
    """Cached interior stencil factors for the flux form of the Laplacian."""
    key = "H_stencil"
    if key not in grid.cache:
        h = grid.h
        y = grid.nodes
        ep, em = np.exp(h), np.exp(-h)
        inv = 1.0 / (y**2 * h * h)
        grid.cache[key] = (ep, em, inv)
    return grid.cache[key]


def apply_H(f: RadialFunction, potential_values: np.ndarray | None = None) -> RadialFunction:
    """Discrete H f = -(f'' + 3 f'/y) - V f.

    Interior nodes use the conservative flux stencil of -(y^3 f')'/y^3 in the
    log variable (exactly symmetric against the quadrature weights away from
    the ends).  The first node encodes radial regularity f'(0) = 0 through
    the even-extension parabola rule, the last node a one-sided stencil.
    """
    grid = f.grid
    y, v = grid.nodes, f.values
    ep, em, inv = _stencil_coeffs(grid)
    V = potential(y) if potential_values is None else potential_values
    out = np.empty_like(v)
    out[1:-1] = -inv[1:-1] * (
        ep * (v[2:] - v[1:-1]) - em * (v[1:-1] - v[:-2])
    )
    # ghost node / even extension: Delta f(y0) = 8 (f1 - f0)/(y1^2 - y0^2)
    out[0] = -8.0 * (v[1] - v[0]) / (y[1] ** 2 - y[0] ** 2)
    h = grid.h
    ftt = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    ft = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    out[-1] = -(ftt + 2.0 * ft) / y[-1] ** 2
    return RadialFunction(grid, out - V * v)


def cumulative_integral(grid: RadialGrid, integrand: np.ndarray, head: float = 0.0) -> np.ndarray:
    """Running integral int_0^{y_i} g y^3 dy with the grid's panel rule.

    head supplies the analytic contribution of (0, y_min].  The sum is
    accumulated in extended precision: the white round-off of a plain
    cumulative sum survives fourth-order differencing of the profiles it
    feeds and would dominate the H^2-weighted residual norms.
    """
    m0, m1 = grid.cache.setdefault("panel_moments", _panel_moments(grid.nodes))
    inc = (m0 - m1) * integrand[:-1] + m1 * integrand[1:]
    out = np.empty(grid.n)
    out[0] = head
    out[1:] = np.cumsum(inc.astype(np.longdouble)) + head
    return out


def _series_heads(grid: RadialGrid, f0: float):
    """Analytic (0, y_min] contributions to the two inner integrals of solve_H.

    Uses Lambda Q = 1 - 3y^2/8 + O(y^4) and
    Gamma = 1/(2y^2) + GAMMA_LOG_COEFF log y + GAMMA_CONST0 + O(y^2 log y),
    with the rhs frozen at its first-node value.
    """
    y0 = grid.y_min
    head_lq = f0 * (y0**4 / 4.0 - y0**6 / 16.0)
    head_g = f0 * (
        y0**2 / 4.0
        + GAMMA_LOG_COEFF * (y0**4 * np.log(y0) / 4.0 - y0**4 / 16.0)
        + GAMMA_CONST0 * y0**4 / 4.0
    )
    return head_lq, head_g


def solve_H(rhs: RadialFunction, c: float = 0.0, check: bool = True):
    """Solve H u = rhs by variation of parameters, smooth at the origin.

    u = Gamma int_0^y rhs LambdaQ - LambdaQ int_0^y rhs Gamma + c LambdaQ,
    with the inner integrals accumulated by the grid quadrature and an
    analytic head on (0, y_min].  Returns u; solve_H_with_derivative exposes
    u' built from the same integrals with the closed-form derivatives.
    """
    u, _ = solve_H_with_derivative(rhs, c, check=check)
    return u


def solve_H_with_derivative(rhs: RadialFunction, c: float = 0.0, check: bool = True):
    grid = rhs.grid
    y, f = grid.nodes, rhs.values
    if check:
        _reject_non_integrable(grid, f)
    lq = grid.cache.setdefault("lambda_q", lambda_q(y))
    lqp = grid.cache.setdefault("lambda_q_prime", lambda_q_prime(y))
    gm = grid.cache.setdefault("gamma", gamma_growing(y))
    gmp = grid.cache.setdefault("gamma_prime", gamma_growing_prime(y))
    head_lq, head_g = _series_heads(grid, float(f[0]))
    i1 = cumulative_integral(grid, f * lq, head=head_lq)
    i2 = cumulative_integral(grid, f * gm, head=head_g)
    u = gm * i1 - lq * i2 + c * lq
    up = gmp * i1 - lqp * i2 + c * lqp
    return RadialFunction(grid, u), RadialFunction(grid, up)


def _reject_non_integrable(grid: RadialGrid, f: np.ndarray):
    """Crude detector for rhs too singular at the origin for the Gamma integral."""
    y = grid.nodes
    fmax = float(np.max(np.abs(f)))
    if fmax == 0.0:
        return
    f0, f1 = abs(float(f[0])), abs(float(f[1]))
    if f0 * y[0] ** 2 <= 1e-12 * fmax:
        return
    if f1 > 0:
        p = np.log(f0 / f1) / np.log(y[1] / y[0])
        if p >= 1.9:
            raise ValueError(
                "rhs grows at least like y^-2 toward the origin; the inner "
                "integral against Gamma diverges under refinement"
            )


# ---------------------------------------------------------------------------
# negative eigenmode
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Eigenpair:
    zeta: float
    psi: RadialFunction


def _h_matrix_banded(grid: RadialGrid):
    """Tridiagonal H in banded storage: flux interior, zero-flux first row,
    Dirichlet last row."""
    y = grid.nodes
    n = grid.n
    h = grid.h
    ep, em = np.exp(h), np.exp(-h)
    inv = 1.0 / (y**2 * h * h)
    V = potential(y)
    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    diag[1:-1] = inv[1:-1] * (ep + em) - V[1:-1]
    upper[2:] = -inv[1:-1] * ep
    lower[:-2] = -inv[1:-1] * em
    # first cell: outgoing flux only (y^3 f' -> 0 at the origin)
    diag[0] = inv[0] * ep - V[0]
    upper[1] = -inv[0] * ep
    diag[-1] = 1.0
    lower[-2] = 0.0
    return np.vstack([upper, diag, lower])


def unstable_mode(grid: RadialGrid, shift: float = -1.0, tol: float = 1e-10,
                  max_iter: int = 400) -> Eigenpair:
    """Unique negative-eigenvalue pair of the discretized H.

    Shifted inverse iteration on the tridiagonal operator; the one isolated
    negative eigenvalue is the spectrum point closest to the shift -1, so no
    deflation is needed.  psi is normalized to int psi^2 y^3 dy = 1 with
    psi(y_min) > 0.
    """
    if "unstable_mode" in grid.cache:
        return grid.cache["unstable_mode"]
    banded = _h_matrix_banded(grid)
    n = grid.n
    w = grid.weights

    def matvec(x):
        out = banded[1] * x
        out[:-1] += banded[0][1:] * x[1:]
        out[1:] += banded[2][:-1] * x[:-1]
        return out

    x = np.exp(-grid.nodes)
    x /= np.sqrt(np.dot(w, x * x))
    mu = shift
    sigma = shift
    best = np.inf
    stale = 0
    for it in range(max_iter):
        shifted = banded.copy()
        shifted[1] -= sigma
        shifted[1, -1] = 1.0  # keep Dirichlet row intact
        try:
            x_new = solve_banded((1, 1), shifted, x)
        except np.linalg.LinAlgError:
            sigma *= 1.0 + 1e-8
            continue
        x_new[-1] = 0.0
        nrm = np.sqrt(np.dot(w, x_new * x_new))
        if not np.isfinite(nrm) or nrm == 0.0:
            raise RuntimeError("inverse iteration broke down")
        x = x_new / nrm
        ax = matvec(x)
        mu = np.dot(w, x * ax)
        res = np.sqrt(np.dot(w, (ax - mu * x) ** 2))
        if it >= 8:
            sigma = mu  # Rayleigh acceleration once locked in
        if res <= tol * max(abs(mu), 1.0):
            break
        # roundoff floor of the near-singular Rayleigh solves
        if res < best * 0.9:
            best, stale = res, 0
        else:
            stale += 1
            if stale >= 4 and res <= 1e-7 * max(abs(mu), 1.0):
                break
    else:
        raise RuntimeError("eigenmode iteration did not converge")
    if mu >= 0.0:
        raise RuntimeError(
            "no negative eigenvalue found; grid too coarse or truncated"
        )
    if x[0] < 0:
        x = -x
    psi = RadialFunction(grid, x)
    pair = Eigenpair(zeta=float(-mu), psi=psi)
    grid.cache["unstable_mode"] = pair
    return pair


def to_csv(f: RadialFunction, path):
    """Two-column debugging dump (y, value), full double precision."""
    with open(path, "w", newline="") as fh:
        fh.write("y,value\r\n")
        for y, v in zip(f.grid.nodes, f.values):
            fh.write(f"{float(y)!r},{float(v)!r}\r\n")
