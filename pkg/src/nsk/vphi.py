"""Gaussian expectations ``V_phi(Sigma) = E[phi(z1) phi(z2)]``, ``z ~ N(0, Sigma)``.

``Sigma`` is a 2x2 covariance. Closed forms exist for the identity, ReLU and
erf; any activation (including tabulated user functions) can be evaluated by
two-dimensional quadrature in the Cholesky coordinates

    z1 = alpha * Z1,  z2 = beta * (gamma * Z1 + sqrt(1 - gamma^2) * Z2)

with ``alpha = sqrt(v11)``, ``beta = sqrt(v22)`` and ``gamma`` the correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import InvalidPSDError

__all__ = [
    "PSD_TOL",
    "Psd2",
    "Activation",
    "ID",
    "RELU",
    "ERF",
    "gamma",
    "v_phi",
    "v_phi_arrays",
    "v_phi_quadrature",
    "random_psd2",
]

PSD_TOL = 1e-10
# Gaussian tails beyond this many standard deviations are dropped by the
# piecewise rule; exp(-72) ~ 5e-32.
_TRUNCATION = 12.0


@dataclass(frozen=True)
class Psd2:
    """Symmetric 2x2 matrix ``[[v11, v12], [v12, v22]]`` with ``v12^2 <= v11 v22``."""

    v11: float
    v12: float
    v22: float

    def __post_init__(self):
        for name in ("v11", "v12", "v22"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not all(math.isfinite(v) for v in (self.v11, self.v12, self.v22)):
            raise InvalidPSDError(f"non-finite entries in {self}")
        if self.v11 < 0 or self.v22 < 0:
            raise InvalidPSDError(f"negative diagonal in {self}")
        if self.v12**2 > self.v11 * self.v22 + PSD_TOL:
            raise InvalidPSDError(
                f"|v12| exceeds sqrt(v11 v22) by more than tolerance in {self}"
            )

    @classmethod
    def from_matrix(cls, m) -> "Psd2":
        m = np.asarray(m, dtype=float)
        if m.shape != (2, 2) or m[0, 1] != m[1, 0]:
            raise InvalidPSDError("expected a symmetric 2x2 matrix")
        return cls(m[0, 0], m[0, 1], m[1, 1])

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.v11, self.v12], [self.v12, self.v22]])

    def swapped(self) -> "Psd2":
        return Psd2(self.v22, self.v12, self.v11)

    def in_psd2_R(self, R: float) -> bool:
        """Membership in PSD_2(R): both diagonal entries within [1/R, R]."""
        return all(1.0 / R <= v <= R for v in (self.v11, self.v22))


# ---------------------------------------------------------------------------
# Activations


def _interp_extrap(z, xs, ys):
    z = np.asarray(z, dtype=float)
    out = np.interp(z, xs, ys)
    lo, hi = z < xs[0], z > xs[-1]
    if np.any(lo):
        slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        out = np.where(lo, ys[0] + (z - xs[0]) * slope, out)
    if np.any(hi):
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        out = np.where(hi, ys[-1] + (z - xs[-1]) * slope, out)
    return out


@dataclass(frozen=True, eq=False)
class Activation:
    """An activation function.

    Use the module constants ``ID``, ``RELU``, ``ERF`` or
    :meth:`Activation.tabulated` for a user function given by samples
    (linearly interpolated inside, linearly extrapolated outside).
    """

    name: str
    xs: np.ndarray | None = field(default=None, repr=False)
    ys: np.ndarray | None = field(default=None, repr=False)

    NAMED = ("id", "relu", "erf")

    @classmethod
    def from_name(cls, name: str) -> "Activation":
        key = name.lower()
        if key not in cls.NAMED:
            raise ValueError(f"unknown activation {name!r}; choose from {cls.NAMED}")
        return {"id": ID, "relu": RELU, "erf": ERF}[key]

    @classmethod
    def tabulated(cls, xs, ys, name: str = "tabulated") -> "Activation":
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ValueError("tabulated activation needs matching 1-d samples (>= 2)")
        order = np.argsort(xs)
        xs, ys = xs[order], ys[order]
        if np.any(np.diff(xs) <= 0):
            raise ValueError("tabulated sample abscissae must be distinct")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("tabulated samples must be finite")
        xs.setflags(write=False)
        ys.setflags(write=False)
        return cls(name, xs, ys)

    @property
    def is_tabulated(self) -> bool:
        return self.xs is not None

    def __call__(self, z):
        if self.is_tabulated:
            return _interp_extrap(z, self.xs, self.ys)
        if self.name == "id":
            return np.asarray(z, dtype=float)
        if self.name == "relu":
            return np.maximum(z, 0.0)
        if self.name == "erf":
            return special.erf(z)
        raise ValueError(f"activation {self.name!r} cannot be evaluated")

    @property
    def breakpoints(self) -> tuple:
        """Points where the activation is not smooth."""
        if self.is_tabulated:
            return tuple(float(x) for x in self.xs)
        if self.name == "relu":
            return (0.0,)
        return ()

    def linear_bound(self) -> float:
        """Smallest ``M`` with ``|phi(x)| <= M (1 + |x|)`` (tabulated: exact for the
        interpolant on the whole line; named: analytic)."""
        if not self.is_tabulated:
            return 1.0
        xs, ys = self.xs, self.ys
        inside = float(np.max(np.abs(ys) / (1.0 + np.abs(xs))))
        tails = max(
            abs((ys[1] - ys[0]) / (xs[1] - xs[0])),
            abs((ys[-1] - ys[-2]) / (xs[-1] - xs[-2])),
        )
        return max(inside, tails)


ID = Activation("id")
RELU = Activation("relu")
ERF = Activation("erf")


# ---------------------------------------------------------------------------
# Closed forms


def gamma(sigma: Psd2) -> float:
    """Correlation ``v12 / sqrt(v11 v22)`` clamped to [-1, 1]."""
    prod = sigma.v11 * sigma.v22
    if prod == 0.0:
        if sigma.v12 != 0.0:
            raise InvalidPSDError("zero diagonal with non-zero off-diagonal")
        return 0.0
    return min(1.0, max(-1.0, sigma.v12 / math.sqrt(prod)))


def _gamma_arrays(v11, v12, v22):
    prod = v11 * v22
    safe = np.where(prod > 0, prod, 1.0)
    g = np.where(prod > 0, v12 / np.sqrt(safe), 0.0)
    return np.clip(g, -1.0, 1.0), prod


def v_phi_arrays(act: Activation, v11, v12, v22, nodes: int = 200):
    """Vectorised ``V_phi`` over arrays of matrix entries (no validation).

    Callers are responsible for PSD-ness; ``gamma`` is clamped to [-1, 1].
    """
    v11 = np.asarray(v11, dtype=float)
    v12 = np.asarray(v12, dtype=float)
    v22 = np.asarray(v22, dtype=float)
    if act.is_tabulated:
        b = np.broadcast_arrays(v11, v12, v22)
        out = np.empty(b[0].shape)
        for idx in np.ndindex(out.shape):
            out[idx] = _quadrature(act, b[0][idx], b[1][idx], b[2][idx], nodes)
        return out
    if act.name == "id":
        return v12 + 0.0
    if act.name == "relu":
        g, prod = _gamma_arrays(v11, v12, v22)
        # pi*g + sqrt(1-g^2) - g*arccos(g) == (pi - theta) cos(theta) + sin(theta)
        return np.sqrt(prod) / (2 * np.pi) * (
            np.pi * g + np.sqrt(1.0 - g * g) - g * np.arccos(g)
        )
    if act.name == "erf":
        ratio = v12 / np.sqrt((0.5 + v11) * (0.5 + v22))
        return (2 / np.pi) * np.arcsin(np.clip(ratio, -1.0, 1.0))
    raise ValueError(f"no V_phi for activation {act.name!r}")


def v_phi(act: Activation, sigma: Psd2, nodes: int = 200) -> float:
    """``E[phi(z1) phi(z2)]`` for ``z ~ N(0, sigma)``.

    Closed forms for ``ID``, ``RELU`` and ``ERF``; tabulated activations go
    through :func:`v_phi_quadrature` with ``nodes`` points per axis.
    """
    if not isinstance(sigma, Psd2):
        sigma = Psd2(*sigma)
    gamma(sigma)  # validates the degenerate-diagonal case
    if act.is_tabulated:
        return v_phi_quadrature(act, sigma, nodes)
    return float(v_phi_arrays(act, sigma.v11, sigma.v12, sigma.v22))


# ---------------------------------------------------------------------------
# Quadrature oracle


@lru_cache(maxsize=32)
def _hermite_rule(n):
    z, w = np.polynomial.hermite_e.hermegauss(n)
    return z, w / math.sqrt(2 * math.pi)


@lru_cache(maxsize=32)
def _legendre_rule(n):
    return np.polynomial.legendre.leggauss(n)


def _gaussian_pdf(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def _graded_edges(center, scale, panels):
    """Panel edges ``center + scale * sinh(u)`` for uniform ``u``, clipped to [-T, T].

    Panels are narrow (width ~ ``scale``) near ``center`` and widen
    geometrically into the Gaussian tails.
    """
    T = _TRUNCATION
    center = np.asarray(center, dtype=float)[..., None]
    scale = np.asarray(scale, dtype=float)[..., None]
    umax = np.arcsinh((T + np.abs(center)) / scale)
    u = np.linspace(-1.0, 1.0, panels + 1) * umax
    return np.clip(center + scale * np.sinh(u), -T, T)


def _panel_nodes(edges, q):
    """Gauss-Legendre nodes/weights on every panel ``[edges[k], edges[k+1]]``.

    ``edges`` has shape (..., P + 1); outputs have shape (..., P * q).
    Zero-width panels (duplicated edges) contribute nothing.
    """
    r, w = _legendre_rule(q)
    lo, hi = edges[..., :-1, None], edges[..., 1:, None]
    half = 0.5 * (hi - lo)
    shape = edges.shape[:-1] + (-1,)
    return (lo + half * (r + 1.0)).reshape(shape), (half * w).reshape(shape)


def _hermite(act, alpha, beta, g, c, nodes):
    z, w = _hermite_rule(nodes)
    z1, z2 = z[:, None], z[None, :]
    vals = act(alpha * z1) * act(beta * (g * z1 + c * z2))
    return float(w @ vals @ w)


def _panels(act, alpha, beta, g, c, nodes, q=8):
    T = _TRUNCATION
    bps = np.asarray(act.breakpoints, dtype=float)
    P = max(2, nodes // q)

    # Outer variable: every activation argument is centred at Z1 = 0.
    scale1 = 1.0 / max(1.0, alpha, beta * abs(g))
    kinks1 = []
    if alpha > 0:
        kinks1.append(bps / alpha)
    if beta * g != 0:
        kinks1.append(bps / (beta * g))
    edges1 = np.sort(np.concatenate([_graded_edges(0.0, scale1, P)] + [np.clip(k, -T, T) for k in kinks1]))
    z1, w1 = _panel_nodes(edges1, q)
    w1 = w1 * _gaussian_pdf(z1)

    if c == 0.0 or beta == 0.0:
        inner = act(beta * g * z1)
    else:
        # Inner variable: the Gaussian is centred at 0, the activation
        # argument at -g z1 / c; mesh both and add the kinks.
        n1 = z1.size
        half = max(1, P // 2)
        parts = [
            np.broadcast_to(_graded_edges(0.0, 1.0, half), (n1, half + 1)),
            _graded_edges(-g * z1 / c, np.full(n1, 1.0 / max(1.0, beta * c)), half),
        ]
        if bps.size:
            parts.append(np.clip((bps[None, :] / beta - g * z1[:, None]) / c, -T, T))
        edges2 = np.sort(np.concatenate(parts, axis=1), axis=1)
        z2, w2 = _panel_nodes(edges2, q)
        vals = act(beta * (g * z1[:, None] + c * z2))
        inner = np.sum(vals * w2 * _gaussian_pdf(z2), axis=1)
    return float(np.sum(w1 * act(alpha * z1) * inner))


def _quadrature(act, v11, v12, v22, nodes, rule="auto"):
    alpha, beta = math.sqrt(v11), math.sqrt(v22)
    g = gamma(Psd2(v11, v12, v22))
    c = math.sqrt(max(0.0, 1.0 - g * g))
    if rule == "auto":
        rule = "hermite" if (act.name == "id" and not act.is_tabulated) else "panels"
    if rule == "hermite":
        return _hermite(act, alpha, beta, g, c, nodes)
    if rule == "panels":
        return _panels(act, alpha, beta, g, c, nodes)
    raise ValueError(f"unknown quadrature rule {rule!r}")


def v_phi_quadrature(act: Activation, sigma: Psd2, nodes: int = 200, rule: str = "auto") -> float:
    """Quadrature estimate of ``V_phi(sigma)``, independent of the closed forms.

    Integrates ``E[phi(alpha Z1) phi(beta (gamma Z1 + sqrt(1 - gamma^2) Z2))]``
    over independent standard normals.

    Parameters
    ----------
    act : Activation
    sigma : Psd2
    nodes : int
        Approximate number of nodes per axis (>= 10).
    rule : {'auto', 'hermite', 'panels'}
        ``hermite``: ``nodes x nodes`` tensor Gauss-Hermite; exact for
        polynomial activations but slow to converge for kinks (ReLU) and for
        steep activations (erf with large variance).
        ``panels``: tensor Gauss-Legendre on [-12, 12] with sinh-graded
        panels concentrated where the activation argument crosses zero and
        extra edges at every kink.
        ``auto`` (default): ``hermite`` for the identity, ``panels`` otherwise.
    """
    if nodes < 10:
        raise ValueError("quadrature needs at least 10 nodes")
    if not isinstance(sigma, Psd2):
        sigma = Psd2(*sigma)
    return _quadrature(act, sigma.v11, sigma.v12, sigma.v22, nodes, rule)


def random_psd2(rng: np.random.Generator, R: float | None = None) -> Psd2:
    """Draw ``A A^T`` with standard normal ``A``; optionally rescale into PSD_2(R).

    With ``R`` given, the diagonal is mapped to log-uniform values in
    ``[1/R, R]`` while keeping the correlation of the draw.
    """
    a = rng.standard_normal((2, 2))
    m = a @ a.T
    if R is None:
        return Psd2.from_matrix(m)
    corr = m[0, 1] / math.sqrt(m[0, 0] * m[1, 1])
    d1, d2 = np.exp(rng.uniform(-math.log(R), math.log(R), size=2))
    return Psd2(d1, corr * math.sqrt(d1 * d2), d2)
