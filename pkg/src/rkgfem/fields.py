"""Analytic fields with hand-derived derivatives, plus a product rule to compose them."""
from __future__ import annotations

import numpy as np

from .spaces import ScalarField2D


def _zeros(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def product(f: ScalarField2D, g: ScalarField2D, name: str = "") -> ScalarField2D:
    """f g with gradient and Hessian by the product rule."""

    def grad(x, y):
        fx, fy = f.gradient(x, y)
        gx, gy = g.gradient(x, y)
        fv, gv = f(x, y), g(x, y)
        return fv * gx + gv * fx, fv * gy + gv * fy

    def hess(x, y):
        fv, gv = f(x, y), g(x, y)
        fx, fy = f.gradient(x, y)
        gx, gy = g.gradient(x, y)
        fxx, fxy, fyy = f.hessian(x, y)
        gxx, gxy, gyy = g.hessian(x, y)
        return (fv * gxx + gv * fxx + 2 * fx * gx,
                fv * gxy + gv * fxy + fx * gy + fy * gx,
                fv * gyy + gv * fyy + 2 * fy * gy)

    has_h = f.hess is not None and g.hess is not None
    return ScalarField2D(lambda x, y: f(x, y) * g(x, y), grad, hess if has_h else None,
                         name=name or f"({f.name})*({g.name})")


def scaled(f: ScalarField2D, c: complex, name: str = "") -> ScalarField2D:
    return ScalarField2D(
        lambda x, y: c * f(x, y),
        None if f.grad is None else (lambda x, y: tuple(c * d for d in f.gradient(x, y))),
        None if f.hess is None else (lambda x, y: tuple(c * d for d in f.hessian(x, y))),
        name=name or f"{c}*{f.name}",
    )


def linear(a: complex, b: complex, c: complex = 0.0, name: str = "") -> ScalarField2D:
    """a x + b y + c."""
    return ScalarField2D(
        lambda x, y: a * x + b * y + c + 0 * (x + y),
        lambda x, y: (a + 0 * (x + y), b + 0 * (x + y)),
        lambda x, y: (_zeros(x, y), _zeros(x, y), _zeros(x, y)),
        name=name or f"{a}x+{b}y+{c}",
    )


def gaussian(a: float, b: float, amplitude: float = 1.0) -> ScalarField2D:
    """amplitude * exp(-a x^2 - b y^2)."""

    def val(x, y):
        return amplitude * np.exp(-a * x * x - b * y * y)

    return ScalarField2D(
        val,
        lambda x, y: (-2 * a * x * val(x, y), -2 * b * y * val(x, y)),
        lambda x, y: ((4 * a * a * x * x - 2 * a) * val(x, y), 4 * a * b * x * y * val(x, y),
                      (4 * b * b * y * y - 2 * b) * val(x, y)),
        name=f"exp(-{a}x^2-{b}y^2)",
    )


def lorentzian() -> ScalarField2D:
    """1 / (1 + x^2 + y^2)."""

    def q(x, y):
        return 1.0 / (1.0 + x * x + y * y)

    def hess(x, y):
        v = q(x, y)
        return -2 * v ** 2 + 8 * x * x * v ** 3, 8 * x * y * v ** 3, -2 * v ** 2 + 8 * y * y * v ** 3

    return ScalarField2D(q, lambda x, y: (-2 * x * q(x, y) ** 2, -2 * y * q(x, y) ** 2), hess, name="1/(1+r^2)")


def angular_phase(winding: int) -> ScalarField2D:
    """exp(i N theta) with theta the polar angle (theta = 0 at the origin by convention)."""
    N = winding

    def val(x, y):
        return np.exp(1j * N * np.arctan2(y, x))

    def inv_r2(x, y):
        r2 = x * x + y * y
        with np.errstate(divide="ignore"):
            return np.where(r2 > 0, 1.0 / np.where(r2 > 0, r2, 1.0), 0.0)

    def grad(x, y):
        v, k = val(x, y), inv_r2(x, y)
        return 1j * N * (-y * k) * v, 1j * N * (x * k) * v

    def hess(x, y):
        v, k = val(x, y), inv_r2(x, y)
        tx, ty = -y * k, x * k
        txx, txy, tyy = 2 * x * y * k * k, (y * y - x * x) * k * k, -2 * x * y * k * k
        iN = 1j * N
        return ((iN * txx + (iN * tx) ** 2) * v, (iN * txy + (iN * tx) * (iN * ty)) * v,
                (iN * tyy + (iN * ty) ** 2) * v)

    return ScalarField2D(val, grad, hess, name=f"exp({N}i theta)")


def harmonic_potential(scale: float = 0.5) -> ScalarField2D:
    """scale * (x^2 + y^2)."""
    return ScalarField2D(
        lambda x, y: scale * (x * x + y * y),
        lambda x, y: (2 * scale * x, 2 * scale * y),
        lambda x, y: (2 * scale + _zeros(x, y), _zeros(x, y), 2 * scale + _zeros(x, y)),
        name=f"{scale}r^2",
    )


def damped_harmonic_potential() -> ScalarField2D:
    """(x^2 + y^2)/2 * exp(-(x^2 + y^2))."""
    return ScalarField2D(lambda x, y: 0.5 * (x * x + y * y) * np.exp(-(x * x + y * y)), name="r^2/2 exp(-r^2)")


def zero_field() -> ScalarField2D:
    return ScalarField2D(
        _zeros, lambda x, y: (_zeros(x, y), _zeros(x, y)),
        lambda x, y: (_zeros(x, y), _zeros(x, y), _zeros(x, y)), name="0",
    )


# ---------------------------------------------------------------------------
# separable profiles u(x) v(y) and manufactured solutions
# ---------------------------------------------------------------------------

class Separable:
    """P(x) Q(y) from 1D value/first/second-derivative callables."""

    def __init__(self, P, Q, name=""):
        self.P, self.Q, self.name = P, Q, name

    def field(self, scale: complex = 1.0) -> ScalarField2D:
        P, Q = self.P, self.Q
        return ScalarField2D(
            lambda x, y: scale * P[0](x) * Q[0](y),
            lambda x, y: (scale * P[1](x) * Q[0](y), scale * P[0](x) * Q[1](y)),
            lambda x, y: (scale * P[2](x) * Q[0](y), scale * P[1](x) * Q[1](y), scale * P[0](x) * Q[2](y)),
            name=self.name,
        )


def sine_profile():
    k = np.pi
    return (lambda s: np.sin(k * s), lambda s: k * np.cos(k * s), lambda s: -k * k * np.sin(k * s))


def bump_profile(s_exp: float):
    """(1 - (2s - 1)^2)^p = (4 s (1 - s))^p on [0, 1]."""
    p = s_exp

    def w(s):
        return np.maximum(4.0 * s * (1.0 - s), 0.0)

    def v0(s):
        return w(s) ** p

    def v1(s):
        ws = w(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(ws > 0, p * ws ** (p - 1) * (4.0 - 8.0 * s), 0.0)

    def v2(s):
        ws = w(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(ws > 0, p * (p - 1) * ws ** (p - 2) * (4.0 - 8.0 * s) ** 2 - 8.0 * p * ws ** (p - 1), 0.0)

    return v0, v1, v2


class ManufacturedSolution:
    """Psi(x, y, t) = g(t) u(x, y) with u real and separable, g(t) = (t + 1)^3.

    ``source(x, y, t)`` is the model operator applied to Psi:
    eps^2 g'' u - g Lap u + g u / eps^2 + V g u + lam g^3 u^3
    - 2 Omega eps^2 g' D u + Omega^2 eps^2 g D^2 u, with D = x d_y - y d_x.
    """

    def __init__(self, profile: Separable, epsilon: float, lam: float, omega: float, potential: ScalarField2D):
        self.profile = profile
        self.u = profile.field()
        self.eps, self.lam, self.omega, self.V = epsilon, lam, omega, potential

    @staticmethod
    def g(t):
        return (t + 1.0) ** 3

    @staticmethod
    def dg(t):
        return 3.0 * (t + 1.0) ** 2

    @staticmethod
    def ddg(t):
        return 6.0 * (t + 1.0)

    def exact(self, t: float) -> ScalarField2D:
        return scaled(self.u, self.g(t), name=f"exact(t={t})")

    def psi0(self) -> ScalarField2D:
        return self.exact(0.0)

    def psi1(self) -> ScalarField2D:
        """eps^2 Psi_t(0)."""
        return scaled(self.u, self.eps ** 2 * self.dg(0.0), name="psi1")

    def source(self, x, y, t):
        eps, lam, Om = self.eps, self.lam, self.omega
        u = self.u(x, y).real
        ux, uy = (d.real for d in self.u.gradient(x, y))
        uxx, uxy, uyy = (d.real for d in self.u.hessian(x, y))
        g, dg, ddg = self.g(t), self.dg(t), self.ddg(t)
        Du = x * uy - y * ux
        D2u = x * x * uyy + y * y * uxx - 2 * x * y * uxy - x * ux - y * uy
        return (eps ** 2 * ddg * u - g * (uxx + uyy) + g * u / eps ** 2 + self.V(x, y).real * g * u
                + lam * g ** 3 * u ** 3 - 2 * Om * eps ** 2 * dg * Du + Om ** 2 * eps ** 2 * g * D2u) + 0j
