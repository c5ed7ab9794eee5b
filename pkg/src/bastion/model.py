"""Plant model, safe set, barrier state and the safety-embedded dynamics.

The plant is control affine with a linear-in-parameters uncertainty,

    x_dot = Y(x) theta + f(x) + g(x) u,

and the safe set is the zero super-level set of a scalar constraint h. The
barrier state z = B(h(x)) - B(h(0)) is appended to x; its dynamics are the
chain rule of B(h(x(t))) written with the barrier gain Phi = B' o B^-1.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BarrierDomainError, DimensionError, UnsafeStateError


@dataclass(frozen=True)
class PlantModel:
    """Known structure (Y, f, g) plus the true parameters of a simulated plant."""

    n: int
    m: int
    p: int
    Y: Callable
    f: Callable
    g: Callable
    theta_true: np.ndarray
    theta_bound: float
    name: str = "plant"

    def __post_init__(self):
        theta = np.asarray(self.theta_true, dtype=float)
        object.__setattr__(self, "theta_true", theta)
        if theta.shape != (self.p,):
            raise DimensionError(f"theta_true must have shape ({self.p},), got {theta.shape}")
        if not self.theta_bound > 0:
            raise ValueError("theta_bound must be positive")
        if np.linalg.norm(theta) > self.theta_bound:
            raise ValueError(f"||theta_true|| = {np.linalg.norm(theta):.4g} exceeds theta_bound = {self.theta_bound}")
        x0 = np.zeros(self.n)
        Y0 = np.asarray(self.Y(x0), dtype=float)
        f0 = np.asarray(self.f(x0), dtype=float)
        g0 = np.asarray(self.g(x0), dtype=float)
        if Y0.shape != (self.n, self.p) or f0.shape != (self.n,) or g0.shape != (self.n, self.m):
            raise DimensionError("Y, f, g return shapes inconsistent with (n, m, p)")
        if np.any(Y0 != 0.0) or np.any(f0 != 0.0):
            raise ValueError("plant must satisfy f(0) = 0 and Y(0) = 0")


class ReciprocalBarrier:
    """Barrier operator B(a) = K / a on a > 0."""

    def __init__(self, K):
        if not K > 0:
            raise ValueError("barrier gain K must be positive")
        self.K = float(K)

    def __call__(self, a):
        return self.K / a

    def inverse(self, beta):
        return self.K / beta

    def derivative(self, a):
        return -self.K / (a * a)

    def gain(self, beta):
        # (dB/da) o B^-1 evaluated in closed form
        return -beta * beta / self.K

    def to_dict(self):
        return {"kind": "reciprocal", "K": self.K}


@dataclass(frozen=True)
class BarrierSpec:
    """Constraint h, its analytic gradient, and the barrier operator.

    ``beta0`` is the barrier value at the origin, so the barrier state of the
    origin is zero. The origin must lie strictly inside the safe set.
    """

    h: Callable
    grad_h: Callable
    operator: ReciprocalBarrier
    n: int
    beta0: float = field(init=False)
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        h0 = float(self.h(np.zeros(self.n)))
        if h0 <= 0.0:
            raise UnsafeStateError(h0)
        object.__setattr__(self, "beta0", float(self.operator(h0)))

    @property
    def K(self):
        return self.operator.K


@dataclass(frozen=True)
class AugState:
    """Plant state x together with the barrier state z."""

    x: np.ndarray
    z: float

    @property
    def vector(self):
        return np.append(self.x, self.z)


def disk_constraint(center, radius, K):
    """Keep-out disk: h(x) = ||x - center||^2 - radius^2 with B(a) = K / a."""
    c = np.asarray(center, dtype=float)
    n = c.size
    r2 = float(radius) ** 2

    def h(x):
        d = x - c
        return float(d @ d) - r2

    def grad_h(x):
        return 2.0 * (x - c)

    desc = {"kind": "disk", "center": c.tolist(), "radius": float(radius), "K": float(K)}
    return BarrierSpec(h=h, grad_h=grad_h, operator=ReciprocalBarrier(K), n=n, description=desc)


def case_study_plant(theta=(-1.0, -1.0, -0.5, -0.5), theta_bound=2.0):
    """Two-state obstacle-avoidance plant with four unknown parameters."""

    def Y(x):
        x1, x2 = x
        return np.array([[x1, x2, 0.0, 0.0], [0.0, 0.0, x1 + x2, x1 * x1 * x2]])

    def f(x):
        return np.zeros(2)

    def g(x):
        return np.array([[0.0], [np.cos(2.0 * x[0]) + 2.0]])

    return PlantModel(n=2, m=1, p=4, Y=Y, f=f, g=g, theta_true=np.asarray(theta, dtype=float),
                      theta_bound=theta_bound, name="case7")


def scalar_linear_plant(a=-1.0, b=1.0, theta_bound=2.0):
    """x_dot = a x + b u with the drift coefficient a treated as unknown."""

    def Y(x):
        return np.array([[x[0]]])

    def f(x):
        return np.zeros(1)

    def g(x):
        return np.array([[b]])

    return PlantModel(n=1, m=1, p=1, Y=Y, f=f, g=g, theta_true=np.array([float(a)]),
                      theta_bound=theta_bound, name="scalar-linear")


def eval_beta(spec, x):
    """Composed barrier beta(x) = B(h(x)); raises UnsafeStateError when h(x) <= 0."""
    hx = spec.h(x)
    if not hx > 0.0:
        raise UnsafeStateError(hx)
    return spec.operator(hx)


def eval_phi(spec, beta):
    """Barrier gain Phi(beta) = (dB/dh o B^-1)(beta); -beta^2/K for B = K/a."""
    if not beta > 0.0:
        raise BarrierDomainError(beta)
    return spec.operator.gain(beta)


def augment(spec, x):
    x = np.asarray(x, dtype=float)
    return AugState(x=x, z=eval_beta(spec, x) - spec.beta0)


def is_safe(spec, x):
    """Return (h(x) >= 0, h(x))."""
    hx = float(spec.h(np.asarray(x, dtype=float)))
    return hx >= 0.0, hx


def plant_deriv(model, x, u):
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (model.n,) or u.shape != (model.m,):
        raise DimensionError(f"expected x of shape ({model.n},) and u of shape ({model.m},)")
    return model.Y(x) @ model.theta_true + model.f(x) + model.g(x) @ u


def _split(s, n):
    if isinstance(s, AugState):
        return s.x, s.z
    s = np.asarray(s, dtype=float)
    if s.shape != (n + 1,):
        raise DimensionError(f"augmented state must have shape ({n + 1},), got {s.shape}")
    return s[:n], s[n]


def barrier_row(spec, x, z):
    """Phi(z + beta0) * grad h(x), the row that maps x_dot to z_dot."""
    return eval_phi(spec, z + spec.beta0) * spec.grad_h(x)


def aug_maps(model, spec, s):
    """Safety-embedded maps (A, F, G) so that s_dot = A theta + F + G u."""
    x, z = _split(s, model.n)
    row = barrier_row(spec, x, z)
    Yx = model.Y(x)
    fx = model.f(x)
    gx = model.g(x)
    n = model.n
    A = np.empty((n + 1, Yx.shape[1]))
    A[:n] = Yx
    A[n] = row @ Yx
    F = np.empty(n + 1)
    F[:n] = fx
    F[n] = row @ fx
    G = np.empty((n + 1, gx.shape[1]))
    G[:n] = gx
    G[n] = row @ gx
    return A, F, G


def make_maps(model, spec=None):
    """Callable s -> (A, F, G) for the learner's state space.

    With a barrier spec the learner works on the augmented state; without one
    it works directly on x (the unconstrained baseline).
    """
    if spec is None:
        def maps(s):
            x = np.asarray(s, dtype=float)
            return model.Y(x), model.f(x), model.g(x)
    else:
        def maps(s):
            return aug_maps(model, spec, s)
    return maps
