"""Actor-critic approximate dynamic programming on the learner's state space.

The value function is approximated as Wc' sigma(s) and the policy as
u = -1/2 R^-1 G(s)' grad sigma(s)' Wa.  Both weight vectors are driven by
the Bellman error evaluated on the trajectory and at a fixed set of virtual
states (Bellman-error extrapolation), which supplies excitation without
perturbing the plant.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, DimensionError


class QuadraticBasis:
    """Quadratic monomials s_i s_j: all squares first, then cyclic cross terms.

    For three coordinates this is [s1^2, s2^2, s3^2, s1 s2, s2 s3, s3 s1].
    """

    def __init__(self, dim):
        if dim < 1:
            raise ValueError("basis dimension must be positive")
        pairs = [(i, i) for i in range(dim)]
        seen = set()
        for k in range(1, dim // 2 + 1):
            for i in range(dim):
                j = (i + k) % dim
                key = frozenset((i, j))
                if key not in seen:
                    seen.add(key)
                    pairs.append((i, j))
        self.dim = dim
        self.pairs = pairs
        self.L = len(pairs)
        self._I = np.array([a for a, _ in pairs])
        self._J = np.array([b for _, b in pairs])
        self._rows = np.arange(self.L)

    @property
    def name(self):
        return f"quadratic-{self.L}"

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return s[..., self._I] * s[..., self._J]

    def grad(self, s):
        """Jacobian d sigma / d s, shape (L, dim) (or (M, L, dim) for a batch)."""
        s = np.asarray(s, dtype=float)
        if s.ndim == 1:
            D = np.zeros((self.L, self.dim))
            D[self._rows, self._I] = s[self._J]
            D[self._rows, self._J] += s[self._I]
            return D
        D = np.zeros(s.shape[:-1] + (self.L, self.dim))
        D[..., self._rows, self._I] = s[..., self._J]
        D[..., self._rows, self._J] += s[..., self._I]
        return D


BASES = {"quadratic-1": 1, "quadratic-3": 2, "quadratic-6": 3}


def make_basis(name):
    try:
        return QuadraticBasis(BASES[name])
    except KeyError:
        raise ConfigError(f"unknown basis '{name}'; expected one of {sorted(BASES)}", "basis") from None


@dataclass
class CriticState:
    W_c_hat: np.ndarray
    Upsilon: np.ndarray


@dataclass
class ActorState:
    W_a_hat: np.ndarray


@dataclass(frozen=True)
class ExtrapolationGrid:
    points: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    seed: int = 0

    @property
    def M(self):
        return len(self.points)


class BellmanTerms(NamedTuple):
    delta: float
    omega: np.ndarray
    rho: float
    u: np.ndarray
    G_sigma: np.ndarray


class ExtrapolatedTerms(NamedTuple):
    """Per-grid-point Bellman quantities, stacked along the first axis."""

    delta: np.ndarray
    omega: np.ndarray
    rho: np.ndarray
    gsig_wa: np.ndarray


def _solve_R(R, b):
    # scalar inputs dominate; skip LAPACK for the 1x1 case
    if R.shape == (1, 1):
        return b / R[0, 0]
    return np.linalg.solve(R, b)


def critic_value(basis, Wc, s):
    return float(Wc @ basis(s))


def actor_control(basis, Wa, s, G, R):
    """Policy u = -1/2 R^-1 G' grad sigma' Wa."""
    return -0.5 * _solve_R(R, G.T @ (basis.grad(s).T @ Wa))


def bellman_error(basis, Wc, Wa, s, theta_hat, maps, Q, R, nu):
    """Bellman error at one state with current weights and parameter estimate."""
    A, F, G = maps(s)
    D = basis.grad(s)
    DG = D @ G
    u = -0.5 * _solve_R(R, DG.T @ Wa)
    omega = D @ (A @ theta_hat + F + G @ u)
    s = np.asarray(s, dtype=float)
    delta = float(s @ Q @ s + u @ R @ u + Wc @ omega)
    rho = 1.0 + nu * float(omega @ omega)
    G_sigma = DG @ _solve_R(R, DG.T)
    return BellmanTerms(delta, omega, rho, u, G_sigma)


def extrapolated_bellman(grid, basis, Wc, Wa, theta_hat, maps, Q, R, nu):
    """Bellman error at every grid point, one evaluation per point."""
    return [bellman_error(basis, Wc, Wa, s_k, theta_hat, maps, Q, R, nu) for s_k in grid.points]


def stack_terms(terms):
    """Convert a list of BellmanTerms into ExtrapolatedTerms arrays."""
    return ExtrapolatedTerms(
        delta=np.array([t.delta for t in terms]),
        omega=np.array([t.omega for t in terms]),
        rho=np.array([t.rho for t in terms]),
        gsig_wa=None,
    )


class GridEvaluator:
    """Vectorized Bellman-error extrapolation over a fixed grid.

    Everything that depends only on the grid points (regressor images under
    grad sigma, the G_sigma matrices, the state cost) is computed once; each
    call then costs a handful of batched products.  Uses the identity
    G_k u_k = -1/2 G_sigma_k Wa in grad-sigma coordinates.
    """

    def __init__(self, grid, basis, maps, Q, R):
        pts = grid.points
        A, F, G = zip(*(maps(s) for s in pts))
        A, F, G = np.array(A), np.array(F), np.array(G)
        D = basis.grad(pts)
        self.M = len(pts)
        self.L = basis.L
        self.DA = D @ A
        self.DF = np.einsum("kld,kd->kl", D, F)
        self.DG = D @ G
        Rinv = np.linalg.inv(R)
        self.G_sigma = self.DG @ Rinv @ np.swapaxes(self.DG, 1, 2)
        self.sQs = np.einsum("ki,ij,kj->k", pts, Q, pts)
        p = self.DA.shape[2]
        self._DA_flat = self.DA.reshape(self.M * self.L, p)
        self._Gs_flat = self.G_sigma.reshape(self.M * self.L, self.L)

    def __call__(self, theta_hat, Wc, Wa, nu):
        gw = (self._Gs_flat @ Wa).reshape(self.M, self.L)
        omega = (self._DA_flat @ theta_hat).reshape(self.M, self.L) + self.DF - 0.5 * gw
        delta = self.sQs + 0.25 * (gw @ Wa) + omega @ Wc
        rho = 1.0 + nu * np.einsum("kl,kl->k", omega, omega)
        return ExtrapolatedTerms(delta, omega, rho, gw)


def critic_deriv(Upsilon, delta, omega, rho, ext, k_c1, k_c2):
    dW = -k_c1 * (Upsilon @ omega) * (delta / rho)
    if ext is not None and len(ext.delta):
        M = len(ext.delta)
        dW = dW - (k_c2 / M) * (Upsilon @ ((ext.delta / ext.rho) @ ext.omega))
    return dW


def grid_gram(ext):
    """(1/M) sum_k omega_k omega_k' / rho_k^2, the extrapolation excitation matrix."""
    w = ext.omega / ext.rho[:, None]
    return (w.T @ w) / len(ext.rho)


def upsilon_deriv(Upsilon, omega, rho, ext, beta_c, k_c1, k_c2, freeze_growth=False, freeze_shrink=False):
    """Recursive least-squares gain update for the critic.

    ``freeze_growth`` drops the forgetting term (used when Upsilon reaches its
    upper bound); ``freeze_shrink`` drops the regressor terms (used at the
    lower floor).
    """
    dU = np.zeros_like(Upsilon) if freeze_growth else beta_c * Upsilon
    if not freeze_shrink:
        Uw = Upsilon @ omega
        dU = dU - (k_c1 / rho**2) * np.outer(Uw, Uw)
        if ext is not None and len(ext.rho):
            dU = dU - k_c2 * (Upsilon @ grid_gram(ext) @ Upsilon)
    return 0.5 * (dU + dU.T)


def actor_deriv(Wa, Wc, omega, rho, G_sigma, ext, k_a1, k_a2, k_c1, k_c2):
    dW = -k_a1 * (Wa - Wc) - k_a2 * Wa + (k_c1 / (4.0 * rho)) * (G_sigma.T @ Wa) * float(omega @ Wc)
    if ext is not None and len(ext.rho):
        M = len(ext.rho)
        weights = (ext.omega @ Wc) / ext.rho
        # G_sigma_k is symmetric, so G_sigma_k' Wa is the cached G_sigma_k Wa
        dW = dW + (k_c2 / (4.0 * M)) * (weights @ ext.gsig_wa)
    return dW


def applied_control(basis, Wa, s, maps, R):
    """Control fed to the plant: the actor policy at the current state."""
    _, _, G = maps(s)
    return actor_control(basis, Wa, s, G, R)


def build_grid(count, lower, upper, seed=0, beta0=None):
    """Fixed extrapolation grid from a scrambled Halton sequence in a box.

    With ``beta0`` given, the last coordinate is the barrier state and only
    points with z + beta0 > 0 are kept; the sequence is continued until
    ``count`` points survive.  A single-point grid sits at the box center.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or lower.ndim != 1:
        raise DimensionError("grid bounds must be matching vectors")
    if np.any(upper < lower):
        raise ConfigError("grid upper bound below lower bound", "grid")
    if count < 1:
        raise ConfigError("grid count must be at least 1", "grid.count")

    def admissible(pts):
        if beta0 is None:
            return np.ones(len(pts), dtype=bool)
        return pts[:, -1] + beta0 > 0.0

    if count == 1:
        pts = (0.5 * (lower + upper))[None, :]
    else:
        sampler = qmc.Halton(d=lower.size, scramble=True, seed=seed)
        kept = []
        n_kept = 0
        for _ in range(20):
            batch = lower + sampler.random(count) * (upper - lower)
            batch = batch[admissible(batch)]
            kept.append(batch)
            n_kept += len(batch)
            if n_kept >= count:
                break
        pts = np.concatenate(kept)[:count]
    pts = pts[admissible(pts)]
    if len(pts) == 0:
        raise ConfigError("no extrapolation point lies in the barrier domain", "grid")
    return ExtrapolationGrid(points=pts, lower=lower, upper=upper, seed=seed)
