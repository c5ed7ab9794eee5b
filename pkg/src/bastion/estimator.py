"""Barrier-state observer and integral concurrent learning (ICL) estimator.

The estimator combines an instantaneous barrier-state residual with a
history stack of integrated regressors.  Over any window of length T the
plant satisfies the incremental relation

    x(t) - x(t - T) = (int Y dtau) theta + int (f + g u) dtau,

so each stored window gives a linear regression on theta without needing
state derivatives.  Stack entries are replaced only when doing so raises the
smallest eigenvalue of the weighted regressor Gram matrix.
"""
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .errors import DegenerateGainError, DimensionError
from .model import barrier_row
from .numerics import sym_min_eig, trapezoid_accumulate

BOUNDARY_TOL = 1e-9


@dataclass
class EstimatorState:
    theta_hat: np.ndarray
    Gamma: np.ndarray
    z_hat: float = 0.0


@dataclass(frozen=True)
class HistoryEntry:
    """One integrated window: state increment, regressor and drift+input integrals."""

    X: np.ndarray
    Y: np.ndarray
    Gfu: np.ndarray
    sigma: float
    t: float

    @classmethod
    def from_integrals(cls, X, Y, Gfu, kappa, t):
        Y = np.asarray(Y, dtype=float)
        sigma = 1.0 / (1.0 + kappa * float(np.sum(Y * Y)))
        return cls(X=np.asarray(X, dtype=float), Y=Y, Gfu=np.asarray(Gfu, dtype=float),
                   sigma=sigma, t=float(t))

    @property
    def gram(self):
        return self.sigma * (self.Y.T @ self.Y)

    def residual(self, theta):
        """Incremental-relation residual X - Y theta - Gfu for a given theta."""
        return self.X - self.Y @ theta - self.Gfu

    def to_dict(self):
        return {"t": self.t, "X": self.X.tolist(), "Y": self.Y.tolist(),
                "Gfu": self.Gfu.tolist(), "sigma": self.sigma}


class Admission(NamedTuple):
    admitted: bool
    slot: Optional[int]
    min_eig_before: float
    min_eig_after: float


@dataclass
class HistoryStack:
    """Fixed-capacity history stack with minimum-eigenvalue admission."""

    p: int
    capacity: int = 20
    delta: float = 0.05
    kappa: float = 1.0
    entries: List[HistoryEntry] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("stack capacity must be at least 1")
        if not self.delta > 0:
            raise ValueError("admission margin delta must be positive")
        self._grams = [e.gram for e in self.entries]
        self._refresh()

    def _refresh(self, Sigma=None, min_eig=None):
        p = self.p
        if Sigma is None:
            Sigma = np.sum(self._grams, axis=0) if self._grams else np.zeros((p, p))
        self.Sigma_Y = Sigma
        self.min_eig = sym_min_eig(Sigma) if min_eig is None else min_eig
        b = np.zeros(p)
        for e in self.entries:
            b = b + e.sigma * (e.Y.T @ (e.X - e.Gfu))
        # sum_i sigma_i Y_i' (X_i - Gfu_i); the ICL term is k (b - Sigma_Y theta_hat)
        self.target = b

    @property
    def full(self):
        return len(self.entries) >= self.capacity

    def __len__(self):
        return len(self.entries)

    def try_admit(self, candidate):
        """Offer a candidate window; returns an Admission record.

        While the stack is filling every candidate is appended.  Once full,
        the slot whose replacement gives the largest minimum eigenvalue is
        found by exhaustive search, and the swap happens only if it beats the
        current minimum eigenvalue by the factor (1 + delta).
        """
        if candidate.Y.shape[1] != self.p:
            raise DimensionError(f"candidate regressor has {candidate.Y.shape[1]} columns, stack expects {self.p}")
        before = self.min_eig
        cand_gram = candidate.gram
        if not self.full:
            self.entries.append(candidate)
            self._grams.append(cand_gram)
            self._refresh()
            return Admission(True, len(self.entries) - 1, before, self.min_eig)
        best, best_j, best_sigma = -np.inf, None, None
        for j in range(len(self.entries)):
            trial = list(self._grams)
            trial[j] = cand_gram
            Sigma_j = np.sum(trial, axis=0)
            lam = sym_min_eig(Sigma_j)
            if lam > best:
                best, best_j, best_sigma = lam, j, Sigma_j
        if before < best / (1.0 + self.delta):
            self.entries[best_j] = candidate
            self._grams[best_j] = cand_gram
            self._refresh(best_sigma, best)
            return Admission(True, best_j, before, best)
        return Admission(False, None, before, before)

    def recomputed_sigma(self):
        """Gram matrix summed afresh from the entries (consistency checks)."""
        Sigma = np.zeros((self.p, self.p))
        for e in self.entries:
            Sigma += e.sigma * (e.Y.T @ e.Y)
        return Sigma

    def snapshot(self):
        return {"capacity": self.capacity, "size": len(self.entries), "min_eig": self.min_eig,
                "entries": [e.to_dict() for e in self.entries]}


def _on_boundary(mu, theta_bound):
    return math.sqrt(float(mu @ mu)) >= theta_bound * (1.0 - BOUNDARY_TOL)


def project(mu, v, Gamma, theta_bound):
    """Gain-aware projection keeping an estimate inside the ball ||mu|| <= theta_bound.

    Interior points pass ``v`` through.  On the boundary an outward ``v`` loses
    its Gamma-weighted normal component, so mu' * result <= 0.
    """
    mu = np.asarray(mu, dtype=float)
    v = np.asarray(v, dtype=float)
    if not _on_boundary(mu, theta_bound) or float(mu @ v) <= 0.0:
        return v
    Gmu = Gamma @ mu
    denom = float(mu @ Gmu)
    if denom <= 0.0:
        raise DegenerateGainError("mu' Gamma mu must be positive in the boundary branch")
    return v - Gmu * (float(mu @ v) / denom)


def observer_deriv(est, x, z, u, model, spec, gamma_obs, row=None, xdot_hat=None):
    """Time derivative of the barrier-state estimate z_hat.

    ``row`` (the barrier row) and ``xdot_hat`` (Y theta_hat + f + g u) may be
    passed in when the caller has already evaluated them.
    """
    if row is None:
        row = barrier_row(spec, x, z)
    if xdot_hat is None:
        xdot_hat = model.Y(x) @ est.theta_hat + model.f(x) + model.g(x) @ np.atleast_1d(u)
    return float(row @ xdot_hat) + gamma_obs * (z - est.z_hat)


def capture_window(times, xs, us, model, kappa):
    """Build a history entry from state/input samples over one window.

    The integrals of Y(x) and f(x) + g(x) u are trapezoidal over the samples.
    """
    times = np.asarray(times, dtype=float)
    xs = np.asarray(xs, dtype=float)
    us = np.asarray(us, dtype=float).reshape(len(times), model.m)
    if xs.shape != (len(times), model.n):
        raise DimensionError(f"expected states of shape ({len(times)}, {model.n}), got {xs.shape}")
    Ys = np.array([model.Y(x) for x in xs])
    Gs = np.array([model.f(x) + model.g(x) @ u for x, u in zip(xs, us)])
    Yint = trapezoid_accumulate(times, Ys)
    Gint = trapezoid_accumulate(times, Gs)
    return HistoryEntry.from_integrals(xs[-1] - xs[0], Yint, Gint, kappa, times[-1])


def theta_deriv(est, stack, x, z, model, spec, k_theta, row=None, Yx=None):
    """ICL update: returns (theta_hat_dot, phi).

    ``spec=None`` drops the barrier-state residual term, which is how the
    unconstrained baseline runs.
    """
    phi = k_theta * (stack.target - stack.Sigma_Y @ est.theta_hat)
    if spec is not None:
        if row is None:
            row = barrier_row(spec, x, z)
        if Yx is None:
            Yx = model.Y(x)
        phi = phi + (Yx.T @ row) * (z - est.z_hat)
    return project(est.theta_hat, est.Gamma @ phi, est.Gamma, model.theta_bound), phi


def gamma_deriv(est, stack, phi, beta_theta, k_theta, theta_bound):
    """Least-squares gain update; frozen while the projection is active."""
    Gamma = est.Gamma
    th = est.theta_hat
    if _on_boundary(th, theta_bound) and float((Gamma @ phi) @ th) > 0.0:
        return np.zeros_like(Gamma)
    dG = beta_theta * Gamma - k_theta * (Gamma @ stack.Sigma_Y @ Gamma)
    return 0.5 * (dG + dG.T)


def check_theorem2_gains(beta_theta, k_theta, Gamma_bar, stack):
    """Advisory check of beta_theta / (k_theta * Gamma_bar) > sigma_theta.

    sigma_theta is the stack's current minimum eigenvalue; the check only
    applies once the stack has full rank.
    """
    sigma_theta = float(stack.min_eig)
    denom = k_theta * Gamma_bar
    ratio = beta_theta / denom if denom > 0.0 else math.inf
    report = {"beta_theta": float(beta_theta), "k_theta": float(k_theta), "Gamma_bar": float(Gamma_bar),
              "sigma_theta": sigma_theta, "ratio": ratio}
    if len(stack) == 0 or not sigma_theta > 0.0:
        report.update(applicable=False, holds=None, status="not yet applicable")
    else:
        holds = ratio > sigma_theta
        report.update(applicable=True, holds=bool(holds), status="holds" if holds else "fails")
    return report
