"""Closed-loop simulation of plant, barrier state, estimator and actor-critic.

All continuous states are packed into one flat vector and advanced together
with fixed-step RK4.  The history stack and the learner's clamp flags are
held constant inside a step; window captures and stack admissions happen only
at step boundaries.
"""
import math
from collections import deque
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .adp import GridEvaluator, actor_deriv, bellman_error, build_grid, critic_deriv, grid_gram, make_basis, \
    upsilon_deriv
from .errors import BarrierDomainError, DegenerateGainError, IntegrationBlowupError, UnsafeStateError
from .estimator import EstimatorState, HistoryEntry, HistoryStack, capture_window, check_theorem2_gains, \
    gamma_deriv, observer_deriv, theta_deriv
from .model import barrier_row, make_maps
from .numerics import EigenTracker, is_positive_definite, rk4_step


# eigen-range sampling of Gamma and Upsilon, in logged rows; the Upsilon
# clamps use Cholesky tests at every step regardless
GAIN_MONITOR_EVERY = 10


class SafetyViolation(Exception):
    """The state reached the constraint boundary in bas-rl mode."""

    def __init__(self, t, h_value, cause=None):
        self.t = float(t)
        self.h = float(h_value) if h_value is not None else float("nan")
        super().__init__(f"safety violation at t={self.t:.6g}: h = {self.h:.6g}" + (f" ({cause})" if cause else ""))


class Layout:
    """Slices of the flat closed-loop state vector."""

    def __init__(self, n, p, L):
        self.n, self.p, self.L = n, p, L
        sizes = [("x", n), ("z", 1), ("z_hat", 1), ("theta_hat", p), ("Gamma", p * p), ("Wc", L),
                 ("Upsilon", L * L), ("Wa", L), ("int_Y", n * p), ("int_G", n)]
        self.slices = {}
        start = 0
        for name, size in sizes:
            self.slices[name] = slice(start, start + size)
            start += size
        self.size = start

    def __getitem__(self, name):
        return self.slices[name]

    def unpack(self, y):
        sl = self.slices
        p, L = self.p, self.L
        return (y[sl["x"]], y[sl["z"]][0], y[sl["z_hat"]][0], y[sl["theta_hat"]],
                y[sl["Gamma"]].reshape(p, p), y[sl["Wc"]], y[sl["Upsilon"]].reshape(L, L), y[sl["Wa"]])


class StepAux(NamedTuple):
    s: np.ndarray
    u: np.ndarray
    delta: float
    omega: np.ndarray
    rho: float
    ext: object


class ClosedLoop:
    """Everything needed to evaluate the closed-loop vector field for one scenario."""

    def __init__(self, config):
        self.config = config
        self.model = config.build_model()
        self.barrier = config.build_barrier()
        self.safe = config.safe_mode
        self.spec = self.barrier if self.safe else None
        self.basis = make_basis(config.basis)
        self.Q = np.array(config.Q, dtype=float)
        self.R = np.array(config.R, dtype=float)
        self.gains = config.gains
        model = self.model
        self.maps = make_maps(model, self.spec)
        gc = config.grid
        self.grid = build_grid(gc["count"], gc["lower"], gc["upper"], seed=gc["seed"],
                               beta0=self.spec.beta0 if self.safe else None)
        self.grid_eval = GridEvaluator(self.grid, self.basis, self.maps, self.Q, self.R)
        sc = config.stack
        self.stack = HistoryStack(p=model.p, capacity=sc["capacity"], delta=self.gains.delta,
                                  kappa=self.gains.kappa)
        self.layout = Layout(model.n, model.p, self.basis.L)
        self.freeze_growth = False
        self.freeze_shrink = False

    def initial_state(self):
        cfg, lay = self.config, self.layout
        y = np.zeros(lay.size)
        x0 = np.array(cfg.x0, dtype=float)
        y[lay["x"]] = x0
        if self.safe:
            y[lay["z"]] = self.spec.operator(self.spec.h(x0)) - self.spec.beta0
            y[lay["z_hat"]] = cfg.initial["z_hat"]
        y[lay["theta_hat"]] = cfg.initial["theta_hat"]
        y[lay["Gamma"]] = np.ravel(cfg.initial["Gamma"])
        y[lay["Wc"]] = cfg.initial["Wc"]
        y[lay["Upsilon"]] = np.ravel(cfg.initial["Upsilon"])
        y[lay["Wa"]] = cfg.initial["Wa"]
        return y

    def update_clamps(self, y):
        """Set the Upsilon bound flags from the state at a step boundary."""
        L = self.layout.L
        U = y[self.layout["Upsilon"]].reshape(L, L)
        U = 0.5 * (U + U.T)
        ub = self.config.upsilon_bounds
        self.freeze_shrink = not is_positive_definite(U - ub["floor"] * np.eye(L))
        self.freeze_growth = not is_positive_definite(ub["ceiling"] * np.eye(L) - U)

    def deriv(self, t, y):
        """Closed-loop derivative and the per-evaluation learner quantities.

        The control is computed once from the actor and shared by the plant,
        the barrier state, the observer and every learning law.
        """
        model, g = self.model, self.gains
        n = model.n
        x, z, z_hat, th, Gam, Wc, U, Wa = self.layout.unpack(y)
        if self.safe:
            s = np.append(x, z)
        else:
            s = x
        A, F, G = self.maps(s)
        be = bellman_error(self.basis, Wc, Wa, s, th, lambda _s: (A, F, G), self.Q, self.R, g.nu)
        u = be.u
        Yx, fgu = A[:n], F[:n] + G[:n] @ u
        xdot = Yx @ model.theta_true + fgu
        est = EstimatorState(th, Gam, z_hat)
        row = None
        if self.safe:
            row = barrier_row(self.spec, x, z)
            zdot = float(row @ xdot)
            zhdot = observer_deriv(est, x, z, u, model, self.spec, g.gamma, row=row, xdot_hat=Yx @ th + fgu)
        else:
            zdot = zhdot = 0.0
        thdot, phi = theta_deriv(est, self.stack, x, z, model, self.spec, g.k_theta, row=row, Yx=Yx)
        Gdot = gamma_deriv(est, self.stack, phi, g.beta_theta, g.k_theta, model.theta_bound)
        ext = self.grid_eval(th, Wc, Wa, g.nu)
        Wcdot = critic_deriv(U, be.delta, be.omega, be.rho, ext, g.k_c1, g.k_c2)
        Udot = upsilon_deriv(U, be.omega, be.rho, ext, g.beta_c, g.k_c1, g.k_c2,
                             freeze_growth=self.freeze_growth, freeze_shrink=self.freeze_shrink)
        Wadot = actor_deriv(Wa, Wc, be.omega, be.rho, be.G_sigma, ext, g.k_a1, g.k_a2, g.k_c1, g.k_c2)
        dy = np.concatenate([xdot, (zdot, zhdot), thdot, Gdot.ravel(), Wcdot, Udot.ravel(), Wadot,
                             Yx.ravel(), fgu])
        return dy, StepAux(s, u, be.delta, be.omega, be.rho, ext)

    def vector_field(self, t, y):
        try:
            return self.deriv(t, y)[0]
        except (OverflowError, DegenerateGainError):
            # float overflow or a gain that lost definiteness mid-step; reported as a non-finite stage
            return np.full_like(y, np.nan)


def closed_loop_deriv(loop, t, y):
    """Module-level alias: derivative bundle of ``loop`` at (t, y)."""
    return loop.deriv(t, y)


def column_names(n, p, L, m):
    cols = ["t"] + [f"x{i + 1}" for i in range(n)] + ["z", "zhat"] + [f"th{i + 1}" for i in range(p)]
    cols += ["theta_err"] + [f"wc{i + 1}" for i in range(L)] + [f"wa{i + 1}" for i in range(L)]
    cols += ["u"] if m == 1 else [f"u{i + 1}" for i in range(m)]
    cols += ["delta", "h", "sigmin_stack", "sigmin_grid", "J"]
    return cols


@dataclass
class TrajectoryLog:
    """Time-indexed run record; one row per logged step."""

    columns: List[str]
    data: np.ndarray
    n: int
    safe: bool

    def __len__(self):
        return len(self.data)

    def column(self, name):
        return self.data[:, self.columns.index(name)]

    def block(self, prefix):
        idx = [i for i, c in enumerate(self.columns) if c.startswith(prefix) and c[len(prefix):].isdigit()]
        return self.data[:, idx]

    @property
    def t(self):
        return self.column("t")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.data:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")

    @classmethod
    def read_csv(cls, path, safe=True):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n = sum(1 for c in header if c.startswith("x") and c[1:].isdigit())
        return cls(columns=header, data=data, n=n, safe=safe)


@dataclass
class RunResult:
    config: object
    log: TrajectoryLog
    summary: dict
    stack: HistoryStack
    admitted: List[HistoryEntry] = field(default_factory=list)
    status: str = "ok"
    error: Optional[dict] = None


def _state_vector(log, safe):
    x = log.block("x")
    if safe:
        return np.column_stack([x, log.column("z")])
    return x


def compute_metrics(log, Q, R):
    """Summary metrics from a trajectory log.

    J is a left-rectangle sum of s'Qs + u'Ru over the logged rows.  The
    ultimate-bound estimate is the largest norm of (x, z_tilde, theta_err) over
    the last 10% of rows.
    """
    if len(log) == 0:
        raise ValueError("empty trajectory log")
    t = log.t
    h = log.column("h")
    s = _state_vector(log, log.safe)
    u = log.block("u") if "u" not in log.columns else log.column("u")[:, None]
    cost = np.einsum("ki,ij,kj->k", s, Q, s) + np.einsum("ki,ij,kj->k", u, R, u)
    J = float(np.sum(np.diff(t) * cost[:-1])) if len(t) > 1 else 0.0
    if np.all(np.isnan(h)):
        min_h, argmin_t = None, None
    else:
        i = int(np.nanargmin(h))
        min_h, argmin_t = float(h[i]), float(t[i])
    tail = max(1, int(math.ceil(0.1 * len(log))))
    parts = [log.block("x")[-tail:], log.column("theta_err")[-tail:, None]]
    if log.safe:
        parts.append((log.column("z") - log.column("zhat"))[-tail:, None])
    ub = float(np.max(np.linalg.norm(np.hstack(parts), axis=1)))
    return {"min_h": min_h, "argmin_t": argmin_t, "theta_err_final": float(log.column("theta_err")[-1]),
            "J_total": J, "ultimate_bound": ub}


def _window_entry(buf, W, kappa, quadrature, model):
    if quadrature == "trapezoid":
        times = [b[0] for b in buf]
        xs = [b[1] for b in buf]
        us = [b[2] for b in buf]
        return capture_window(times, xs, us, model, kappa)
    t0, x0, IY0, IG0 = buf[0]
    t1, x1, IY1, IG1 = buf[-1]
    return HistoryEntry.from_integrals(x1 - x0, (IY1 - IY0).reshape(model.n, model.p), IG1 - IG0, kappa, t1)


def run_scenario(config):
    """Integrate one scenario and return its log, summary and final stack."""
    loop = ClosedLoop(config)
    model, spec, barrier, lay = loop.model, loop.spec, loop.barrier, loop.layout
    n, p, L, m = model.n, model.p, loop.basis.L, model.m
    dt = config.dt
    nsteps = int(round(config.duration / dt))
    W = int(round(config.stack["window"] / dt))
    C = int(round(config.stack["cadence"] / dt))
    quadrature = config.stack["quadrature"]
    kappa = config.gains.kappa
    log_every = config.log_every
    theta = model.theta_true
    Q, R = loop.Q, loop.R
    safe = loop.safe

    y = loop.initial_state()
    buf = deque(maxlen=W + 1)
    rows = []
    admitted, eig_trace = [], []
    n_candidates = 0
    stack_full_time = None
    grid_eigs, gamma_eigs, ups_eigs = EigenTracker(), EigenTracker(), EigenTracker()
    gamma_lo, gamma_hi = np.inf, -np.inf
    ups_lo, ups_hi = np.inf, -np.inf
    sigmin_grid_inf = np.inf
    wr_max = wr_grid_max = 0.0
    cone_err = 0.0
    theta_norm_max = 0.0
    incursions, inside_since = [], None
    J = 0.0
    status, error = "ok", None
    t = 0.0

    # non-finite values are caught explicitly by the stage checks
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            for k in range(nsteps + 1):
                t = k * dt
                loop.update_clamps(y)
                try:
                    dy, aux = loop.deriv(t, y)
                except (OverflowError, DegenerateGainError):
                    raise IntegrationBlowupError(t, 1) from None
                if not np.all(np.isfinite(dy)):
                    raise IntegrationBlowupError(t, 1)
                x = y[lay["x"]]
                if quadrature == "trapezoid":
                    buf.append((t, x.copy(), aux.u.copy()))
                else:
                    buf.append((t, x.copy(), y[lay["int_Y"]].copy(), y[lay["int_G"]].copy()))
                if k >= W and (k - W) % C == 0:
                    n_candidates += 1
                    decision = loop.stack.try_admit(_window_entry(buf, W, kappa, quadrature, model))
                    if decision.admitted:
                        admitted.append(loop.stack.entries[decision.slot])
                        eig_trace.append([t, decision.slot, decision.min_eig_after])
                        dy, aux = loop.deriv(t, y)
                    if stack_full_time is None and loop.stack.full:
                        stack_full_time = t

                wr_max = max(wr_max, math.sqrt(float(aux.omega @ aux.omega)) / aux.rho)
                hx = barrier.h(x) if barrier is not None else float("nan")
                if safe:
                    cone_err = max(cone_err, abs(y[lay["z"]][0] - (spec.operator(hx) - spec.beta0)))
                if barrier is not None and not safe:
                    if hx < 0.0 and inside_since is None:
                        inside_since = t
                    elif hx >= 0.0 and inside_since is not None:
                        incursions.append([inside_since, t])
                        inside_since = None

                if k % log_every == 0 or k == nsteps:
                    x_, z, z_hat, th, Gam, Wc, U, Wa = lay.unpack(y)
                    gram = grid_gram(aux.ext)
                    sg = float(grid_eigs(gram)[0])
                    sigmin_grid_inf = min(sigmin_grid_inf, sg)
                    wn = np.sqrt(np.einsum("kl,kl->k", aux.ext.omega, aux.ext.omega)) / aux.ext.rho
                    wr_grid_max = max(wr_grid_max, float(wn.max()))
                    if len(rows) % GAIN_MONITOR_EVERY == 0 or k == nsteps:
                        wg = gamma_eigs(Gam)
                        gamma_lo, gamma_hi = min(gamma_lo, wg[0]), max(gamma_hi, wg[-1])
                        wu = ups_eigs(U)
                        ups_lo, ups_hi = min(ups_lo, wu[0]), max(ups_hi, wu[-1])
                    theta_norm_max = max(theta_norm_max, math.sqrt(float(th @ th)))
                    if safe:
                        zz = (z, z_hat)
                    else:
                        zz = (float("nan"), float("nan"))
                    rows.append(np.concatenate([[t], x_, zz, th, [math.sqrt(float((th - theta) @ (th - theta)))], Wc, Wa, aux.u,
                                                [aux.delta, hx, loop.stack.min_eig, sg, J]]))
                if k == nsteps:
                    break

                s, u = aux.s, aux.u
                J += dt * float(s @ Q @ s + u @ R @ u)
                try:
                    y = rk4_step(loop.vector_field, t, y, dt, k1=dy)
                except (BarrierDomainError, UnsafeStateError) as exc:
                    raise SafetyViolation(t, barrier.h(y[lay["x"]]), str(exc)) from None
                _post_step(y, lay, model.theta_bound)
                if safe:
                    x_new = y[lay["x"]]
                    h_new = barrier.h(x_new)
                    if not h_new > 0.0 or not y[lay["z"]][0] + spec.beta0 > 0.0:
                        raise SafetyViolation(t + dt, h_new)
        except SafetyViolation as exc:
            status, error = "safety_violation", {"type": "SafetyViolation", "t": exc.t, "h": exc.h, "message": str(exc)}
        except IntegrationBlowupError as exc:
            status, error = "blowup", {"type": "IntegrationBlowup", "t": exc.t, "stage": exc.stage, "message": str(exc)}
    if inside_since is not None:
        incursions.append([inside_since, t])

    cols = column_names(n, p, L, m)
    data = np.array(rows) if rows else np.zeros((0, len(cols)))
    log = TrajectoryLog(columns=cols, data=data, n=n, safe=safe)
    summary = {"name": config.name, "mode": config.mode, "status": status, "error": error,
               "config_hash": config.digest(), "rows": len(log)}
    if len(log):
        summary.update(compute_metrics(log, Q, R))
    _, _, _, th, Gam, Wc, U, Wa = lay.unpack(y)
    gamma_bar = float(gamma_hi) if np.isfinite(gamma_hi) else float(np.max(np.linalg.eigvalsh(Gam)))
    summary.update({
        "safety_violations": 1 if status == "safety_violation" else 0,
        "incursions": {"count": len(incursions), "intervals": incursions,
                       "time_inside": float(sum(b - a for a, b in incursions))},
        "cone_error_max": cone_err if safe else None,
        "theta_hat_final": th.tolist(),
        "theta_norm_max": theta_norm_max,
        "theta_bound": model.theta_bound,
        "Wc_final": Wc.tolist(),
        "Wa_final": Wa.tolist(),
        "sigmin_grid_inf": float(sigmin_grid_inf),
        "sigmin_stack_final": float(loop.stack.min_eig),
        "stack_full_time": stack_full_time,
        "stack_candidates": n_candidates,
        "stack_admissions": len(admitted),
        "stack_eig_trace": eig_trace,
        "stack": loop.stack.snapshot(),
        "omega_rho_max": wr_max,
        "omega_rho_grid_max": wr_grid_max,
        "omega_rho_bound": 1.0 / (2.0 * math.sqrt(config.gains.nu)),
        "Gamma_eig_range": [float(gamma_lo), float(gamma_hi)],
        "Upsilon_eig_range": [float(ups_lo), float(ups_hi)],
        "theorem2_diagnostic": check_theorem2_gains(config.gains.beta_theta, config.gains.k_theta, gamma_bar,
                                                    loop.stack),
        "chi": config.chi,
    })
    if "ultimate_bound" in summary:
        summary["uub_ok"] = bool(summary["ultimate_bound"] < config.chi)
    return RunResult(config=config, log=log, summary=summary, stack=loop.stack, admitted=admitted,
                     status=status, error=error)


def _post_step(y, lay, theta_bound):
    """Re-impose symmetric gains and the parameter ball after a discrete step."""
    p, L = lay.p, lay.L
    G = y[lay["Gamma"]].reshape(p, p)
    y[lay["Gamma"]] = (0.5 * (G + G.T)).ravel()
    U = y[lay["Upsilon"]].reshape(L, L)
    y[lay["Upsilon"]] = (0.5 * (U + U.T)).ravel()
    th = y[lay["theta_hat"]]
    norm = float(np.linalg.norm(th))
    if norm > theta_bound:
        y[lay["theta_hat"]] = th * (theta_bound / norm)


def solve_scalar_are(a, b, q, r):
    """Stabilizing root of 2 a P - P^2 b^2 / r + q = 0."""
    return r * (a + math.sqrt(a * a + b * b * q / r)) / (b * b)


def run_lqr_oracle(config, tolerance=0.02):
    """Run the ADP loop on a scalar linear plant and compare with the Riccati value."""
    if config.plant["kind"] != "scalar-linear" or config.safe_mode:
        raise ValueError("the LQR oracle needs a scalar-linear plant in no-safety mode")
    a, b = config.plant["a"], config.plant["b"]
    q, r = config.Q[0][0], config.R[0][0]
    P = solve_scalar_are(a, b, q, r)
    result = run_scenario(config)
    Wc = result.summary["Wc_final"][0]
    Wa = result.summary["Wa_final"][0]
    rel_c, rel_a = abs(Wc - P) / abs(P), abs(Wa - P) / abs(P)
    return {"P_star": P, "Wc_final": Wc, "Wa_final": Wa, "err_c": abs(Wc - P), "err_a": abs(Wa - P),
            "rel_err_c": rel_c, "rel_err_a": rel_a, "tolerance": tolerance,
            "converged": bool(rel_c <= tolerance and rel_a <= tolerance), "status": result.status,
            "duration": config.duration}
