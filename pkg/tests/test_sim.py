import math

import numpy as np
import pytest

from bastion import ClosedLoop, TrajectoryLog, compute_metrics, load_preset, run_lqr_oracle, run_scenario
from bastion.model import aug_maps, eval_beta
from bastion.sim import column_names, solve_scalar_are

SHORT = dict(duration=2.0)


def frozen_learning(**extra):
    gains = {k: 0.0 for k in ("k_theta", "beta_theta", "k_c1", "k_c2", "k_a1", "k_a2", "beta_c")}
    cfg = load_preset("case7_bas.json", duration=1.0, gains=gains, **extra)
    z0 = ClosedLoop(cfg).initial_state()[2]
    init = dict(cfg.initial, theta_hat=[-1.0, -1.0, -0.5, -0.5], z_hat=z0)
    return cfg.replace(initial=init)


def test_zero_gains_freeze_every_learner():
    cfg = frozen_learning()
    res = run_scenario(cfg)
    assert res.status == "ok"
    log = res.log
    for prefix, init in (("th", cfg.initial["theta_hat"]), ("wc", cfg.initial["Wc"]), ("wa", cfg.initial["Wa"])):
        np.testing.assert_allclose(log.block(prefix), np.tile(init, (len(log), 1)), atol=1e-12)
    # with the true parameters in hand the observer has nothing to correct
    assert np.max(np.abs(log.column("z") - log.column("zhat"))) < 1e-12


def test_barrier_rate_agrees_with_augmented_maps():
    cfg = load_preset("case7_bas.json")
    loop = ClosedLoop(cfg)
    y = loop.initial_state()
    dy, aux = loop.deriv(0.0, y)
    A, F, G = aug_maps(loop.model, loop.barrier, y[:3])
    direct = float(A[2] @ loop.model.theta_true + F[2] + G[2] @ aux.u)
    assert abs(dy[2] - direct) < 1e-12 * max(1.0, abs(direct))


def test_barrier_rate_matches_finite_difference():
    cfg = load_preset("case7_bas.json")
    loop = ClosedLoop(cfg)
    y = loop.initial_state()
    dy, _ = loop.deriv(0.0, y)
    x, xdot = y[:2], dy[:2]
    eps = 1e-6
    fd = (eval_beta(loop.barrier, x + eps * xdot) - eval_beta(loop.barrier, x - eps * xdot)) / (2 * eps)
    assert dy[2] == pytest.approx(fd, rel=1e-6)


def test_row_count_and_decimation():
    full = run_scenario(load_preset("case7_bas.json", duration=0.5))
    assert len(full.log) == 501
    assert full.log.columns == column_names(2, 4, 6, 1)
    dec = run_scenario(load_preset("case7_bas.json", duration=0.5, log_every=10))
    assert len(dec.log) == 51
    keep = [i for i, c in enumerate(full.log.columns) if c != "sigmin_grid"]
    np.testing.assert_array_equal(dec.log.data[:, keep], full.log.data[::10, keep])
    # the warm-started eigen monitor sees a different sequence of matrices
    np.testing.assert_allclose(dec.log.column("sigmin_grid"), full.log.column("sigmin_grid")[::10], atol=1e-12)


def test_log_time_axis():
    res = run_scenario(load_preset("case7_bas.json", duration=0.5))
    np.testing.assert_allclose(res.log.t, np.arange(501) * 1e-3, atol=1e-15)


def _toy_log(rows, safe=True):
    cols = column_names(2, 4, 6, 1)
    data = np.zeros((len(rows), len(cols)))
    for i, r in enumerate(rows):
        for k, v in r.items():
            data[i, cols.index(k)] = v
    return TrajectoryLog(columns=cols, data=data, n=2, safe=safe)


def test_metrics_on_constant_log():
    log = _toy_log([{"t": 0.1 * k, "x1": 1.0, "h": 3.0 - k, "u": 0.0, "theta_err": 0.5} for k in range(3)])
    m = compute_metrics(log, np.eye(3), np.eye(1))
    # left rectangle over two intervals of a unit running cost
    assert m["J_total"] == pytest.approx(0.2)
    assert m["min_h"] == 1.0 and m["argmin_t"] == pytest.approx(0.2)
    assert m["theta_err_final"] == 0.5


def test_metrics_single_row():
    m = compute_metrics(_toy_log([{"t": 0.0, "h": 2.0}]), np.eye(3), np.eye(1))
    assert m["J_total"] == 0.0 and m["min_h"] == 2.0


def test_metrics_reject_empty_log():
    with pytest.raises(ValueError):
        compute_metrics(_toy_log([]), np.eye(3), np.eye(1))


def test_csv_round_trip(tmp_path):
    res = run_scenario(load_preset("case7_bas.json", duration=0.5))
    path = tmp_path / "t.csv"
    res.log.to_csv(path)
    back = TrajectoryLog.read_csv(path)
    assert back.columns == res.log.columns
    np.testing.assert_array_equal(back.data, res.log.data)


@pytest.mark.slow
def test_step_refinement():
    a = run_scenario(load_preset("case7_bas.json", **SHORT))
    b = run_scenario(load_preset("case7_bas.json", dt=5e-4, **SHORT))
    assert abs(a.summary["J_total"] - b.summary["J_total"]) <= 0.02 * abs(b.summary["J_total"])
    assert abs(a.summary["min_h"] - b.summary["min_h"]) <= 0.01 * abs(b.summary["min_h"])


def test_safety_violation_status():
    cfg = load_preset("case7_bas.json", x0=[1.0, 2.6], dt=0.05, duration=1.0,
                      stack={"window": 0.5, "cadence": 0.1})
    res = run_scenario(cfg)
    assert res.status == "safety_violation"
    assert res.summary["safety_violations"] == 1
    assert res.error["type"] == "SafetyViolation"


@pytest.mark.parametrize("gains", [{"k_a1": 1e4}, {"k_theta": 1e6}])
def test_blowup_status(gains):
    cfg = load_preset("lqr_oracle.json", dt=0.1, duration=5.0, stack={"window": 0.5, "cadence": 0.1},
                      gains=gains)
    res = run_scenario(cfg)
    assert res.status == "blowup"
    assert res.error["stage"] in (1, 2, 3, 4)
    assert np.all(np.isfinite(res.log.data[:, 1:]) | np.isnan(res.log.data[:, 1:]))


@pytest.mark.slow
def test_unprotected_run_logs_incursion():
    res = run_scenario(load_preset("case7_nosafety_figure.json"))
    assert res.status == "ok"
    inc = res.summary["incursions"]
    assert inc["count"] >= 1 and inc["time_inside"] > 0
    assert res.summary["min_h"] < 0


@pytest.mark.slow
def test_protected_figure_run_stays_outside():
    res = run_scenario(load_preset("case7_bas_figure.json"))
    assert res.status == "ok" and res.summary["min_h"] > 0


@pytest.mark.parametrize("a,b,q,r,expected", [
    (0.0, 1.0, 1.0, 1.0, 1.0),
    (-1.0, 1.0, 1.0, 1.0, math.sqrt(2.0) - 1.0),
    (1.0, 1.0, 1.0, 1.0, 1.0 + math.sqrt(2.0)),
])
def test_scalar_riccati_root(a, b, q, r, expected):
    P = solve_scalar_are(a, b, q, r)
    assert P == pytest.approx(expected, rel=1e-14)
    assert 2 * a * P - P * P * b * b / r + q == pytest.approx(0.0, abs=1e-14)


def test_lqr_oracle_rejects_nonlinear_plant():
    with pytest.raises(ValueError):
        run_lqr_oracle(load_preset("case7_bas.json"))


def test_lqr_oracle_record(lqr_record):
    assert lqr_record["P_star"] == pytest.approx(math.sqrt(2.0) - 1.0)
    assert lqr_record["status"] == "ok"
    assert set(lqr_record) >= {"Wc_final", "Wa_final", "rel_err_c", "rel_err_a", "converged"}


def test_summary_keys(case1):
    for key in ("min_h", "argmin_t", "theta_err_final", "J_total", "sigmin_grid_inf", "theorem2_diagnostic",
                "config_hash"):
        assert key in case1.summary
    assert case1.summary["config_hash"] == case1.config.digest()


def test_case1_ultimately_bounded(case1):
    assert case1.summary["uub_ok"]
    assert np.all(np.isfinite(case1.log.data[:, [0, 1, 2, 3, 4]]))
