"""Monte Carlo harness: grids, replicate runs, moment tables, slope fits."""

from __future__ import annotations

import json

import numpy as np
import pytest

import asgd.harness as harness
from asgd.datagen import DistributionSpec
from asgd.errors import (ConfigError, InsufficientPoints, NonPositiveMoment,
                         TooManyFailures)
from asgd.estimator import StepSchedule, init_state
from asgd.harness import (ExperimentConfig, ReplicateRuns, fit_loglog_slope,
                          geometric_checkpoints, moment_table, rate_experiment,
                          run_replicates, single_run, stream_run)
from asgd.kernels import get_backend
from asgd.objectives import (CoshLogisticObjective, GeometricQuantileObjective,
                             QuadraticObjective)

from _oracles import exact_quadratic_second_moment, ols_slope

try:
    C = get_backend("c")
except ImportError:  # pragma: no cover
    C = None


def quad_cfg(**kw):
    args = dict(
        objective=QuadraticObjective(np.zeros(2)),
        spec=DistributionSpec("gaussian", 2),
        schedule=StepSchedule(1.0, 2.0 / 3.0),
        n_max=2000,
        n_replicates=8,
        checkpoints=geometric_checkpoints(2000, first=100, per_decade=12),
        seed=1,
    )
    args.update(kw)
    return ExperimentConfig(**args)


# ------------------------------------------------------------- checkpoints

def test_geometric_checkpoints_shape():
    cps = geometric_checkpoints(10 ** 5)
    assert cps[0] == 1000 and cps[-1] == 10 ** 5
    assert np.all(np.diff(cps) > 0)
    assert 24 <= cps.size <= 26  # 12 per decade over 2 decades, deduplicated
    cps = geometric_checkpoints(12345, first=100, per_decade=16)
    assert cps[0] == 100 and cps[-1] == 12345
    with pytest.raises(ConfigError):
        geometric_checkpoints(500, first=1000)
    with pytest.raises(ConfigError):
        geometric_checkpoints(1000, first=1)


# --------------------------------------------------------------- slope fit

def test_fit_recovers_exact_power_laws():
    ns = geometric_checkpoints(10 ** 5).astype(float)
    for c, rho in ((4.0, -1.0), (2.5, 0.0), (9.0, -2.0)):
        slope, se, intercept = fit_loglog_slope(ns, c * ns ** rho,
                                                burn_in_fraction=0.5)
        assert slope == pytest.approx(rho, abs=1e-12)
        assert intercept == pytest.approx(np.log(c), abs=1e-10)
        assert se <= 1e-12


def test_fit_burn_in_excludes_early_checkpoints():
    ns = geometric_checkpoints(10 ** 5).astype(float)
    moments = 4.0 / ns
    # garbage before the log-midpoint cut must not influence the fit
    moments[np.log(ns) < np.log(ns[0]) + 0.5 * (np.log(ns[-1]) - np.log(ns[0]))] = 17.0
    slope, _, intercept = fit_loglog_slope(ns, moments, burn_in_fraction=0.5)
    assert slope == pytest.approx(-1.0, abs=1e-12)
    assert intercept == pytest.approx(np.log(4.0), abs=1e-10)


def test_fit_matches_hand_ols_on_noisy_table():
    rng = np.random.default_rng(2)
    ns = geometric_checkpoints(10 ** 4, first=100).astype(float)
    moments = 3.0 * ns ** -0.8 * np.exp(0.05 * rng.standard_normal(ns.size))
    slope, se, intercept = fit_loglog_slope(ns, moments, burn_in_fraction=0.0)
    ref_slope, ref_intercept, ref_se = ols_slope(np.log(ns), np.log(moments))
    assert slope == pytest.approx(ref_slope, rel=1e-12)
    assert intercept == pytest.approx(ref_intercept, rel=1e-12)
    assert se == pytest.approx(ref_se, rel=1e-12)


def test_fit_validation():
    ns = geometric_checkpoints(10 ** 4).astype(float)
    with pytest.raises(NonPositiveMoment):
        fit_loglog_slope(ns, np.zeros(ns.size))
    with pytest.raises(NonPositiveMoment):
        fit_loglog_slope(ns, np.full(ns.size, np.nan))
    with pytest.raises(InsufficientPoints):
        fit_loglog_slope(np.array([1e3, 1e4]), np.array([1.0, 0.1]))
    with pytest.raises(InsufficientPoints):
        fit_loglog_slope(np.array([1e3]), np.array([1.0]))
    with pytest.raises(ValueError):
        fit_loglog_slope(ns, 1.0 / ns, burn_in_fraction=1.0)


# ------------------------------------------------------------ moment table

def _runs_by_hand():
    cps = np.array([10, 100], dtype=np.int64)
    z = np.zeros((2, 3, 1))
    zbar = np.zeros((2, 3, 1))
    z[0, :, 0] = [1.0, 2.0, 3.0]      # ||diff||^2 = 1, 4, 9 at n=10
    z[1, :, 0] = [1.0, 1.0, 1.0]
    zbar[0, :, 0] = [0.5, 0.5, 0.5]
    zbar[1, :, 0] = [0.25, 0.5, 1.0]
    return ReplicateRuns(cps, z, zbar, np.zeros(3, dtype=np.int64),
                         np.zeros(3, dtype=np.int64))


def test_moment_table_by_hand():
    runs = _runs_by_hand()
    tables = moment_table(runs, np.zeros(1), (1, 2))
    raw1 = tables[("raw", 1)]
    assert np.array_equal(raw1[:, 0], [10.0, 100.0])
    assert raw1[0, 1] == pytest.approx((1.0 + 4.0 + 9.0) / 3.0)
    assert raw1[0, 2] == pytest.approx(np.std([1.0, 4.0, 9.0], ddof=1) / np.sqrt(3))
    assert raw1[0, 3] == 3.0
    raw2 = tables[("raw", 2)]
    assert raw2[0, 1] == pytest.approx((1.0 + 16.0 + 81.0) / 3.0)
    avg1 = tables[("averaged", 1)]
    assert avg1[0, 1] == pytest.approx(0.25)
    # Jensen: E||.||^4 >= (E||.||^2)^2 on every row
    assert np.all(raw2[:, 1] >= raw1[:, 1] ** 2 - 1e-15)


def test_moment_table_excludes_failed_replicates_entirely():
    runs = _runs_by_hand()
    runs.fail_n[1] = 55
    tables = moment_table(runs, np.zeros(1), (1,))
    raw1 = tables[("raw", 1)]
    assert raw1[0, 3] == 2.0
    assert raw1[0, 1] == pytest.approx((1.0 + 9.0) / 2.0)
    runs.fail_n[:] = [5, 55, 7]
    with pytest.raises(TooManyFailures):
        moment_table(runs, np.zeros(1), (1,))


def test_forced_equal_replicates_have_zero_stderr():
    runs = _runs_by_hand()
    runs.z[:, :, 0] = 2.0
    tables = moment_table(runs, np.zeros(1), (1,))
    assert np.all(tables[("raw", 1)][:, 2] == 0.0)


# ------------------------------------------------------ experiment configs

def test_experiment_config_validation():
    with pytest.raises(ConfigError):
        quad_cfg(n_replicates=1)
    with pytest.raises(ConfigError):
        quad_cfg(spec=DistributionSpec("gaussian", 3))
    with pytest.raises(ConfigError):
        quad_cfg(spec=DistributionSpec("teacher_cosh", 2, teacher=[1.0, 1.0]))
    with pytest.raises(ConfigError):
        quad_cfg(objective=CoshLogisticObjective(2))  # spec is unlabeled
    with pytest.raises(ConfigError):
        quad_cfg(p_orders=(3,))
    with pytest.raises(ConfigError):
        quad_cfg(p_orders=())
    with pytest.raises(ConfigError):
        quad_cfg(checkpoints=[100, 90, 2000])
    with pytest.raises(ConfigError):
        quad_cfg(checkpoints=[100, 1000])  # 2 points over a decade
    with pytest.raises(ConfigError):
        quad_cfg(checkpoints=[100, 900, 5000])  # beyond n_max
    with pytest.raises(ConfigError):
        quad_cfg(burn_in_fraction=1.0)
    with pytest.raises(ConfigError):
        quad_cfg(clip_radius=0.0)
    cfg = quad_cfg()
    assert cfg.checkpoints[-1] == 2000


def test_labeled_experiment_accepted():
    cfg = ExperimentConfig(
        objective=CoshLogisticObjective(2),
        spec=DistributionSpec("teacher_cosh", 2, teacher=[1.0, -1.0], noise=0.1),
        schedule=StepSchedule(1.0, 0.7),
        n_max=1500,
        n_replicates=4,
        checkpoints=geometric_checkpoints(1500, first=150),
        gt_mode="empirical",
    )
    assert cfg.objective.labeled and cfg.spec.labeled


# -------------------------------------------------------------- replicates

def test_run_replicates_deterministic_and_thread_invariant(monkeypatch):
    cfg = quad_cfg(n_replicates=10)
    a = run_replicates(cfg, threads=1)
    b = run_replicates(cfg, threads=1)
    assert np.array_equal(a.z, b.z) and np.array_equal(a.zbar, b.zbar)
    monkeypatch.setattr(harness, "_MAX_CHUNK_REPLICATES", 3)
    c = run_replicates(cfg, threads=4)
    assert np.array_equal(a.z, c.z) and np.array_equal(a.zbar, c.zbar)
    assert np.array_equal(a.fail_n, c.fail_n)


@pytest.mark.skipif(C is None, reason="compiled backend not built")
def test_backends_agree_in_harness():
    cfg = quad_cfg(n_replicates=6)
    a = run_replicates(cfg, backend=get_backend("py"))
    b = run_replicates(cfg, backend=C)
    assert np.allclose(a.z, b.z, rtol=1e-12, atol=1e-14)
    assert np.allclose(a.zbar, b.zbar, rtol=1e-12, atol=1e-14)


def test_single_run_matches_replicate_row():
    cfg = quad_cfg(n_replicates=5)
    runs = run_replicates(cfg)
    for r in (0, 3):
        z, zbar = single_run(cfg, r)
        assert np.array_equal(z, runs.z[-1, r])
        assert np.array_equal(zbar, runs.zbar[-1, r])


def test_stream_run_first_sample_is_initial_iterate():
    obj = QuadraticObjective(np.zeros(2))
    spec = DistributionSpec("gaussian", 2)
    sched = StepSchedule(1.0, 0.7)
    z, zbar = stream_run(obj, spec, sched, seed=4, replicate=2, n=1)
    from asgd.datagen import SampleStream
    from asgd.streams import replicate_path
    first = SampleStream(spec, 4, replicate_path(2)).draw()
    st = init_state(obj, first)
    assert np.array_equal(z, st.z) and np.array_equal(zbar, st.zbar)
    with pytest.raises(ConfigError):
        stream_run(obj, spec, sched, seed=4, replicate=0, n=0)


def test_too_many_failures_aborts():
    cfg = quad_cfg(schedule=StepSchedule(1e8, 0.51), n_replicates=8)
    with pytest.raises(TooManyFailures):
        run_replicates(cfg)


# ---------------------------------------------------- statistical behavior

def test_quadratic_moments_match_exact_recursion():
    cfg = quad_cfg(
        n_max=1000,
        n_replicates=300,
        checkpoints=geometric_checkpoints(1000, first=100, per_decade=16),
        seed=7,
    )
    runs = run_replicates(cfg)
    tables = moment_table(runs, np.zeros(2), (1,))
    table = tables[("raw", 1)]
    exact = exact_quadratic_second_moment(1.0, 2.0 / 3.0, 1.0, 2,
                                          table[:, 0].astype(int))
    z_scores = [abs(mom - exact[int(n)]) / se for n, mom, se, _ in table]
    assert max(z_scores) < 4.0


def test_rate_experiment_quadratic_slopes_and_report():
    cfg = quad_cfg(
        n_max=20000,
        n_replicates=60,
        checkpoints=geometric_checkpoints(20000, first=1000, per_decade=16),
        p_orders=(1, 2),
        seed=3,
        config_hash="deadbeef",
    )
    rep = rate_experiment(cfg)
    raw = rep.entries[("raw", 1)]
    avg = rep.entries[("averaged", 1)]
    assert raw["target_slope"] == pytest.approx(-2.0 / 3.0)
    assert avg["target_slope"] == -1.0
    assert abs(raw["slope"] - (-2.0 / 3.0)) < 0.25
    assert abs(avg["slope"] - (-1.0)) < 0.25
    # averaging dominates the raw iterate at the final checkpoint
    assert avg["table"][-1, 1] < raw["table"][-1, 1]
    # fourth moments: Jensen row by row
    raw2 = rep.entries[("raw", 2)]["table"]
    assert np.all(raw2[:, 1] >= raw["table"][:, 1] ** 2 - 1e-15)

    csv = rep.moments_csv()
    lines = csv.strip().split("\n")
    assert lines[0] == "estimator,p,n,moment,stderr,replicates"
    assert len(lines) == 1 + 4 * cfg.checkpoints.size
    doc = json.loads(rep.to_json())
    assert set(doc["entries"]) == {"raw_p1", "raw_p2", "averaged_p1", "averaged_p2"}
    assert doc["config_hash"] == "deadbeef"
    assert doc["ground_truth"]["mode"] == "analytic"
    assert doc["failures"] == 0 and doc["n_included"] == 60


def test_gq_experiment_smoke_with_empirical_truth():
    cfg = ExperimentConfig(
        objective=GeometricQuantileObjective(2),
        spec=DistributionSpec("gaussian", 2, center=[1.0, 1.0]),
        schedule=StepSchedule(1.0, 2.0 / 3.0),
        n_max=5000,
        n_replicates=30,
        checkpoints=geometric_checkpoints(5000, first=500, per_decade=16),
        gt_mode="empirical",
        n_oracle=20000,
        seed=11,
    )
    rep = rate_experiment(cfg)
    assert rep.ground.mode == "empirical"
    assert np.linalg.norm(rep.ground.m - [1.0, 1.0]) < 0.05
    assert rep.entries[("averaged", 1)]["slope"] < -0.5
