"""Tests for experiment configuration, replication, aggregation and scaling fits."""

import csv
import math

import numpy as np
import pytest

from vclbandit.core import RandomInstance, mix_seed, simulate
from vclbandit.errors import ConfigError, ConstructionError
from vclbandit.harness import (
    CSV_HEADER,
    ExperimentConfig,
    aggregate,
    build_instance,
    default_checkpoints,
    fit_scaling_exponent,
    lowerbound_eval,
    read_csv,
    rows_to_csv,
    run_experiment,
    sweep,
)
from vclbandit.adversarial import margin_floor
from vclbandit.policies import make_policy


def _cfg(**over):
    base = {"policy": "random",
            "instance": {"kind": "random", "d": 3, "n": 4, "T": 100, "theta_seed": 1},
            "replications": 3, "base_seed": 11}
    base.update(over)
    return base


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig.from_dict(_cfg())
        assert cfg.checkpoints is None and cfg.output_path is None

    @pytest.mark.parametrize("raw", [
        _cfg(colour="red"),
        _cfg(instance={"kind": "random", "d": 3, "n": 4, "T": 100, "theta_seed": 1, "x": 1}),
        _cfg(policy="thompson"),
        _cfg(replications=0),
        _cfg(checkpoints=[10, 5]),
        _cfg(checkpoints=[10, 200]),
        _cfg(instance={"kind": "random", "d": 3, "T": 100, "theta_seed": 1}),
        _cfg(instance={"kind": "cube", "T": 10}),
        _cfg(instance={"kind": "adversarial_d2", "T": 100, "u": "all"}),
        _cfg(instance={"kind": "adversarial_d2", "T": 100, "u": 0, "eps": 0}),
        _cfg(base_seed=1.5),
    ])
    def test_rejects(self, raw):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_checkpoints_default(self):
        assert default_checkpoints(10) == [1, 2, 4, 8, 10]
        assert default_checkpoints(8) == [1, 2, 4, 8]
        assert default_checkpoints(1) == [1]

    def test_json_roundtrip(self, tmp_path):
        import json
        p = tmp_path / "c.json"
        p.write_text(json.dumps(_cfg(checkpoints=[50, 100])))
        cfg = ExperimentConfig.from_json(str(p))
        assert cfg.checkpoints == [50, 100] and cfg.replications == 3

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(str(p))


class TestInstances:
    def test_sample_draw_seed(self):
        desc = {"kind": "adversarial_d2", "T": 5000, "u": "sample"}
        a = build_instance(desc, 3, 7)
        b = build_instance(desc, 3, 7)
        assert a.describe() == b.describe()
        draws = {tuple(build_instance(desc, 3, r).describe()["u"][0]) for r in range(20)}
        assert len(draws) > 1

    def test_construction_error(self):
        cfg = ExperimentConfig.from_dict(_cfg(instance={"kind": "adversarial_general", "d": 4,
                                                        "T": 1024, "U": [2, 2]}))
        with pytest.raises(ConstructionError):
            run_experiment(cfg, jobs=1)


class TestRunExperiment:
    def test_single_arm_zero(self):
        cfg = ExperimentConfig.from_dict(_cfg(instance={"kind": "random", "d": 3, "n": 1,
                                                        "T": 64, "theta_seed": 2}))
        rows = run_experiment(cfg, jobs=1)
        assert all(r.cum_regret == 0.0 for r in rows)

    def test_row_order_and_seeds(self):
        cfg = ExperimentConfig.from_dict(_cfg())
        rows = run_experiment(cfg, jobs=1)
        cps = default_checkpoints(100)
        assert [(r.replication, r.checkpoint) for r in rows] == [
            (i, c) for i in range(3) for c in cps]
        assert {r.seed for r in rows if r.replication == 2} == {mix_seed(11, 2)}

    def test_matches_direct_simulation(self):
        cfg = ExperimentConfig.from_dict(_cfg(policy="vcl", checkpoints=[100]))
        rows = run_experiment(cfg, jobs=1)
        inst = RandomInstance(3, 4, 100, 1)
        for r in rows:
            tr = simulate(make_policy("vcl"), inst, mix_seed(11, r.replication))
            assert r.cum_regret == tr.final_regret

    def test_monotone_across_checkpoints(self):
        rows = run_experiment(ExperimentConfig.from_dict(_cfg(policy="linucb")), jobs=1)
        for rep in range(3):
            v = [r.cum_regret for r in rows if r.replication == rep]
            assert v == sorted(v)

    def test_zeta_histogram_for_vcl(self):
        rows = run_experiment(ExperimentConfig.from_dict(_cfg(policy="vcl")), jobs=1)
        for r in rows:
            counts = [int(c) for c in r.zeta_hist.split(";")]
            assert sum(counts) == r.checkpoint

    def test_subopt_pulls_adversarial(self):
        cfg = ExperimentConfig.from_dict(_cfg(instance={"kind": "adversarial_d2", "T": 500,
                                                        "u": "sample"}))
        rows = run_experiment(cfg, jobs=1)
        assert all(r.subopt_pulls is not None and 0 <= r.subopt_pulls <= r.checkpoint
                   for r in rows)
        rows_r = run_experiment(ExperimentConfig.from_dict(_cfg()), jobs=1)
        assert all(r.subopt_pulls is None and r.zeta_hist == "" for r in rows_r)

    def test_parallel_equals_serial(self):
        cfg = ExperimentConfig.from_dict(_cfg(policy="vcl", replications=4))
        assert rows_to_csv(run_experiment(cfg, jobs=1)) == rows_to_csv(run_experiment(cfg, jobs=2))

    def test_csv_format(self, tmp_path):
        out = tmp_path / "r.csv"
        cfg = ExperimentConfig.from_dict(_cfg(output_path=str(out)))
        rows = run_experiment(cfg, jobs=1)
        raw = out.read_bytes()
        assert b"\r" not in raw
        lines = raw.decode("utf-8").split("\n")
        assert lines[0] == ",".join(CSV_HEADER)
        first = next(csv.DictReader(lines))
        assert repr(float(first["cum_regret"])) == repr(rows[0].cum_regret)
        back = read_csv(str(out))
        assert [r.cum_regret for r in back] == [r.cum_regret for r in rows]

    def test_vcl_beats_random(self):
        inst = {"kind": "random", "d": 4, "n": 8, "T": 2000, "theta_seed": 5}
        means = {}
        for pol in ("vcl", "random"):
            cfg = ExperimentConfig.from_dict(_cfg(policy=pol, instance=inst, replications=20,
                                                  checkpoints=[2000]))
            means[pol] = aggregate(run_experiment(cfg))[-1].mean
        assert means["vcl"] < means["random"]


class TestAggregate:
    def test_against_recomputation(self):
        rows = run_experiment(ExperimentConfig.from_dict(_cfg(replications=5)), jobs=1)
        for a in aggregate(rows):
            v = np.array([r.cum_regret for r in rows if r.checkpoint == a.checkpoint])
            mean = math.fsum(v) / v.size
            se = math.sqrt(math.fsum((v - mean) ** 2) / (v.size - 1)) / math.sqrt(v.size)
            assert abs(a.mean - mean) <= 1e-12 * max(1.0, abs(mean))
            assert abs(a.std_error - se) <= 1e-12 * max(1.0, se)


class TestFit:
    def test_linear(self):
        f = fit_scaling_exponent([(T, 3.0 * T) for T in (100, 1000, 10_000)])
        assert abs(f.slope - 1.0) <= 1e-12

    def test_sqrt(self):
        f = fit_scaling_exponent([(T, 2.5 * math.sqrt(T)) for T in (100, 400, 1600, 6400)])
        assert abs(f.slope - 0.5) <= 1e-12
        assert f.residual <= 1e-20

    def test_noisy_matches_closed_form(self):
        pts = [(1000, 412.0), (4000, 730.0), (16000, 1611.0)]
        x = np.log([p[0] for p in pts])
        y = np.log([p[1] for p in pts])
        xm, ym = x.mean(), y.mean()
        slope = np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2)
        f = fit_scaling_exponent(pts)
        assert abs(f.slope - slope) <= 1e-9
        assert abs(f.intercept - (ym - slope * xm)) <= 1e-9

    @pytest.mark.parametrize("pts", [[(10, 0.0), (100, 0.0)], [(10, 1.0)], [(10, -1.0), (20, 2.0)]])
    def test_undefined(self, pts):
        f = fit_scaling_exponent(pts)
        assert not f.defined and math.isnan(f.slope)


class TestSweep:
    def test_zero_regret_undefined(self):
        cfg = ExperimentConfig.from_dict(
            _cfg(instance={"kind": "random", "d": 2, "n": 1, "T": [50, 100, 200],
                           "theta_seed": 0, "noise_sd": 0.0}), allow_horizon_list=True)
        table = sweep(cfg, jobs=1)
        assert [m for _, m, _ in table.rows] == [0.0, 0.0, 0.0]
        assert not table.fit.defined
        assert table.slope_text() == "slope=undefined"

    def test_needs_three_horizons(self):
        cfg = ExperimentConfig.from_dict(
            _cfg(instance={"kind": "random", "d": 2, "n": 3, "T": [50, 100], "theta_seed": 0}),
            allow_horizon_list=True)
        with pytest.raises(ConfigError):
            sweep(cfg, jobs=1)

    def test_random_policy_linear(self):
        cfg = ExperimentConfig.from_dict(
            _cfg(instance={"kind": "random", "d": 3, "n": 6, "T": [500, 1000, 2000],
                           "theta_seed": 2}, replications=10), allow_horizon_list=True)
        table = sweep(cfg, jobs=1)
        assert 0.9 <= table.fit.slope <= 1.1


class TestLowerBound:
    def test_floor_row_by_row(self):
        s = lowerbound_eval("random", 2, 2000, samples=5, base_seed=1, jobs=1)
        assert s.floor_holds
        for row in s.samples:
            assert row.regret >= row.pulls * margin_floor(2000)
            assert row.floor == row.pulls * margin_floor(2000)

    def test_general_dimension(self):
        s = lowerbound_eval("linucb", 4, 4000, samples=2, base_seed=0, jobs=1)
        assert len(s.samples[0].pulls_per_group) == 2

    def test_rejects_bad_arguments(self):
        with pytest.raises(ConfigError):
            lowerbound_eval("vcl", 3, 100)
        with pytest.raises(ConfigError):
            lowerbound_eval("vcl", 2, 100, eps=0.0)

    def test_short_horizon(self):
        with pytest.raises(ConstructionError):
            lowerbound_eval("vcl", 2, 1, samples=1)
