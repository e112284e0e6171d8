import numpy as np
import pytest

from splitprune import graphs, perf
from splitprune.brute import DEFAULT_LEVELS, FINE_LEVELS, Grid, enumerate_best
from splitprune.errors import DomainError, RefusedError
from splitprune.graphs import Plan
from splitprune.perf import Environment
from splitprune.oracles import default_surrogate


@pytest.fixture
def toy3():
    return graphs.preset("toy3")


@pytest.fixture
def env():
    return Environment.from_kbps(1280.0, r_comp=20.0, acc_req=0.75,
                                 cloud_seconds_per_flop=2e-8)


def test_grid_validation():
    with pytest.raises(DomainError):
        Grid(rate_levels=())
    with pytest.raises(DomainError):
        Grid(rate_levels=(0.5, 0.25))
    with pytest.raises(DomainError):
        Grid(rate_levels=(-0.1, 0.5))


def test_fine_levels_cover_5pc_grid():
    assert FINE_LEVELS[0] == 0.0
    assert FINE_LEVELS[-1] == 0.9
    assert len(FINE_LEVELS) == 19


class TestEnumeration:
    def test_evaluation_count_restricted_options(self, toy3, env):
        oracle = default_surrogate(toy3)
        res = enumerate_best(toy3, env, oracle, Grid(options=(0, 1, 2, 3)))
        assert res.evaluations == 4 * 5 ** 3  # 500
        assert len(res.table) == 500

    def test_evaluation_count_all_options(self, toy3, env):
        res = enumerate_best(toy3, env, default_surrogate(toy3))
        assert res.evaluations == 5 * 125

    def test_best_dominates_every_row(self, toy3, env):
        res = enumerate_best(toy3, env, default_surrogate(toy3))
        assert all(row.reward <= res.best_reward for row in res.table)

    def test_best_dominates_random_off_grid_plans_on_the_grid(self, toy3, env):
        oracle = default_surrogate(toy3)
        res = enumerate_best(toy3, env, oracle)
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = int(rng.choice(toy3.partition_points()))
            rates = tuple(rng.choice(DEFAULT_LEVELS) for _ in range(3))
            acc = oracle.evaluate(toy3, rates)
            reward = perf.reward(toy3, Plan(p, rates), env, acc)
            assert reward <= res.best_reward

    def test_binding_floor_forces_zero_rates(self, toy3):
        # with the floor at the base accuracy, only unpruned plans qualify
        env = Environment.from_kbps(1280.0, r_comp=20.0, acc_req=0.9,
                                    cloud_seconds_per_flop=2e-8)
        res = enumerate_best(toy3, env, default_surrogate(toy3, base_acc=0.9))
        assert res.best_plan.rates == (0.0, 0.0, 0.0)
        assert res.best_reward > 0

    def test_all_infeasible_tie_breaks_lexicographically(self, toy3):
        env = Environment.from_kbps(1280.0, r_comp=20.0, acc_req=1.0,
                                    cloud_seconds_per_flop=2e-8)
        res = enumerate_best(toy3, env, default_surrogate(toy3))
        assert res.best_reward == 0.0
        assert res.best_plan == Plan(0, (0.0, 0.0, 0.0))

    def test_deterministic(self, toy3, env):
        oracle = default_surrogate(toy3)
        a = enumerate_best(toy3, env, oracle)
        b = enumerate_best(toy3, env, oracle)
        assert a.best_plan == b.best_plan
        assert a.best_reward == b.best_reward

    def test_parallel_matches_sequential(self, toy3, env, tmp_path):
        oracle = default_surrogate(toy3)
        seq_csv = tmp_path / "seq.csv"
        par_csv = tmp_path / "par.csv"
        seq = enumerate_best(toy3, env, oracle, csv_path=seq_csv, workers=1)
        par = enumerate_best(toy3, env, oracle, csv_path=par_csv, workers=2)
        assert seq.best_plan == par.best_plan
        assert seq.best_reward == par.best_reward
        assert seq_csv.read_bytes() == par_csv.read_bytes()

    def test_cap_refusal_reports_count(self, env):
        g = graphs.preset("vgg16")
        with pytest.raises(RefusedError, match=str(21 * 5 ** 13)):
            enumerate_best(g, env, default_surrogate(g))

    def test_invalid_option_rejected(self, toy3, env):
        with pytest.raises(DomainError):
            enumerate_best(toy3, env, default_surrogate(toy3), Grid(options=(9,)))

    def test_level_above_r_max_rejected(self, toy3, env):
        with pytest.raises(DomainError):
            enumerate_best(toy3, env, default_surrogate(toy3),
                           Grid(rate_levels=(0.0, 0.95)))

    def test_csv_table(self, toy3, env, tmp_path):
        path = tmp_path / "table.csv"
        res = enumerate_best(toy3, env, default_surrogate(toy3), csv_path=path,
                             keep_table=False)
        lines = path.read_text().splitlines()
        assert lines[0] == "partition,rate_0,rate_1,rate_2,acc,t_edge,t_trans,t_cloud,reward"
        assert len(lines) == 1 + res.evaluations
        assert res.table == ()

    def test_rows_consistent_with_direct_evaluation(self, toy3, env):
        oracle = default_surrogate(toy3)
        res = enumerate_best(toy3, env, oracle)
        rng = np.random.default_rng(1)
        for row in rng.choice(len(res.table), size=20, replace=False):
            r = res.table[row]
            direct = perf.latency(toy3, Plan(r.partition, r.rates), env)
            assert direct == r.latency
            assert perf.reward(toy3, Plan(r.partition, r.rates), env, r.acc) == r.reward
