"""Bench harness tests: rate math, tables, match accounting, oracle
sweeps, and report files."""

import math
import random

import pytest

from spatfeat.bench import (
    BenchResult,
    CSV_COLUMNS,
    GreedyPolicyAgent,
    MatchResult,
    MctsAgent,
    RandomAgent,
    bench_playouts,
    cross_backend_check,
    emit_csv,
    emit_markdown,
    feature_sets_for_label,
    parse_set_label,
    rank_counts,
    rank_table,
    read_results_csv,
    render_markdown,
    run_match,
    slowdown_table,
)
from spatfeat.agents import LinearPolicy
from spatfeat.backends import NaiveBackend
from spatfeat.games import game
from spatfeat.instantiate import InstanceStore


def result(game_name="tictactoe", fset="atomic-1-1", backend="naive",
           rate=100.0, playouts=None, selector="uniform", prop_evals=0):
    playouts = playouts if playouts is not None else int(rate)
    return BenchResult(game_name, fset, backend, selector, playouts,
                       playouts / rate, prop_evals)


class TestBenchResult:
    def test_rate_definition(self):
        r = BenchResult("g", "s", "naive", "uniform", 800, 2.0, 0)
        assert r.rate == 400.0

    def test_zero_seconds(self):
        assert BenchResult("g", "s", "naive", "uniform", 0, 0.0, 0).rate == 0.0


class TestSetLabels:
    def test_parse(self):
        assert parse_set_label("atomic-1-2") == (1, 2)
        assert parse_set_label("atomic-2-4") == (2, 4)

    @pytest.mark.parametrize("bad", ["atomic", "atomic-1", "atomic-a-b",
                                     "trained", "atomic-1-2-3"])
    def test_parse_rejects(self, bad):
        with pytest.raises(ValueError, match="label"):
            parse_set_label(bad)

    def test_sets_cover_players(self):
        g = game("tictactoe")
        fs = feature_sets_for_label(g, "atomic-1-1")
        assert set(fs) == {1, 2}
        assert fs[1].texts() == fs[2].texts()
        assert len(fs[1]) > 0


class TestBenchPlayouts:
    def test_fixed_count_reproducible(self):
        g = game("tictactoe")
        fs = feature_sets_for_label(g, "atomic-1-1")
        r1 = bench_playouts(g, fs, "naive", playouts=5, seed=3,
                            label="atomic-1-1")
        r2 = bench_playouts(g, fs, "naive", playouts=5, seed=3,
                            label="atomic-1-1")
        assert r1.playouts == r2.playouts == 5
        assert r1.prop_evals == r2.prop_evals > 0
        assert r1.game == "tictactoe"
        assert r1.feature_set == "atomic-1-1"

    def test_seed_changes_evals(self):
        g = game("tictactoe")
        fs = feature_sets_for_label(g, "atomic-1-1")
        r1 = bench_playouts(g, fs, "naive", playouts=8, seed=0)
        r2 = bench_playouts(g, fs, "naive", playouts=8, seed=1)
        assert r1.prop_evals != r2.prop_evals

    def test_policy_selector_reproducible(self):
        g = game("tictactoe")
        fs = feature_sets_for_label(g, "atomic-1-1")
        r1 = bench_playouts(g, fs, "spatternet", playouts=4, seed=2,
                            selector="policy")
        r2 = bench_playouts(g, fs, "spatternet", playouts=4, seed=2,
                            selector="policy")
        assert r1.prop_evals == r2.prop_evals
        assert r1.selector == "policy"

    def test_wall_clock_mode(self):
        g = game("tictactoe")
        fs = feature_sets_for_label(g, "atomic-1-1")
        r = bench_playouts(g, fs, "naive", warmup_s=0.02, measure_s=0.05,
                           seed=0, label="atomic-1-1")
        assert r.playouts >= 1
        assert r.seconds >= 0.05
        assert r.prop_evals == 0

    def test_validation(self):
        g = game("tictactoe")
        fs = feature_sets_for_label(g, "atomic-1-1")
        with pytest.raises(ValueError, match="selector"):
            bench_playouts(g, fs, "naive", playouts=1, selector="best")
        with pytest.raises(ValueError, match="playouts"):
            bench_playouts(g, fs, "naive", playouts=0)
        with pytest.raises(ValueError, match="durations"):
            bench_playouts(g, fs, "naive", warmup_s=0.0, measure_s=1.0)


class TestSlowdownTable:
    def test_ratio_and_baseline(self):
        rows = [result(rate=1000.0),
                result(backend="tree", rate=800.0),
                result(fset="atomic-2-2", rate=500.0),
                result(fset="atomic-2-2", backend="tree", rate=400.0)]
        table = slowdown_table(rows)
        assert table[("tictactoe", "atomic-1-1", "naive")] == 1.0
        assert table[("tictactoe", "atomic-1-1", "tree")] == 1.25
        assert table[("tictactoe", "atomic-2-2", "naive")] == 2.0
        assert table[("tictactoe", "atomic-2-2", "tree")] == 2.5

    def test_baseline_is_smallest_set(self):
        rows = [result(fset="atomic-2-2", rate=500.0),
                result(fset="atomic-1-1", rate=1000.0)]
        table = slowdown_table(rows)
        assert table[("tictactoe", "atomic-2-2", "naive")] == 2.0

    def test_explicit_baseline_set(self):
        rows = [result(fset="atomic-1-1", rate=1000.0),
                result(fset="atomic-2-2", rate=500.0)]
        table = slowdown_table(rows, baseline_set="atomic-2-2")
        assert table[("tictactoe", "atomic-1-1", "naive")] == 0.5

    def test_missing_baseline(self):
        with pytest.raises(ValueError, match="baseline"):
            slowdown_table([result(backend="tree", rate=100.0)])

    def test_zero_rate(self):
        rows = [result(rate=100.0),
                BenchResult("tictactoe", "atomic-1-1", "tree", "uniform",
                            0, 1.0, 0)]
        table = slowdown_table(rows)
        assert table[("tictactoe", "atomic-1-1", "tree")] == math.inf


class TestRankTable:
    def rows(self, rates):
        return [result(backend=b, rate=r) for b, r in rates.items()]

    def test_distinct_rates_permutation(self):
        ranks = rank_table(self.rows({"naive": 400.0, "tree": 100.0,
                                      "spatternet": 300.0,
                                      "spatternet-jit": 200.0}))
        by_backend = {b: ranks[("tictactoe", "atomic-1-1", b)]
                      for b in ("naive", "spatternet", "spatternet-jit",
                                "tree")}
        assert by_backend == {"naive": 1, "spatternet": 2,
                              "spatternet-jit": 3, "tree": 4}

    def test_ties_share_better_rank(self):
        ranks = rank_table(self.rows({"naive": 400.0, "tree": 400.0,
                                      "spatternet": 100.0}))
        assert ranks[("tictactoe", "atomic-1-1", "naive")] == 1
        assert ranks[("tictactoe", "atomic-1-1", "tree")] == 1
        assert ranks[("tictactoe", "atomic-1-1", "spatternet")] == 3

    def test_duplicate_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            rank_table([result(), result()])

    def test_counts_sum_per_rank(self):
        rows = []
        for g in ("tictactoe", "hex"):
            for i, b in enumerate(("naive", "tree", "spatternet",
                                   "spatternet-jit")):
                rows.append(result(game_name=g, backend=b,
                                   rate=100.0 * (i + 1)))
        counts = rank_counts(rank_table(rows))
        for rank in (1, 2, 3, 4):
            assert sum(per.get(rank, 0) for per in counts.values()) == 2

    def test_invariant_under_rate_scaling(self):
        rows = self.rows({"naive": 423.0, "tree": 77.0, "spatternet": 301.0})
        scaled = [BenchResult(r.game, r.feature_set, r.backend, r.selector,
                              r.playouts, r.seconds / 7.0, r.prop_evals)
                  for r in rows]
        assert rank_table(rows) == rank_table(scaled)


class TestRunMatch:
    def test_requires_even_games(self):
        g = game("tictactoe")
        a, b = RandomAgent("a"), RandomAgent("b")
        with pytest.raises(ValueError, match="even"):
            run_match(g, a, b, 5)
        with pytest.raises(ValueError, match="even"):
            run_match(g, a, b, 0)

    def test_accounting_and_symmetry(self):
        g = game("tictactoe")
        m = run_match(g, RandomAgent("a"), RandomAgent("b"), 40, seed=11)
        assert m.wins + m.draws + m.losses == m.games == 40
        lo, hi = m.interval()
        assert lo < 0.5 < hi

    def test_deterministic(self):
        g = game("tictactoe")
        m1 = run_match(g, RandomAgent("a"), RandomAgent("b"), 10, seed=3)
        m2 = run_match(g, RandomAgent("a"), RandomAgent("b"), 10, seed=3)
        assert m1 == m2

    def test_mcts_agent_beats_random(self):
        g = game("tictactoe")
        policy = LinearPolicy()
        agent = MctsAgent("mcts", policy, NaiveBackend(InstanceStore()),
                          iterations=120)
        m = run_match(g, agent, RandomAgent("rng"), 10, seed=5)
        assert m.wins > m.losses

    def test_mcts_agent_needs_budget(self):
        agent = MctsAgent("m", LinearPolicy(), NaiveBackend(InstanceStore()))
        with pytest.raises(ValueError, match="budget"):
            agent.choose(game("tictactoe"), game("tictactoe").initial_state(),
                         random.Random(0))

    def test_greedy_agent_moves_legally(self):
        g = game("tictactoe")
        agent = GreedyPolicyAgent("g", LinearPolicy(),
                                  NaiveBackend(InstanceStore()))
        state = g.initial_state()
        action = agent.choose(g, state, random.Random(0))
        assert action in g.legal_actions(state)

    def test_interval_matches_normal_approximation(self):
        m = MatchResult("g", "a", "b", wins=60, draws=0, losses=40)
        p = 0.6
        half = 1.96 * math.sqrt(p * 0.4 / 100)
        lo, hi = m.interval()
        assert abs(lo - (p - half)) < 1e-12
        assert abs(hi - (p + half)) < 1e-12


class TestCrossBackendCheck:
    def test_agreement_on_tictactoe(self):
        g = game("tictactoe")
        fs = feature_sets_for_label(g, "atomic-1-1")
        report = cross_backend_check(g, fs, label="atomic-1-1", playouts=4,
                                     seed=0)
        assert report.ok
        assert report.queries > 0
        assert report.mismatches == []
        assert report.eval_violations == []

    def test_reactive_game_agreement(self):
        g = game("breakthrough")
        fs = feature_sets_for_label(g, "atomic-1-1")
        report = cross_backend_check(g, fs, label="atomic-1-1", playouts=2,
                                     seed=1)
        assert report.ok


class TestReports:
    def rows(self):
        return [result(rate=250.0, prop_evals=123),
                result(backend="tree", rate=125.0, prop_evals=123)]

    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "out.csv"
        rows = self.rows()
        emit_csv(rows, path)
        assert read_results_csv(path) == rows

    def test_csv_header_and_rate_format(self, tmp_path):
        path = tmp_path / "out.csv"
        emit_csv(self.rows(), path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        rate_cell = lines[1].split(",")[6]
        assert rate_cell == f"{250.0:.6f}"

    def test_empty_results(self, tmp_path):
        path = tmp_path / "empty.csv"
        emit_csv([], path)
        assert path.read_text().strip() == ",".join(CSV_COLUMNS)
        assert read_results_csv(path) == []

    def test_write_error_names_path(self, tmp_path):
        bad = tmp_path / "missing" / "out.csv"
        with pytest.raises(OSError, match="out.csv"):
            emit_csv([], bad)

    def test_read_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(ValueError, match="header"):
            read_results_csv(path)

    def test_markdown_structure(self, tmp_path):
        text = render_markdown(self.rows())
        assert "| game | feature set | backend |" in text
        assert "| tictactoe | atomic-1-1 | naive |" in text
        assert "| rank 1 | rank 2 |" in text
        path = tmp_path / "table.md"
        emit_markdown(self.rows(), path)
        assert path.read_text() == text
