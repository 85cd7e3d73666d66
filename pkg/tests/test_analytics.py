import time

from zagii.analytics import (
    analytics_summary,
    bin_for,
    simulate_corpus,
    zipf_allocation,
)
from zagii.persistence import SessionRecord


def _record(i, game_id, rounds):
    return SessionRecord(session_id=f"r{i}", game_id=game_id, created_at=0.0,
                         round_count=rounds)


def test_zero_sessions_all_zero():
    summary = analytics_summary([])
    assert summary.total_sessions == 0
    assert all(v == 0 for v in summary.histogram.values())
    assert summary.per_game == {}
    assert summary.top_games == ()


def test_bin_boundaries():
    assert bin_for(0) == "lt_5"
    assert bin_for(4) == "lt_5"
    assert bin_for(5) == "5_30"
    assert bin_for(30) == "5_30"
    assert bin_for(31) == "31_50"
    assert bin_for(50) == "31_50"
    assert bin_for(51) == "gt_50"


def test_histogram_conserves_total():
    records = [_record(i, f"g{i % 3}", i % 60) for i in range(200)]
    summary = analytics_summary(records)
    assert sum(summary.histogram.values()) == summary.total_sessions == 200


def test_outlier_exclusion():
    records = [_record(i, "whale", 10) for i in range(50)]
    records += [_record(100 + i, "minnow", 10) for i in range(5)]
    summary = analytics_summary(records, outlier_threshold=30)
    assert summary.excluded_games == ("whale",)
    assert summary.total_sessions == 5
    assert sum(summary.histogram.values()) == 5
    assert "whale" not in summary.per_game


def test_top_games_ranked():
    records = [_record(i, "a", 10) for i in range(3)]
    records += [_record(10 + i, "b", 10) for i in range(7)]
    summary = analytics_summary(records, top_k=1)
    assert summary.top_games == (("b", 7),)


def test_zipf_allocation_exact_sum():
    for total, n in [(24894, 167), (100, 7), (5, 10), (0, 3)]:
        counts = zipf_allocation(total, n)
        assert len(counts) == n
        assert sum(counts) == total
        assert all(c >= 0 for c in counts)
        # monotone non-increasing by rank
        assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_simulate_corpus_shape():
    result = simulate_corpus(games=20, sessions=1000, seed=7, outlier_sessions=0)
    assert len(result.records) == 1000
    assert result.outlier_game_id is None
    assert len({r.session_id for r in result.records}) == 1000


def test_simulate_is_deterministic():
    first = simulate_corpus(games=10, sessions=500, seed=3, outlier_sessions=0)
    second = simulate_corpus(games=10, sessions=500, seed=3, outlier_sessions=0)
    assert [(r.game_id, r.round_count) for r in first.records] == \
        [(r.game_id, r.round_count) for r in second.records]


def test_simulated_outlier_excluded_by_threshold():
    result = simulate_corpus(games=5, sessions=200, seed=1, outlier_sessions=900)
    summary = analytics_summary(result.records, outlier_threshold=500)
    assert summary.excluded_games == ("sim-outlier",)
    assert summary.total_sessions == 200


def test_desk_scale_simulation_under_a_minute():
    start = time.monotonic()
    result = simulate_corpus(games=167, sessions=24894, seed=42)
    summary = analytics_summary(result.records, outlier_threshold=30000)
    elapsed = time.monotonic() - start
    assert elapsed < 60
    assert sum(summary.histogram.values()) == 24894
    assert summary.excluded_games == ("sim-outlier",)
    top_game, top_count = summary.top_games[0]
    uniform_share = 24894 / 167
    assert top_count >= 5 * uniform_share
