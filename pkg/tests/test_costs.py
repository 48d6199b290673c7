"""Token-economics model."""

import pytest

from jpt.costs import (
    DEFAULT_WORKLOADS,
    POLITICS_LIKE_STATS,
    CostModel,
    Workload,
    WorkloadStats,
    cost_table,
    custom_workload,
    duplicated_tagger_workload,
    generative_per_type_workload,
    generative_single_call_workload,
    profile_cost,
    workload_cost,
)


def test_output_never_cheaper_than_input():
    with pytest.raises(ValueError, match="c_out"):
        CostModel(c_in=2.0, c_out=1.0)
    with pytest.raises(ValueError):
        CostModel(c_in=0.0, c_out=1.0)


def test_tagger_hand_case():
    # equal prices, 100-token text, no prompt overhead: 2n+1 units
    stats = WorkloadStats(
        mean_input_tokens=100, schema_size=3, mean_entities=2, prompt_overhead=0
    )
    cost = workload_cost(CostModel(c_in=1.0, c_out=1.0), duplicated_tagger_workload(), stats)
    assert cost == 201.0


def test_generative_hand_case_ratio():
    # 100 input and 50 output tokens at a 4x decode premium: 100 + 200
    stats = WorkloadStats(
        mean_input_tokens=100, schema_size=3, mean_entities=2, prompt_overhead=0
    )
    model = CostModel(c_in=1.0, c_out=4.0)
    generative = custom_workload(
        "generative", lambda s: s.mean_input_tokens, lambda s: 50.0
    )
    g = workload_cost(model, generative, stats)
    j = workload_cost(model, duplicated_tagger_workload(), stats)
    assert g == 300.0
    assert j == 201.0
    assert g / j == pytest.approx(1.49, abs=0.005)


def test_tagger_decodes_nothing():
    w = duplicated_tagger_workload()
    assert w.output_tokens(POLITICS_LIKE_STATS) == 0.0


def test_per_type_pays_schema_size_times():
    stats = POLITICS_LIKE_STATS
    single = generative_single_call_workload()
    per_type = generative_per_type_workload()
    assert per_type.input_tokens(stats) == stats.schema_size * single.input_tokens(stats)
    assert per_type.output_tokens(stats) > single.output_tokens(stats)


def test_monotone_in_c_out():
    stats = POLITICS_LIKE_STATS
    for w in DEFAULT_WORKLOADS:
        costs = [
            workload_cost(CostModel(c_in=1.0, c_out=c), w, stats)
            for c in (1.0, 2.0, 4.0, 8.0)
        ]
        if w.output_tokens(stats) == 0:
            assert len(set(costs)) == 1
        else:
            assert costs == sorted(costs)
            assert costs[0] < costs[-1]


def test_tagger_cheaper_across_pricing_band():
    for ratio in (3.0, 3.5, 4.0, 4.5, 5.0):
        rows = profile_cost(CostModel(c_in=1.0, c_out=ratio))
        by_name = {row["method"]: row for row in rows}
        jpt = by_name["jpt"]["cost"]
        for name, row in by_name.items():
            if name != "jpt":
                assert row["cost"] > jpt, (name, ratio)


def test_profile_ratio_column():
    rows = profile_cost(CostModel(c_in=1.0, c_out=4.0))
    by_name = {row["method"]: row for row in rows}
    assert by_name["jpt"]["ratio"] == 1.0
    for name, row in by_name.items():
        assert row["ratio"] == pytest.approx(row["cost"] / by_name["jpt"]["cost"])


def test_profile_rejects_duplicates():
    pair = [duplicated_tagger_workload(), duplicated_tagger_workload()]
    with pytest.raises(ValueError, match="duplicate"):
        profile_cost(CostModel(), pair)


def test_profile_without_reference():
    rows = profile_cost(
        CostModel(), [generative_single_call_workload()], reference="jpt"
    )
    assert rows[0]["ratio"] is None


def test_negative_token_counts_rejected():
    bad = Workload("bad", lambda s: -1.0, lambda s: 0.0)
    with pytest.raises(ValueError, match="negative"):
        profile_cost(CostModel(), [bad])


def test_stats_validation():
    with pytest.raises(ValueError):
        WorkloadStats(mean_input_tokens=0, schema_size=1, mean_entities=0)
    with pytest.raises(ValueError):
        WorkloadStats(mean_input_tokens=10, schema_size=0, mean_entities=0)
    with pytest.raises(ValueError):
        WorkloadStats(mean_input_tokens=10, schema_size=1, mean_entities=-1)


def test_table_renders_all_rows():
    rows = profile_cost(CostModel(c_in=1.0, c_out=4.0))
    text = cost_table(rows)
    for row in rows:
        assert row["method"] in text
    assert "1.00" in text
