from __future__ import annotations

import json
import math
import random
from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rewritedetect.corpus import SplitSpec, synth_corpus
from rewritedetect.errors import (
    DuplicateId,
    InsufficientData,
    MissingVariant,
    OverlapDetected,
    ZeroVariance,
)
from rewritedetect.evaluation import (
    EvalReport,
    config_fingerprint,
    f1_report,
    feature_histograms,
    regularized_incomplete_beta,
    render_table,
    run_adaptive,
    run_in_domain,
    run_ood,
    serialize_report,
    student_t_sf,
    welch_t_test,
)
from rewritedetect.features import FeatureVector
from rewritedetect.model import load_model

from helpers import brute_force_counts, brute_force_f1

# Frozen reference for the Welch test, computed once with an independent
# implementation and pinned.
WELCH_A = (12.1, 14.3, 11.8, 13.5, 12.9, 14.0, 13.1)
WELCH_B = (10.2, 11.1, 10.8, 9.9, 11.4, 10.5)
WELCH_T = 5.8586132503481192
WELCH_P = 7.8752486106732593e-05
WELCH_DF = 10.035773824232198

# Frozen t-distribution survival values, same provenance.
T_SF_CASES = [
    (0.0, 5.0, 0.5),
    (1.0, 1.0, 0.24999999999999978),
    (2.5, 3.7, 0.035911011455913376),
    (-1.3, 12.0, 0.89099141445824281),
    (4.2, 30.0, 0.00010989421710800977),
    (9.8, 2.0, 0.0051262375113491597),
    (-6.5, 60.0, 0.99999999114616489),
    (0.731, 7.3, 0.24378707412182798),
    (3.1, 199.5, 0.0011074615917457896),
    (12.0, 4.0, 0.00013821427425148651),
]


# ---------------------------------------------------------------------------
# F1 reporting
# ---------------------------------------------------------------------------


def test_f1_report_known_counts():
    predicted = ["machine", "machine", "human", "human", "machine"]
    actual = ["machine", "human", "machine", "human", "machine"]
    report = f1_report(predicted, actual)
    assert (report.tp, report.fp, report.fn, report.tn) == (2, 1, 1, 1)
    assert report.precision == pytest.approx(2 / 3)
    assert report.recall == pytest.approx(2 / 3)
    assert report.f1 == pytest.approx(2 / 3)
    assert report.n == 5


def test_f1_report_zero_denominator_conventions():
    report = f1_report(["human", "human"], ["machine", "human"])
    assert (report.precision, report.recall, report.f1) == (0.0, 0.0, 0.0)
    report = f1_report(["human"], ["human"])
    assert (report.precision, report.recall, report.f1) == (0.0, 0.0, 0.0)


def test_f1_report_accepts_prediction_objects():
    predictions = [SimpleNamespace(label="machine"), SimpleNamespace(label="human")]
    report = f1_report(predictions, ["machine", "human"])
    assert (report.tp, report.tn) == (1, 1)


def test_f1_report_validation():
    with pytest.raises(ValueError, match="labels"):
        f1_report(["machine"], ["machine", "human"])
    with pytest.raises(ValueError, match="bot"):
        f1_report(["bot"], ["machine"])
    with pytest.raises(ValueError, match="bot"):
        f1_report(["machine"], ["bot"])
    with pytest.raises(ValueError, match="slice"):
        f1_report(["machine"], ["machine"], {"domain": []})


def test_f1_report_slices_partition_counts():
    predicted = ["machine", "human", "machine", "machine"]
    actual = ["machine", "machine", "human", "machine"]
    domains = ["news", "news", "blog", "blog"]
    report = f1_report(predicted, actual, {"domain": domains})
    assert set(report.slices) == {"domain=blog", "domain=news"}
    news = report.slices["domain=news"]
    assert (news.tp, news.fp, news.fn, news.tn) == (1, 0, 1, 0)
    blog = report.slices["domain=blog"]
    assert (blog.tp, blog.fp, blog.fn, blog.tn) == (1, 1, 0, 0)
    total = [report.slices[k] for k in report.slices]
    assert sum(s.n for s in total) == report.n


def test_f1_report_exhaustive_slices_include_empty_groups():
    report = f1_report(
        ["machine"],
        ["machine"],
        {"length": ["[0,10)"]},
        exhaustive={"length": ["[0,10)", "[10,inf)"]},
    )
    empty = report.slices["length=[10,inf)"]
    assert empty.n == 0
    assert (empty.precision, empty.recall, empty.f1) == (0.0, 0.0, 0.0)


@given(
    data=st.lists(
        st.tuples(
            st.sampled_from(["human", "machine"]),
            st.sampled_from(["human", "machine"]),
        ),
        min_size=1,
        max_size=30,
    )
)
@settings(max_examples=80)
def test_f1_report_agrees_with_enumeration_oracle(data):
    predicted = [p for p, _ in data]
    actual = [a for _, a in data]
    report = f1_report(predicted, actual)
    assert (report.tp, report.fp, report.fn, report.tn) == brute_force_counts(
        predicted, actual
    )
    assert report.f1 == pytest.approx(brute_force_f1(predicted, actual))


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------


def sample_report():
    return f1_report(
        ["machine", "human", "machine"],
        ["machine", "human", "human"],
        {"domain": ["news", "blog", "news"]},
        config_fingerprint="abc123",
        meta={"protocol": "in_domain"},
    )


def test_serialize_report_is_deterministic():
    assert serialize_report(sample_report()) == serialize_report(sample_report())


def test_serialize_report_layout():
    lines = serialize_report(sample_report()).splitlines()
    assert len(lines) == 3
    overall = json.loads(lines[0])
    assert overall["slice"] == "overall"
    assert overall["meta"] == {"protocol": "in_domain"}
    assert overall["config_fingerprint"] == "abc123"
    first, second = json.loads(lines[1]), json.loads(lines[2])
    assert first["slice"] == "domain=blog"  # sorted slice order
    assert second["slice"] == "domain=news"
    assert "meta" not in first


def test_render_table_lists_overall_and_slices():
    table = render_table(sample_report())
    lines = table.splitlines()
    assert lines[0].split()[:2] == ["slice", "n"]
    assert lines[2].startswith("overall")
    assert any(line.startswith("domain=blog") for line in lines)
    assert "0.5000" in table  # precision of the overall row


def test_feature_histograms_counts():
    vectors = [
        FeatureVector((0.1,), "f", "s"),
        FeatureVector((0.9,), "f", "s"),
        FeatureVector((1.0,), "f", "s"),
    ]
    labels = ["human", "machine", "machine"]
    out = feature_histograms(vectors, labels, bins=4)
    lines = out.splitlines()
    assert lines[0] == "feature\tlabel\tbin_lo\tbin_hi\tcount"
    assert len(lines) == 1 + 1 * 2 * 4
    rows = [line.split("\t") for line in lines[1:]]
    human_total = sum(int(r[4]) for r in rows if r[1] == "human")
    machine_total = sum(int(r[4]) for r in rows if r[1] == "machine")
    assert (human_total, machine_total) == (1, 2)
    with pytest.raises(ValueError):
        feature_histograms(vectors, ["human"])
    assert feature_histograms([], []) == lines[0] + "\n"


# ---------------------------------------------------------------------------
# Welch t test
# ---------------------------------------------------------------------------


def test_welch_matches_frozen_reference():
    result = welch_t_test(WELCH_A, WELCH_B, "greater")
    assert result.t_statistic == pytest.approx(WELCH_T, rel=1e-12)
    assert result.df == pytest.approx(WELCH_DF, rel=1e-12)
    assert result.p_value == pytest.approx(WELCH_P, rel=1e-10)
    assert (result.n_a, result.n_b) == (7, 6)
    assert result.direction == "greater"
    assert result.variant == "welch-unequal-variance"


@pytest.mark.parametrize("t,df,expected", T_SF_CASES)
def test_student_t_sf_matches_frozen_values(t, df, expected):
    assert student_t_sf(t, df) == pytest.approx(expected, abs=1e-10, rel=1e-10)


def test_student_t_sf_properties():
    assert student_t_sf(0.0, 7.0) == 0.5
    values = [student_t_sf(t, 9.0) for t in (-3.0, -1.0, 0.0, 1.0, 3.0)]
    assert values == sorted(values, reverse=True)
    for t in (-2.5, -0.3, 0.0, 1.7, 6.0):
        assert student_t_sf(t, 5.0) + student_t_sf(-t, 5.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        student_t_sf(1.0, 0.0)


def test_incomplete_beta_closed_forms():
    for x in (0.1, 0.37, 0.5, 0.82):
        assert regularized_incomplete_beta(1.0, 1.0, x) == pytest.approx(x)
        assert regularized_incomplete_beta(2.0, 1.0, x) == pytest.approx(x * x)
        assert regularized_incomplete_beta(1.0, 3.0, x) == pytest.approx(
            1 - (1 - x) ** 3
        )
    assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
    assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0


def test_welch_swapping_groups_sums_to_exactly_one():
    rng = random.Random(99)
    for _ in range(100):
        a = [rng.gauss(0, 1) for _ in range(rng.randint(3, 12))]
        b = [rng.gauss(rng.uniform(-2, 2), 1.5) for _ in range(rng.randint(3, 12))]
        forward = welch_t_test(a, b, "greater").p_value
        backward = welch_t_test(b, a, "greater").p_value
        assert forward + backward == 1.0


def test_welch_direction_flip():
    greater = welch_t_test(WELCH_A, WELCH_B, "greater")
    less = welch_t_test(WELCH_A, WELCH_B, "less")
    assert less.t_statistic == greater.t_statistic
    assert less.p_value == pytest.approx(1.0 - greater.p_value)
    assert less.p_value > 0.99


def test_welch_error_paths():
    with pytest.raises(InsufficientData):
        welch_t_test([1.0], [2.0, 3.0])
    with pytest.raises(InsufficientData):
        welch_t_test([1.0, 2.0], [3.0])
    with pytest.raises(ZeroVariance):
        welch_t_test([2.0, 2.0, 2.0], [5.0, 5.0])
    with pytest.raises(ValueError, match="direction"):
        welch_t_test([1.0, 2.0], [3.0, 4.0], "two-sided")


def test_welch_tolerates_one_constant_group():
    result = welch_t_test([3.0, 3.0, 3.0], [1.0, 2.0, 1.5], "greater")
    assert math.isfinite(result.t_statistic)
    assert 0.0 < result.p_value < 0.5


def test_welch_obvious_separation_is_significant():
    a = [10.0 + 0.1 * i for i in range(10)]
    b = [1.0 + 0.1 * i for i in range(10)]
    assert welch_t_test(a, b, "greater").p_value < 1e-6


# ---------------------------------------------------------------------------
# Config fingerprints
# ---------------------------------------------------------------------------


def test_config_fingerprint_key_order_insensitive():
    assert config_fingerprint({"a": 1, "b": [2, 3]}) == config_fingerprint(
        {"b": [2, 3], "a": 1}
    )
    assert config_fingerprint({"a": 1}) != config_fingerprint({"a": 2})


# ---------------------------------------------------------------------------
# In-domain protocol
# ---------------------------------------------------------------------------


@pytest.fixture
def eval_corpus():
    return synth_corpus(24, 0.5, seed=9)


def test_run_in_domain_report_shape(eval_corpus, catalog, mock_rewriter):
    report = run_in_domain(eval_corpus, "invariance", catalog, mock_rewriter)
    assert report.n == 4  # round(0.8 * 12) = 10 of each label trains
    assert report.meta["protocol"] == "in_domain"
    assert report.meta["train_size"] == 20
    assert report.meta["test_size"] == 4
    assert len(report.config_fingerprint) == 64
    assert "domain=synthetic" in report.slices
    assert {"generator=human", "generator=mock"} <= set(report.slices)
    assert report.f1 == 1.0  # mock edit rates make the classes separable


def test_run_in_domain_is_reproducible(eval_corpus, catalog, mock_rewriter):
    first = run_in_domain(eval_corpus, "invariance", catalog, mock_rewriter)
    second = run_in_domain(eval_corpus, "invariance", catalog, mock_rewriter)
    assert serialize_report(first) == serialize_report(second)


def test_run_in_domain_fingerprint_tracks_settings(eval_corpus, catalog,
                                                   mock_rewriter):
    base = run_in_domain(eval_corpus, "invariance", catalog, mock_rewriter)
    reseeded = run_in_domain(
        eval_corpus, "invariance", catalog, mock_rewriter,
        split_spec=SplitSpec(seed=5),
    )
    assert base.config_fingerprint != reseeded.config_fingerprint


def test_run_in_domain_length_protocol(eval_corpus, catalog, mock_rewriter):
    report = run_in_domain(
        eval_corpus, "invariance", catalog, mock_rewriter,
        length_edges=(10, 25),
    )
    assert report.meta["protocol"] == "length"
    # Synthetic texts run 30-61 words, so the small buckets exist empty.
    assert report.slices["length=[0,10)"].n == 0
    assert report.slices["length=[10,25)"].n == 0
    assert report.slices["length=[25,inf)"].n == report.n


def test_run_in_domain_persists_artifacts(tmp_path, eval_corpus, catalog,
                                          mock_rewriter):
    out_dir = str(tmp_path / "run")
    report = run_in_domain(
        eval_corpus, "invariance", catalog, mock_rewriter, out_dir=out_dir
    )
    names = {
        "run.json", "features_train.jsonl", "features_test.jsonl",
        "model.txt", "report.jsonl", "feature_histograms.tsv",
    }
    assert {p.name for p in (tmp_path / "run").iterdir()} == names
    manifest = json.loads((tmp_path / "run" / "run.json").read_text())
    assert manifest["config_fingerprint"] == report.config_fingerprint
    assert manifest["settings"]["scheme"] == "invariance"
    saved = (tmp_path / "run" / "report.jsonl").read_text()
    assert saved == serialize_report(report)
    model = load_model(str(tmp_path / "run" / "model.txt"))
    assert model.training_meta["config_fingerprint"] == report.config_fingerprint
    train_lines = (tmp_path / "run" / "features_train.jsonl").read_text()
    assert len(train_lines.splitlines()) == 20


def test_run_in_domain_refuses_to_mix_configs(tmp_path, eval_corpus, catalog,
                                              mock_rewriter):
    out_dir = str(tmp_path / "run")
    run_in_domain(eval_corpus, "invariance", catalog, mock_rewriter,
                  out_dir=out_dir)
    # Identical rerun is fine.
    run_in_domain(eval_corpus, "invariance", catalog, mock_rewriter,
                  out_dir=out_dir)
    with pytest.raises(ValueError, match="refusing to mix"):
        run_in_domain(
            eval_corpus, "invariance", catalog, mock_rewriter,
            split_spec=SplitSpec(seed=5), out_dir=out_dir,
        )


# ---------------------------------------------------------------------------
# Out-of-domain protocol
# ---------------------------------------------------------------------------


def ood_corpora():
    news = synth_corpus(10, 0.5, seed=1, domain="news", id_prefix="n")
    reviews = synth_corpus(10, 0.5, seed=2, domain="reviews", id_prefix="r")
    blog = synth_corpus(10, 0.5, seed=3, domain="blog", id_prefix="b")
    return news, reviews, blog


def test_run_ood_transfers_across_domains(catalog, mock_rewriter):
    news, reviews, blog = ood_corpora()
    report = run_ood([news, reviews], blog, "invariance", catalog, mock_rewriter)
    assert report.meta["transfer"] == "ood"
    assert report.meta["source_domains"] == ["news", "reviews"]
    assert report.meta["target_domains"] == ["blog"]
    assert report.meta["train_size"] == 20
    assert report.n == 10
    assert report.f1 == 1.0
    assert set(report.slices) == {"domain=blog", "generator=human",
                                  "generator=mock"}


def test_run_ood_rejects_duplicate_and_overlapping_ids(catalog, mock_rewriter):
    news, reviews, blog = ood_corpora()
    clone = synth_corpus(10, 0.5, seed=4, domain="other", id_prefix="n")
    with pytest.raises(DuplicateId):
        run_ood([news, clone], blog, "invariance", catalog, mock_rewriter)
    leaky = synth_corpus(4, 0.5, seed=5, domain="blog", id_prefix="n")
    with pytest.raises(OverlapDetected):
        run_ood([news], leaky, "invariance", catalog, mock_rewriter)


def test_run_ood_rejects_empty_inputs(catalog, mock_rewriter):
    news, _, blog = ood_corpora()
    with pytest.raises(ValueError):
        run_ood([], blog, "invariance", catalog, mock_rewriter)
    with pytest.raises(ValueError):
        run_ood([news, []], blog, "invariance", catalog, mock_rewriter)
    with pytest.raises(ValueError):
        run_ood([news], [], "invariance", catalog, mock_rewriter)


# ---------------------------------------------------------------------------
# Adaptive-evasion protocol
# ---------------------------------------------------------------------------


@pytest.fixture
def adaptive_corpus():
    return synth_corpus(16, 0.5, seed=6)


def test_run_adaptive_baseline_vs_attack(adaptive_corpus, catalog, mock_rewriter):
    # Unevaded machine text keeps its marker: detection stays clean.
    baseline = run_adaptive(
        adaptive_corpus, catalog, mock_rewriter,
        train_prompt_ids=["none"], test_prompt_ids=["ev-more-edits"],
    )
    # The default mock has no configured evasion rates, so an evaded
    # document edits like human text and detection collapses.
    assert baseline.meta["train_prompts"] == ["none"]
    assert baseline.meta["test_prompts"] == ["ev-more-edits"]
    assert "evasion=ev-more-edits" in baseline.slices
    assert baseline.f1 < 0.5


def test_run_adaptive_none_on_both_sides_is_clean(adaptive_corpus, catalog,
                                                  mock_rewriter):
    report = run_adaptive(
        adaptive_corpus, catalog, mock_rewriter,
        train_prompt_ids=["ev-human-style"], test_prompt_ids=["none"],
    )
    assert report.slices["evasion=none"].n == report.n
    assert report.n == 4  # 20% of 16


def test_run_adaptive_expands_per_prompt(adaptive_corpus, catalog, mock_rewriter):
    report = run_adaptive(
        adaptive_corpus, catalog, mock_rewriter,
        train_prompt_ids=["ev-human-style"],
        test_prompt_ids=["none", "ev-more-edits"],
    )
    assert report.n == 8  # 4 base test docs, twice
    assert report.slices["evasion=none"].n == 4
    assert report.slices["evasion=ev-more-edits"].n == 4


def test_run_adaptive_prompt_validation(adaptive_corpus, catalog, mock_rewriter):
    with pytest.raises(ValueError):
        run_adaptive(adaptive_corpus, catalog, mock_rewriter,
                     train_prompt_ids=[], test_prompt_ids=["none"])
    with pytest.raises(OverlapDetected):
        run_adaptive(
            adaptive_corpus, catalog, mock_rewriter,
            train_prompt_ids=["ev-human-style"],
            test_prompt_ids=["ev-human-style"],
        )
    with pytest.raises(ValueError, match="unknown"):
        run_adaptive(
            adaptive_corpus, catalog, mock_rewriter,
            train_prompt_ids=["ev-missing"], test_prompt_ids=["none"],
        )
    with pytest.raises(ValueError, match="evasion"):
        run_adaptive(
            adaptive_corpus, catalog, mock_rewriter,
            train_prompt_ids=["inv-polish"], test_prompt_ids=["none"],
        )


def test_run_adaptive_missing_variant_without_rewriter(adaptive_corpus, catalog):
    with pytest.raises(MissingVariant):
        run_adaptive(
            adaptive_corpus, catalog, None,
            train_prompt_ids=["none"], test_prompt_ids=["ev-human-style"],
        )


def test_run_adaptive_variants_mapping_takes_precedence(adaptive_corpus, catalog,
                                                        mock_rewriter):
    # Identity variants keep the machine marker, unlike the rewriter's
    # marker swap, so detection surviving proves the mapping was used.
    variants = {
        (doc.id, "ev-human-style"): doc.text
        for doc in adaptive_corpus
        if doc.label == "machine"
    }
    report = run_adaptive(
        adaptive_corpus, catalog, mock_rewriter,
        train_prompt_ids=["none"], test_prompt_ids=["ev-human-style"],
        variants=variants,
    )
    assert report.f1 == 1.0


def test_run_adaptive_variants_without_rewriter_still_needs_one(adaptive_corpus,
                                                                catalog):
    variants = {
        (doc.id, "ev-human-style"): doc.text
        for doc in adaptive_corpus
        if doc.label == "machine"
    }
    with pytest.raises(ValueError, match="rewriter"):
        run_adaptive(
            adaptive_corpus, catalog, None,
            train_prompt_ids=["none"], test_prompt_ids=["ev-human-style"],
            variants=variants,
        )


def test_run_adaptive_persists_artifacts(tmp_path, adaptive_corpus, catalog,
                                         mock_rewriter):
    out_dir = str(tmp_path / "run")
    report = run_adaptive(
        adaptive_corpus, catalog, mock_rewriter,
        train_prompt_ids=["none"], test_prompt_ids=["ev-more-edits"],
        out_dir=out_dir,
    )
    manifest = json.loads((tmp_path / "run" / "run.json").read_text())
    assert manifest["settings"]["protocol"] == "adaptive"
    assert manifest["settings"]["train_prompts"] == ["none"]
    saved = (tmp_path / "run" / "report.jsonl").read_text()
    assert saved == serialize_report(report)
