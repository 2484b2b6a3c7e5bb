import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairretrieval.review import (
    ANNOTATED,
    GOLD_SAMPLE,
    JUDGE_FAILURE,
    MERGED,
    OPEN,
    UNDETERMINED_SCRAPE,
    ReviewQueue,
    ReviewStateError,
    sample_gold_set,
)

R = {"query_id": "q1", "strategy": "baseline", "url": "https://a.example/", "rank": 1, "dataset_name": "A"}
L1 = {"relevance": 2, "accessibility": 6, "page_type": "DATA_REGISTRY"}
L2 = {"relevance": "1", "accessibility": "6", "page_type": "data_registry"}


def test_route_is_idempotent():
    q = ReviewQueue()
    a = q.route(R, UNDETERMINED_SCRAPE, note="timeout")
    assert q.route(R, UNDETERMINED_SCRAPE) is a
    assert q.route(R, JUDGE_FAILURE) is not a
    assert len(q.items) == 2 and a.state == OPEN
    with pytest.raises(ValueError):
        q.route(R, "bored")


def test_merge_on_agreement():
    q = ReviewQueue()
    item = q.route(R, GOLD_SAMPLE)
    q.annotate(item.item_id, "ann1", L1)
    assert item.state == ANNOTATED
    with pytest.raises(ReviewStateError, match="two annotations"):
        q.merge_consensus(item.item_id)
    q.annotate(item.item_id, "ann2", dict(L1))
    q.merge_consensus(item.item_id)
    assert item.state == MERGED and item.final == L1 and item.consensus is False
    with pytest.raises(ReviewStateError):
        q.annotate(item.item_id, "ann3", L1)


def test_disagreement_needs_resolution():
    q = ReviewQueue()
    item = q.route(R, GOLD_SAMPLE)
    q.annotate(item.item_id, "ann1", L1)
    q.annotate(item.item_id, "ann2", L2)
    with pytest.raises(ReviewStateError, match="disagree"):
        q.merge_consensus(item.item_id)
    q.merge_consensus(item.item_id, {"relevance": 1, "accessibility": 6, "page_type": "DATA_REGISTRY"})
    assert item.consensus is True and item.final["relevance"] == 1


def test_annotations_are_validated():
    q = ReviewQueue()
    item = q.route(R, GOLD_SAMPLE)
    with pytest.raises(ValueError):
        q.annotate(item.item_id, "a", {"relevance": 2, "accessibility": 6})
    with pytest.raises(ValueError):
        q.annotate(item.item_id, "a", {**L1, "relevance": 9})


def test_export_import_round_trip(tmp_path):
    path = tmp_path / "queue.ndjson"
    q = ReviewQueue(path)
    item = q.route(R, UNDETERMINED_SCRAPE)
    q.save()
    for who in ("ann1", "ann2"):
        sheet = tmp_path / f"{who}.json"
        assert ReviewQueue(path).export(sheet, who) == 1
        rows = json.loads(sheet.read_text())
        rows[0]["labels"] = L1
        sheet.write_text(json.dumps(rows))
        q2 = ReviewQueue(path)
        assert q2.import_annotations(sheet) == 1
        q2.save()
    q3 = ReviewQueue(path)
    q3.merge_consensus(item.item_id)
    q3.save()
    assert ReviewQueue(path).merged(UNDETERMINED_SCRAPE)[0].final == L1
    assert ReviewQueue(path).open_items() == []


def test_incomplete_rows_are_skipped(tmp_path):
    q = ReviewQueue()
    item = q.route(R, GOLD_SAMPLE)
    sheet = tmp_path / "s.json"
    q.export(sheet, "ann1")
    assert q.import_annotations(sheet) == 0 and item.state == OPEN


def test_gold_sample_size_and_determinism():
    recs = list(range(276))
    strata = lambda i: ("registry", "narrative", "portal", "none")[i % 4]  # noqa: E731
    a = sample_gold_set(recs, 0.11, strata, random.Random(7))
    b = sample_gold_set(recs, 0.11, strata, random.Random(7))
    assert len(a) == 30 and a == b and a == sorted(a)
    assert set(Counter(map(strata, a))) == {"registry", "narrative", "portal", "none"}
    assert sample_gold_set(recs, 0.11, strata, random.Random(8)) != a


def test_gold_fraction_bounds():
    with pytest.raises(ValueError):
        sample_gold_set([1, 2], 1.0, None, random.Random(0))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=300), st.floats(0.01, 0.99), st.integers(0, 99))
def test_gold_sample_properties(labels, fraction, seed):
    recs = list(enumerate(labels))
    out = sample_gold_set(recs, fraction, lambda r: r[1], random.Random(seed))
    assert len(out) == min(len(recs), int(fraction * len(recs) + 0.5))
    assert len(set(out)) == len(out) and out == sorted(out)
    sizes = Counter(labels)
    got = Counter(r[1] for r in out)
    for k, n in sizes.items():
        # every stratum gets its floor share
        assert got[k] >= int(fraction * n)
