from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairretrieval.extract import (
    Diagnostics,
    NormalizationError,
    RawMarkupBlock,
    extract_dataset_markup,
    normalize,
    parse_iso_date,
)
from fairretrieval.index import (
    FacetConstraints,
    IndexFormatError,
    build_index,
    classify_data_type,
    classify_license,
    load_index,
    tokenize,
)
from fairretrieval.records import DatasetMetadata, Distribution, read_ndjson, write_ndjson


def test_relative_urls_resolve_against_source():
    html = ('<script type="application/ld+json">{"@type": "Dataset", "name": "Rain", "url": "../rain",'
            ' "distribution": {"contentUrl": "files/rain.csv", "encodingFormat": "CSV"}}</script>')
    rec = normalize(extract_dataset_markup(html, "https://h.example/a/b/page")[0])
    assert rec.landing_url == "https://h.example/a/rain"
    assert rec.distributions[0].content_url == "https://h.example/a/b/files/rain.csv"


def test_type_arrays_and_prefixed_types():
    html = ('<script type="application/ld+json">[{"@type": ["CreativeWork", "schema:Dataset"], "name": "A"},'
            ' {"@type": "Person", "name": "B"}]</script>')
    blocks = extract_dataset_markup(html, "https://h.example/")
    assert [b.payload["name"] for b in blocks] == ["A"]


def test_nameless_node_fails_normalization():
    with pytest.raises(NormalizationError):
        normalize(RawMarkupBlock("json_ld", {"@type": "Dataset"}, "https://h.example/"))


def test_keywords_string_is_one_element():
    html = '<script type="application/ld+json">{"@type": "Dataset", "name": "A", "keywords": "x, y"}</script>'
    rec = normalize(extract_dataset_markup(html, "https://h.example/")[0])
    assert rec.keywords == ("x, y",)


@pytest.mark.parametrize("raw,want", [
    ("2021-03-04", date(2021, 3, 4)),
    ("2021-03-04T10:00:00Z", date(2021, 3, 4)),
    ("2021", None),
    ("March 2021", None),
])
def test_iso_dates(raw, want):
    assert parse_iso_date(raw) == want


def test_bad_dates_are_diagnosed_not_fatal():
    diag = Diagnostics()
    html = '<script type="application/ld+json">{"@type": "Dataset", "name": "A", "dateModified": "soon"}</script>'
    rec = normalize(extract_dataset_markup(html, "https://h.example/")[0], diag)
    assert rec.date_modified is None and sum(diag.counts.values()) >= 1


def test_ndjson_round_trip(tmp_path):
    recs = [DatasetMetadata("A", "https://a.example/", "d", "id", "CC0", date(2020, 1, 2), ("k",),
                            (Distribution("text/csv", "https://a.example/a.csv"),), "Me")]
    write_ndjson(recs, tmp_path / "r.ndjson")
    assert list(read_ndjson(tmp_path / "r.ndjson")) == recs


@pytest.mark.parametrize("raw,cls", [
    ("CC-BY-4.0", "commercial_ok"),
    ("https://creativecommons.org/licenses/by-nc/4.0/", "noncommercial"),
    ("https://creativecommons.org/publicdomain/zero/1.0/", "commercial_ok"),
    ("CC BY-NC-SA 3.0", "noncommercial"),
    ("Creative Commons Attribution 4.0 International", "commercial_ok"),
    ("ODbL", "commercial_ok"),
    ("All rights reserved", "unknown"),
    (None, "unknown"),
])
def test_license_classes(raw, cls):
    assert classify_license(raw) == cls


def _rec(*dists, name="A", url="https://a.example/"):
    return DatasetMetadata(name, url, distributions=dists)


@pytest.mark.parametrize("dists,kind", [
    ((Distribution("text/csv"),), "tabular"),
    ((Distribution("", "https://x.example/m.geojson"),), "geospatial"),
    ((Distribution("image/png"), Distribution("text/csv")), "tabular"),
    ((Distribution("application/pdf"),), "text"),
    ((Distribution("application/zip"),), "other"),
    ((), "other"),
])
def test_data_types(dists, kind):
    assert classify_data_type(_rec(*dists)) == kind


def test_duplicate_landing_urls_keep_first():
    idx = build_index([_rec(name="First"), _rec(name="Second"), _rec(name="Third", url="https://b.example/")])
    assert [r.name for r in idx.records] == ["First", "Third"] and idx.duplicates == 1


def test_postings_on_small_corpus():
    recs = [DatasetMetadata(f"Set {i}", f"https://a.example/{i}",
                            "energy consumption by month" if i % 5 == 0 else "rainfall totals")
            for i in range(50)]
    idx = build_index(recs)
    ids, tfs = idx.postings["consumption"]
    assert list(ids) == list(range(0, 50, 5)) and set(tfs) == {1.0}
    hits = idx.search("consumption")
    assert len(hits) == 10 and all(h.matched_terms == ("consumption",) for h in hits)


def test_name_matches_outrank_description_matches():
    idx = build_index([DatasetMetadata("Rainfall", "https://a.example/1", "weather"),
                       DatasetMetadata("Weather", "https://a.example/2", "rainfall")])
    assert idx.search("rainfall")[0].record.landing_url == "https://a.example/1"


def test_search_rejects_blank_keywords():
    with pytest.raises(ValueError):
        build_index([_rec()]).search("   ")


def test_facet_validation():
    with pytest.raises(ValueError):
        FacetConstraints(date(2025, 1, 1), license_class="free")
    with pytest.raises(ValueError):
        FacetConstraints(date(2025, 1, 1), last_updated_within=0)


def test_save_load_and_header_checks(tmp_path):
    idx = build_index([DatasetMetadata("Rain", "https://a.example/1", "daily rainfall")])
    idx.save(tmp_path / "ix")
    again = load_index(tmp_path / "ix")
    assert [(h.record, h.score) for h in again.search("rain")] == [(h.record, h.score) for h in idx.search("rain")]
    meta = tmp_path / "ix" / "index.json"
    meta.write_text(meta.read_text().replace('"version": 1', '"version": 9'))
    with pytest.raises(IndexFormatError, match="version"):
        load_index(tmp_path / "ix")
    meta.write_text('{"magic": "nope", "version": 1}')
    with pytest.raises(IndexFormatError, match="magic"):
        load_index(tmp_path / "ix")
    with pytest.raises(IndexFormatError):
        load_index(tmp_path)


words = st.sampled_from("air water bus crime census rain tree bridge flood solar".split())


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(words, min_size=1, max_size=6), min_size=1, max_size=30), words)
def test_search_hits_contain_a_query_term(docs, term):
    recs = [DatasetMetadata(" ".join(d), f"https://a.example/{i}") for i, d in enumerate(docs)]
    hits = build_index(recs).search(term, limit=100)
    assert {h.record.landing_url for h in hits} == {
        r.landing_url for r in recs if term in tokenize(r.name)
    }
    assert all(h.score > 0 for h in hits)
