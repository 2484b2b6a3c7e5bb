import httpx
import pytest

from conftest import FIXTURES, WORLD
from fairretrieval.markdown import normalize_markdown, raw_to_markdown, serialize_markdown
from fairretrieval.snapshots import (
    OK,
    UNDETERMINED,
    UNREACHABLE,
    FetchOutcome,
    FetchPolicy,
    FixtureTransport,
    SnapshotNotFound,
    SnapshotStore,
    content_id,
    fetch,
    fetch_all,
    freeze_outcome,
)

MD = FIXTURES / "markdown"


def test_markdown_golden():
    html = (MD / "page.html").read_text()
    assert serialize_markdown(html, "https://ex.org/page/") == (MD / "page.md").read_text()


def test_raw_payloads_become_fenced_blocks():
    assert raw_to_markdown("a,b\n1,2\n", "text/csv") == "```csv\na,b\n1,2\n```\n"


def test_normalization_collapses_blank_runs_and_trailing_space():
    assert normalize_markdown("a  \r\n\n\n\nb\t\n") == "a\n\nb\n"
    assert content_id("a  \n\n\nb") == content_id("a\n\nb\n")


def test_store_is_write_once_and_content_addressed(tmp_path):
    store = SnapshotStore(tmp_path)
    sid = store.freeze("https://a.example/", "# Title\n\ntext\n", "2025-01-01T00:00:00Z")
    path = tmp_path / f"{sid}.md"
    before = path.stat().st_mtime_ns
    assert store.freeze("https://b.example/", "# Title  \n\n\ntext", "2025-01-02T00:00:00Z") == sid
    assert path.stat().st_mtime_ns == before
    snap = SnapshotStore(tmp_path).read(sid)
    assert snap.markdown == "# Title\n\ntext\n" and snap.url == "https://a.example/"
    with pytest.raises(SnapshotNotFound):
        store.read("0" * 64)
    with pytest.raises(ValueError):
        store.freeze("https://c.example/", "  \n")


def test_failures_are_recorded(tmp_path):
    store = SnapshotStore(tmp_path)
    out = FetchOutcome("https://x.example/", UNDETERMINED, "t", reason="timeout")
    assert freeze_outcome(store, out) is out
    assert store.lookup("https://x.example/") == {"id": None, "fetched_at": "t", "status": UNDETERMINED,
                                                 "http_status": None, "reason": "timeout"}


def test_empty_page_is_frozen_as_placeholder(tmp_path):
    store = SnapshotStore(tmp_path)
    sid = freeze_outcome(store, FetchOutcome("https://e.example/", OK, "t", 200, body="<html></html>",
                                             content_type="text/html"))
    assert store.read(sid).markdown == "(empty page)\n"


@pytest.fixture
def client():
    with httpx.Client(transport=FixtureTransport.from_manifest(WORLD / "pages.json")) as c:
        yield c


@pytest.mark.parametrize("url,status,extra", [
    ("https://data.baltimore.example/dataset/air-quality", OK, {"http_status": 200}),
    ("https://data.chicago.example/crimes-2022", UNREACHABLE, {"http_status": 404}),
    ("https://journal.example.com/dataset/income-panel", UNREACHABLE, {"http_status": 401}),
    ("https://slow.example.gov/unemployment", UNDETERMINED, {"reason": "timeout"}),
    ("ftp://files.example.org/x", UNDETERMINED, {"reason": "invalid_url"}),
])
def test_fixture_fetch_statuses(client, url, status, extra):
    out = fetch(url, FetchPolicy(), client, clock=lambda: "t")
    assert out.status == status
    for k, v in extra.items():
        assert getattr(out, k) == v


def test_redirects_followed_within_limit(client):
    out = fetch("https://old.baltimore.example/air", FetchPolicy(), client)
    assert out.status == OK and out.final_url == "https://data.baltimore.example/dataset/air-quality"
    capped = fetch("https://old.baltimore.example/air", FetchPolicy(redirect_limit=0), client)
    assert (capped.status, capped.reason) == (UNDETERMINED, "too_many_redirects")


def test_redirect_loop_is_undetermined(tmp_path):
    pages = {"https://l.example/a": {"status": 302, "location": "https://l.example/b"},
             "https://l.example/b": {"status": 302, "location": "https://l.example/a"}}
    with httpx.Client(transport=FixtureTransport(pages, tmp_path)) as c:
        out = fetch("https://l.example/a", FetchPolicy(redirect_limit=3), c)
    assert out.reason == "too_many_redirects"


def test_robots_disallow(tmp_path):
    (tmp_path / "robots.txt").write_text("User-agent: *\nDisallow: /private\n")
    (tmp_path / "p.html").write_text("<p>hello</p>")
    pages = {"https://r.example/robots.txt": {"file": "robots.txt", "content_type": "text/plain"},
             "https://r.example/private/p": {"file": "p.html"},
             "https://r.example/public/p": {"file": "p.html"}}
    with httpx.Client(transport=FixtureTransport(pages, tmp_path)) as c:
        assert fetch("https://r.example/private/p", FetchPolicy(), c).reason == "robots_disallowed"
        assert fetch("https://r.example/public/p", FetchPolicy(), c).status == OK
        assert fetch("https://r.example/private/p", FetchPolicy(respect_robots=False), c).status == OK


def test_fetch_all_keeps_input_order(client):
    urls = ["https://transit.example.gov/ridership", "https://data.chicago.example/crimes-2022",
            "https://transit.example.gov/trends"]
    outs = fetch_all(urls, FetchPolicy(), client, concurrency=3)
    assert [o.url for o in outs] == urls
    assert [o.status for o in outs] == [OK, UNREACHABLE, OK]
