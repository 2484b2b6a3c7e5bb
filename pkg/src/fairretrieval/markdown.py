"""HTML to Markdown serialization for frozen page snapshots.

Boilerplate containers (script, style, nav, footer, ...) are dropped.
Link targets are resolved to absolute URLs but otherwise kept exactly,
because accessibility judging looks at file extensions in hrefs.
"""
from __future__ import annotations

import re
from html.parser import HTMLParser
from urllib.parse import urljoin

DROP = frozenset(
    "script style nav footer noscript template head svg iframe canvas button select".split()
)
BLOCK = frozenset(
    "p div section article main aside header blockquote figure figcaption form "
    "dl dt dd address details summary fieldset".split()
)
VOID = frozenset("area base br col embed hr img input link meta param source track wbr".split())
_WS = re.compile(r"\s+")
_LINK_OPEN = "\x00"  # placeholder for an anchor's "[" until the anchor closes


def _cell(text: str) -> str:
    return _WS.sub(" ", text).strip().replace("|", "\\|")


class _Serializer(HTMLParser):
    def __init__(self, base_url: str):
        super().__init__(convert_charrefs=True)
        self.base = base_url
        self.blocks: list[str] = []
        self.item_flags: list[int] = []  # list serial for list items (joined tightly), else 0
        self.list_serial = 0
        self.inline: list[str] = []
        self.drop_depth = 0
        self.links: list[tuple[str, int]] = []  # (href, opened)
        self.lists: list[list] = []  # [kind, counter, serial]
        self.heading: int | None = None
        self.pending_prefix = ""
        self.pre = 0
        self.pre_buf: list[str] = []
        self.tables: list[dict] = []

    # -- helpers -------------------------------------------------------
    def _flush(self, prefix: str = "") -> None:
        text = _WS.sub(" ", "".join(self.inline).replace(_LINK_OPEN, "")).strip()
        self.inline = []
        if text:
            item = self.lists[-1][2] if self.pending_prefix and not prefix and self.lists else 0
            self._block((prefix or self.pending_prefix) + text, item)
            self.pending_prefix = ""

    def _block(self, text: str, item: int = 0) -> None:
        self.blocks.append(text)
        self.item_flags.append(item)

    def _abs(self, href: str) -> str:
        href = href.strip()
        try:
            return urljoin(self.base, href) if self.base else href
        except ValueError:
            return href

    def _out(self, text: str) -> None:
        if self.tables and self.tables[-1]["cell"] is not None:
            self.tables[-1]["cell"].append(text)
        else:
            self.inline.append(text)

    # -- parser callbacks ----------------------------------------------
    def handle_starttag(self, tag, attrs):
        a = {k: (v or "") for k, v in attrs}
        if self.drop_depth:
            if tag not in VOID:
                self.drop_depth += 1
            return
        if tag in DROP or a.get("aria-hidden") == "true" or "hidden" in a:
            if tag not in VOID:
                self.drop_depth = 1
            return
        if self.pre:
            return
        if tag in ("h1", "h2", "h3", "h4", "h5", "h6"):
            self._flush()
            self.heading = int(tag[1])
        elif tag in BLOCK:
            self._flush()
        elif tag == "br":
            if self.tables and self.tables[-1]["cell"] is not None:
                self._out(" ")
            else:
                self._flush()
        elif tag == "hr":
            self._flush()
            self._block("---")
        elif tag in ("ul", "ol"):
            self._flush()
            self.list_serial += 1
            self.lists.append([tag, 0, self.list_serial])
        elif tag == "li":
            self._flush()
            if self.lists:
                self.lists[-1][1] += 1
                kind, count, _ = self.lists[-1]
                indent = "  " * (len(self.lists) - 1)
                self.pending_prefix = indent + (f"{count}. " if kind == "ol" else "- ")
        elif tag == "a":
            href = a.get("href", "")
            if href and not href.lower().startswith("javascript:"):
                self._out(_LINK_OPEN)
                self.links.append((self._abs(href), 1))
            else:
                self.links.append(("", 0))
        elif tag == "img":
            src = a.get("src", "")
            if src:
                self._out(f"![{_cell(a.get('alt', ''))}]({self._abs(src)})")
        elif tag == "input":
            kind = a.get("type", "text").lower()
            if kind in ("text", "search"):
                label = a.get("placeholder") or a.get("aria-label") or a.get("name") or kind
                self._out(f"[{kind} input: {_cell(label)}]")
        elif tag in ("strong", "b"):
            self._out("**")
        elif tag in ("em", "i"):
            self._out("*")
        elif tag == "code":
            self._out("`")
        elif tag == "pre":
            self._flush()
            self.pre = 1
            self.pre_buf = []
        elif tag == "table":
            self._flush()
            self.tables.append({"rows": [], "row": None, "cell": None, "header": False})
        elif tag == "tr" and self.tables:
            t = self.tables[-1]
            t["row"] = []
            t["rows"].append((t["row"], False))
        elif tag in ("td", "th") and self.tables:
            t = self.tables[-1]
            if t["row"] is None:
                t["row"] = []
                t["rows"].append((t["row"], False))
            if tag == "th" and len(t["rows"]) == 1:
                t["rows"][0] = (t["row"], True)
            t["cell"] = []

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag not in VOID:
            self.handle_endtag(tag)

    def handle_endtag(self, tag):
        if self.drop_depth:
            if tag not in VOID:
                self.drop_depth -= 1
            return
        if self.pre:
            if tag == "pre":
                self.pre = 0
                body = "".join(self.pre_buf).strip("\n")
                if body.strip():
                    self._block("```\n" + body + "\n```")
            return
        if tag in ("h1", "h2", "h3", "h4", "h5", "h6"):
            level = self.heading or int(tag[1])
            self.heading = None
            self._flush("#" * level + " ")
        elif tag in BLOCK:
            self._flush()
        elif tag in ("ul", "ol"):
            self._flush()
            if self.lists:
                self.lists.pop()
        elif tag == "li":
            self._flush()
        elif tag == "a":
            if self.links:
                href, opened = self.links.pop()
                if opened:
                    self._close_link(href)
        elif tag in ("strong", "b"):
            self._out("**")
        elif tag in ("em", "i"):
            self._out("*")
        elif tag == "code":
            self._out("`")
        elif tag in ("td", "th") and self.tables:
            t = self.tables[-1]
            if t["cell"] is not None and t["row"] is not None:
                t["row"].append(_cell("".join(t["cell"]).replace(_LINK_OPEN, "")))
            t["cell"] = None
        elif tag == "tr" and self.tables:
            self.tables[-1]["row"] = None
        elif tag == "table" and self.tables:
            self._emit_table(self.tables.pop())

    def _close_link(self, href: str) -> None:
        target = self.tables[-1]["cell"] if self.tables and self.tables[-1]["cell"] is not None else self.inline
        # find the matching "[" we opened and normalize the anchor text
        for idx in range(len(target) - 1, -1, -1):
            if target[idx] == _LINK_OPEN:
                text = _WS.sub(" ", "".join(target[idx + 1 :])).strip()
                del target[idx:]
                target.append(f"[{text or href}]({href})")
                return
        target.append(f"[{href}]({href})")

    def _emit_table(self, t: dict) -> None:
        rows = [(r, h) for r, h in t["rows"] if r]
        if not rows:
            return
        width = max(len(r) for r, _ in rows)
        lines = []
        header, is_header = rows[0]
        body = rows[1:] if is_header else rows
        head = header if is_header else [""] * width
        pad = lambda r: list(r) + [""] * (width - len(r))  # noqa: E731
        lines.append("| " + " | ".join(pad(head)) + " |")
        lines.append("|" + "|".join(["---"] * width) + "|")
        for r, _ in body:
            lines.append("| " + " | ".join(pad(r)) + " |")
        self._flush()
        self._block("\n".join(lines))

    def handle_data(self, data):
        if self.drop_depth:
            return
        if self.pre:
            self.pre_buf.append(data)
            return
        self._out(data)

    def result(self) -> str:
        self._flush()
        while self.tables:
            self._emit_table(self.tables.pop())
        parts = []
        for i, text in enumerate(self.blocks):
            if i:
                tight = self.item_flags[i] != 0 and self.item_flags[i] == self.item_flags[i - 1]
                parts.append("\n" if tight else "\n\n")
            parts.append(text)
        return normalize_markdown("".join(parts))


def normalize_markdown(text: str) -> str:
    """Canonical form used for hashing: LF endings, no trailing spaces, one final newline."""
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    lines = [line.rstrip() for line in text.split("\n")]
    out = "\n".join(lines).strip("\n")
    out = re.sub(r"\n{3,}", "\n\n", out)
    return out + "\n" if out else ""


def serialize_markdown(html: str, base_url: str = "") -> str:
    parser = _Serializer(base_url)
    parser.feed(html)
    parser.close()
    return parser.result()


def raw_to_markdown(body: str, content_type: str) -> str:
    """Machine-readable bodies (CSV, JSON, ...) are frozen verbatim in a fenced block."""
    lang = content_type.split(";")[0].strip().rsplit("/", 1)[-1]
    lang = {"tab-separated-values": "tsv", "plain": ""}.get(lang, lang)
    return normalize_markdown(f"```{lang}\n{body.strip()}\n```")
