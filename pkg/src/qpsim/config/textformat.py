"""Tokenizer and parser for the protobuf-style text format used by scene files.

The grammar is the subset scene files need::

    document := entry*
    entry    := NAME ':' scalar | NAME ':'? '{' document '}'
    scalar   := NUMBER | STRING | NAME

Entries may be separated by whitespace, ``,`` or ``;``; ``#`` starts a
comment.  Keys may repeat, which is how repeated fields are written.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from qpsim.config.errors import ParseError

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?(?![A-Za-z_]))
  | (?P<name>[-+]?[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<punct>[{}:;,])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"', "'": "'"}


@dataclass
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> Iterator[Token]:
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(line, pos - line_start + 1, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            yield Token(kind, m.group(), line, m.start() - line_start + 1)
        pos = m.end()
    yield Token("eof", "", line, pos - line_start + 1)


def _unquote(tok: Token) -> str:
    body = tok.text[1:-1]
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\":
            i += 1
            nxt = body[i]
            if nxt not in _ESCAPES:
                raise ParseError(tok.line, tok.column + i, f"unknown escape \\{nxt}")
            out.append(_ESCAPES[nxt])
        else:
            out.append(c)
        i += 1
    return "".join(out)


Scalar = Union[float, int, str, bool]


@dataclass
class Entry:
    key: str
    value: Union[Scalar, "ConfigDocument"]
    line: int
    column: int


@dataclass
class ConfigDocument:
    """Ordered ``(key, value)`` entries; values are scalars or sub-documents."""

    entries: list = field(default_factory=list)
    line: int = 1
    column: int = 1

    def keys(self):
        return [e.key for e in self.entries]

    def get_all(self, key: str) -> list:
        return [e for e in self.entries if e.key == key]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(tokenize(text))
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: Token = None):
        tok = tok or self.tok
        return ParseError(tok.line, tok.column, msg)

    def document(self, closing: bool, start: Token = None) -> ConfigDocument:
        doc = ConfigDocument(line=start.line if start else 1, column=start.column if start else 1)
        while True:
            t = self.tok
            if t.kind == "eof":
                if closing:
                    raise self.error(f"missing '}}' for block opened at line {start.line}", t)
                return doc
            if t.kind == "punct" and t.text == "}":
                if not closing:
                    raise self.error("unmatched '}'")
                self.advance()
                return doc
            if t.kind == "punct" and t.text in ",;":
                self.advance()
                continue
            if t.kind != "name":
                raise self.error(f"expected a field name, got {t.text!r}")
            key = self.advance()
            nxt = self.tok
            if nxt.kind == "punct" and nxt.text == ":":
                self.advance()
                nxt = self.tok
                if nxt.kind == "punct" and nxt.text == "{":
                    self.advance()
                    doc.entries.append(Entry(key.text, self.document(True, nxt), key.line, key.column))
                else:
                    doc.entries.append(Entry(key.text, self.scalar(), key.line, key.column))
            elif nxt.kind == "punct" and nxt.text == "{":
                self.advance()
                doc.entries.append(Entry(key.text, self.document(True, nxt), key.line, key.column))
            else:
                raise self.error(f"expected ':' or '{{' after {key.text!r}")

    def scalar(self) -> Scalar:
        t = self.advance()
        if t.kind == "number":
            s = t.text
            if re.fullmatch(r"[-+]?\d+", s):
                return int(s)
            return float(s)
        if t.kind == "string":
            return _unquote(t)
        if t.kind == "name":
            low = t.text.lower()
            if low == "true":
                return True
            if low == "false":
                return False
            if low in ("inf", "+inf", "infinity"):
                return float("inf")
            if low in ("-inf", "-infinity"):
                return float("-inf")
            return t.text
        raise self.error(f"expected a value, got {t.text or 'end of input'!r}", t)


def parse_document(text: str) -> ConfigDocument:
    """Parses text into a :class:`ConfigDocument`; raises :class:`ParseError`."""
    if not isinstance(text, str):
        raise ParseError(1, 1, f"expected text, got {type(text).__name__}")
    return _Parser(text).document(False)


def format_scalar(v: Scalar) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if v != v:
            raise ValueError("NaN is not representable in scene files")
        if v in (float("inf"), float("-inf")):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    out = v.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    return f'"{out}"'


def render_document(doc: ConfigDocument, indent: int = 0) -> str:
    pad = "  " * indent
    lines = []
    for e in doc.entries:
        if isinstance(e.value, ConfigDocument):
            if all(not isinstance(c.value, ConfigDocument) for c in e.value.entries) and len(e.value) <= 4:
                inner = " ".join(f"{c.key}: {format_scalar(c.value)}" for c in e.value.entries)
                lines.append(f"{pad}{e.key} {{ {inner} }}" if inner else f"{pad}{e.key} {{ }}")
            else:
                lines.append(f"{pad}{e.key} {{")
                lines.append(render_document(e.value, indent + 1))
                lines.append(f"{pad}}}")
        else:
            lines.append(f"{pad}{e.key}: {format_scalar(e.value)}")
    return "\n".join(x for x in lines if x)
