"""SecLang transformation functions (``t:`` actions).

Values are latin-1 ``str`` objects so that every character stands for one
byte, which is how ModSecurity sees request data.
"""

from __future__ import annotations

import base64
import binascii
import re
from typing import Callable, Iterable

from .errors import UnsupportedTransformationError

# ModSecurity's isspace() plus the non-breaking space it also folds
WHITESPACE = " \t\n\r\f\v\xa0"
_WS_RUN = re.compile(f"[{re.escape(WHITESPACE)}]+")
_ASCII_LOWER = str.maketrans("ABCDEFGHIJKLMNOPQRSTUVWXYZ", "abcdefghijklmnopqrstuvwxyz")
_ASCII_UPPER = str.maketrans("abcdefghijklmnopqrstuvwxyz", "ABCDEFGHIJKLMNOPQRSTUVWXYZ")
_HEX = set("0123456789abcdefABCDEF")


def lowercase(s):
    return s.translate(_ASCII_LOWER)


def uppercase(s):
    return s.translate(_ASCII_UPPER)


def _url_decode(s, unicode):
    out = []
    i, n = 0, len(s)
    while i < n:
        c = s[i]
        if c == "%":
            if (unicode and i + 5 < n and s[i + 1] in "uU"
                    and all(ch in _HEX for ch in s[i + 2:i + 6])):
                code = int(s[i + 2:i + 6], 16)
                low = code & 0xFF
                # full-width ASCII (U+FF01..U+FF5E) folds onto its ASCII twin
                if 0xFF01 <= code <= 0xFF5E:
                    low = (low + 0x20) & 0xFF
                out.append(chr(low))
                i += 6
                continue
            if i + 2 < n and s[i + 1] in _HEX and s[i + 2] in _HEX:
                out.append(chr(int(s[i + 1:i + 3], 16)))
                i += 3
                continue
            out.append(c)
        elif c == "+":
            out.append(" ")
        else:
            out.append(c)
        i += 1
    return "".join(out)


def url_decode(s):
    return _url_decode(s, unicode=False)


def url_decode_uni(s):
    return _url_decode(s, unicode=True)


def compress_whitespace(s):
    return _WS_RUN.sub(" ", s)


def remove_whitespace(s):
    return _WS_RUN.sub("", s)


def remove_nulls(s):
    return s.replace("\x00", "")


def replace_nulls(s):
    return s.replace("\x00", " ")


def remove_comments(s):
    """Drop ``/* */`` and ``<!-- -->`` blocks; ``--`` and ``#`` drop the rest."""
    out = []
    i, n = 0, len(s)
    while i < n:
        if s.startswith("/*", i):
            end = s.find("*/", i + 2)
            if end == -1:
                break
            i = end + 2
        elif s.startswith("<!--", i):
            end = s.find("-->", i + 4)
            if end == -1:
                break
            i = end + 3
        elif s.startswith("--", i) or s[i] == "#":
            break
        else:
            out.append(s[i])
            i += 1
    return "".join(out)


def replace_comments(s):
    """Replace each ``/* ... */`` (terminated or not) with one space."""
    out = []
    i, n = 0, len(s)
    while i < n:
        if s.startswith("/*", i):
            out.append(" ")
            end = s.find("*/", i + 2)
            if end == -1:
                break
            i = end + 2
        else:
            out.append(s[i])
            i += 1
    return "".join(out)


def remove_comments_char(s):
    for seq in ("/*", "*/", "--", "#"):
        s = s.replace(seq, "")
    return s


_NAMED_ENTITIES = {"quot": '"', "amp": "&", "lt": "<", "gt": ">", "nbsp": "\xa0"}
_ENTITY = re.compile(
    r"&(?:#[xX]([0-9a-fA-F]+)|#([0-9]+)|(quot|amp|lt|gt|nbsp));?"
)


def html_entity_decode(s):
    def repl(m):
        if m.group(1) is not None:
            return chr(int(m.group(1), 16) & 0xFF)
        if m.group(2) is not None:
            return chr(int(m.group(2)) & 0xFF)
        return _NAMED_ENTITIES[m.group(3).lower()]

    return _ENTITY.sub(repl, s)


_UTF8_SEQ = re.compile(
    "[\xc2-\xdf][\x80-\xbf]|[\xe0-\xef][\x80-\xbf]{2}|[\xf0-\xf4][\x80-\xbf]{3}"
)


def utf8_to_unicode(s):
    """Rewrite valid UTF-8 multibyte sequences as ``%uHHHH`` escapes."""
    def repl(m):
        try:
            ch = m.group(0).encode("latin-1").decode("utf-8")
        except UnicodeDecodeError:
            return m.group(0)
        return f"%u{ord(ch) & 0xFFFF:04x}"

    return _UTF8_SEQ.sub(repl, s)


_SQL_HEX = re.compile(r"0x((?:[0-9a-fA-F]{2})+)")


def sql_hex_decode(s):
    return _SQL_HEX.sub(lambda m: bytes.fromhex(m.group(1)).decode("latin-1"), s)


def hex_decode(s):
    try:
        return bytes.fromhex(s).decode("latin-1")
    except ValueError:
        return s


def base64_decode(s):
    try:
        return base64.b64decode(s.encode("latin-1"), validate=False).decode("latin-1")
    except (binascii.Error, ValueError):
        return s


def length(s):
    return str(len(s))


def trim(s):
    return s.strip(WHITESPACE)


def trim_left(s):
    return s.lstrip(WHITESPACE)


def trim_right(s):
    return s.rstrip(WHITESPACE)


def cmd_line(s):
    s = re.sub(r"[\\\"'^]", "", s)
    s = re.sub(r"[\s,;]+", " ", s)
    s = re.sub(r" (?=[/(])", "", s)
    return lowercase(s)


def normalize_path(s):
    parts = []
    absolute = s.startswith("/")
    for seg in s.split("/"):
        if seg in ("", "."):
            continue
        if seg == "..":
            if parts and parts[-1] != "..":
                parts.pop()
            elif not absolute:
                parts.append(seg)
            continue
        parts.append(seg)
    out = "/".join(parts)
    if absolute:
        out = "/" + out
    if s.endswith("/") and out and not out.endswith("/"):
        out += "/"
    return out


TRANSFORMATIONS: dict[str, Callable[[str], str]] = {
    "lowercase": lowercase,
    "uppercase": uppercase,
    "urlDecode": url_decode,
    "urlDecodeUni": url_decode_uni,
    "compressWhitespace": compress_whitespace,
    "removeWhitespace": remove_whitespace,
    "removeComments": remove_comments,
    "replaceComments": replace_comments,
    "removeCommentsChar": remove_comments_char,
    "htmlEntityDecode": html_entity_decode,
    "removeNulls": remove_nulls,
    "replaceNulls": replace_nulls,
    "utf8toUnicode": utf8_to_unicode,
    "sqlHexDecode": sql_hex_decode,
    "hexDecode": hex_decode,
    "base64Decode": base64_decode,
    "length": length,
    "trim": trim,
    "trimLeft": trim_left,
    "trimRight": trim_right,
    "cmdLine": cmd_line,
    "normalizePath": normalize_path,
    "normalisePath": normalize_path,
}

SUPPORTED = frozenset(TRANSFORMATIONS) | {"none"}


def check_chain(chain: Iterable[str]) -> None:
    for name in chain:
        if name not in SUPPORTED:
            raise UnsupportedTransformationError(name)


def transform(value: str, chain: Iterable[str]) -> str:
    """Apply ``chain`` left to right; ``none`` restarts from ``value``."""
    out = value
    for name in chain:
        if name == "none":
            out = value
            continue
        try:
            fn = TRANSFORMATIONS[name]
        except KeyError:
            raise UnsupportedTransformationError(name) from None
        out = fn(out)
    return out


def transform_stages(value: str, chain: Iterable[str]) -> list[str]:
    """Every distinct intermediate value, raw first (``multiMatch`` semantics)."""
    stages = [value]
    out = value
    for name in chain:
        if name == "none":
            out = value
            continue
        try:
            out = TRANSFORMATIONS[name](out)
        except KeyError:
            raise UnsupportedTransformationError(name) from None
        if out != stages[-1] and out not in stages:
            stages.append(out)
    return stages
