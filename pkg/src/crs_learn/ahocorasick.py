"""Aho-Corasick automaton backing the ``@pm`` / ``@pmFromFile`` operators."""

from __future__ import annotations

from collections import deque
from typing import Iterable

from .transforms import lowercase


class PhraseMatcher:
    """Case-insensitive multi-phrase substring search.

    The automaton is built once and only read afterwards, so a single
    instance can be shared between threads.
    """

    def __init__(self, phrases: Iterable[str]):
        self._goto: list[dict[str, int]] = [{}]
        self._fail: list[int] = [0]
        self._out: list[bool] = [False]
        count = 0
        for phrase in phrases:
            phrase = lowercase(phrase)
            if not phrase:
                continue
            count += 1
            state = 0
            for ch in phrase:
                nxt = self._goto[state].get(ch)
                if nxt is None:
                    nxt = len(self._goto)
                    self._goto[state][ch] = nxt
                    self._goto.append({})
                    self._fail.append(0)
                    self._out.append(False)
                state = nxt
            self._out[state] = True
        if not count:
            raise ValueError("PhraseMatcher needs at least one non-empty phrase")
        self._build_links()

    def _build_links(self):
        queue = deque(self._goto[0].values())
        while queue:
            state = queue.popleft()
            for ch, nxt in self._goto[state].items():
                queue.append(nxt)
                f = self._fail[state]
                while f and ch not in self._goto[f]:
                    f = self._fail[f]
                cand = self._goto[f].get(ch, 0)
                self._fail[nxt] = cand if cand != nxt else 0
                self._out[nxt] = self._out[nxt] or self._out[self._fail[nxt]]

    def search(self, text: str) -> bool:
        """True if any phrase occurs in ``text``."""
        goto, fail, out = self._goto, self._fail, self._out
        state = 0
        for ch in lowercase(text):
            while state and ch not in goto[state]:
                state = fail[state]
            state = goto[state].get(ch, 0)
            if out[state]:
                return True
        return False

    def __len__(self):
        return len(self._goto)
