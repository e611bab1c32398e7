"""Okapi BM25 over code snippets, used by the lexical-retrieval ablation."""

from __future__ import annotations

import math
import re

_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+")

K1 = 1.2
B = 0.75


def tokenize(text: str) -> list[str]:
    return [t.lower() for t in _TOKEN_RE.findall(text)]


class Bm25Index:
    def __init__(self, docs: dict[str, str]):
        self.doc_ids = sorted(docs)
        self.doc_tokens = {doc_id: tokenize(docs[doc_id]) for doc_id in self.doc_ids}
        self.doc_lengths = {doc_id: len(tokens) for doc_id, tokens in self.doc_tokens.items()}
        total = sum(self.doc_lengths.values())
        self.avg_length = total / len(self.doc_ids) if self.doc_ids else 0.0
        self.doc_freq: dict[str, int] = {}
        self.term_freq: dict[str, dict[str, int]] = {}
        for doc_id, tokens in self.doc_tokens.items():
            counts: dict[str, int] = {}
            for token in tokens:
                counts[token] = counts.get(token, 0) + 1
            self.term_freq[doc_id] = counts
            for token in counts:
                self.doc_freq[token] = self.doc_freq.get(token, 0) + 1

    def _idf(self, token: str) -> float:
        n = len(self.doc_ids)
        df = self.doc_freq.get(token, 0)
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    def score(self, query: str, doc_id: str) -> float:
        counts = self.term_freq[doc_id]
        length = self.doc_lengths[doc_id]
        total = 0.0
        for token in tokenize(query):
            tf = counts.get(token, 0)
            if tf == 0:
                continue
            denom = tf + K1 * (1.0 - B + B * length / self.avg_length if self.avg_length else 1.0)
            total += self._idf(token) * tf * (K1 + 1.0) / denom
        return total

    def search(self, query: str, k: int) -> list[tuple[str, float]]:
        scored = [(doc_id, self.score(query, doc_id)) for doc_id in self.doc_ids]
        scored.sort(key=lambda t: (-t[1], t[0]))
        return scored[:k]
