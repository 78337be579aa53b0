"""Baseline retrieval methods: Okapi BM25 and flat dense cosine search."""
from __future__ import annotations

import math
from collections import Counter

import numpy as np

from ..embed import DimensionMismatch


class Bm25Index:
    """Okapi BM25 (k1=1.2, b=0.75) over whitespace tokens, with posting lists.

    idf is the classic Robertson form log((N - n + 0.5) / (n + 0.5)); scores
    of documents sharing no query term stay exactly 0, and final ordering
    breaks ties lexicographically by document id.
    """

    def __init__(self, docs: dict[str, str], k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b
        self.ids = sorted(docs)
        tokenized = [docs[i].split() for i in self.ids]
        self.doc_len = np.array([len(t) for t in tokenized], dtype=np.float64)
        self.avgdl = float(self.doc_len.mean()) if len(self.ids) else 0.0
        self.postings: dict[str, list[tuple[int, int]]] = {}
        for doc_i, tokens in enumerate(tokenized):
            for term, tf in Counter(tokens).items():
                self.postings.setdefault(term, []).append((doc_i, tf))
        n_docs = len(self.ids)
        self.idf = {
            term: math.log((n_docs - len(plist) + 0.5) / (len(plist) + 0.5))
            for term, plist in self.postings.items()
        }

    def scores(self, query_text: str) -> np.ndarray:
        out = np.zeros(len(self.ids))
        if self.avgdl == 0.0:
            return out
        norm = self.k1 * (1 - self.b + self.b * self.doc_len / self.avgdl)
        for term in query_text.split():
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf[term]
            for doc_i, tf in plist:
                out[doc_i] += idf * tf * (self.k1 + 1) / (tf + norm[doc_i])
        return out

    def search(self, query_text: str, n: int) -> list[str]:
        scores = self.scores(query_text)
        order = np.lexsort((self.ids, -scores))
        return [self.ids[i] for i in order[:n]]


def bm25_search(docs: dict[str, str], task_text: str, n: int) -> list[str]:
    return Bm25Index(docs).search(task_text, n)


class DenseIndex:
    """Exact cosine scan over raw (uncompressed) embeddings."""

    def __init__(self, ids: list[str], matrix: np.ndarray):
        if len(ids) != matrix.shape[0]:
            raise ValueError("ids and matrix disagree on row count")
        order = np.argsort(np.asarray(ids))
        self.ids = [ids[i] for i in order]
        self.matrix = np.asarray(matrix, dtype=np.float64)[order]
        self.norms = np.linalg.norm(self.matrix, axis=1)

    def search(self, query_vec: np.ndarray, n: int) -> list[str]:
        q = np.asarray(query_vec, dtype=np.float64)
        if q.shape[0] != self.matrix.shape[1]:
            raise DimensionMismatch(
                f"query has dim {q.shape[0]}, index has dim {self.matrix.shape[1]}"
            )
        qn = float(np.linalg.norm(q))
        denom = np.maximum(self.norms * qn, 1e-300)
        cosines = (self.matrix @ q) / denom
        order = np.lexsort((self.ids, -cosines))
        return [self.ids[i] for i in order[:n]]


def flat_dense_search(ids: list[str], matrix: np.ndarray, query_vec: np.ndarray, n: int) -> list[str]:
    return DenseIndex(ids, matrix).search(query_vec, n)
