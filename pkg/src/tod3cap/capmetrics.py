"""Sentence-level caption metrics: BLEU-4, ROUGE-L, METEOR and CIDEr-D.

Every metric scores one tokenized candidate against one or more tokenized
references. Inputs come from :func:`tod3cap.text.tokenize`.
"""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from functools import lru_cache
from typing import Dict, Iterable, List, Sequence, Tuple

from nltk.stem.porter import PorterStemmer

from .text import tokenize

TokenSeq = Sequence[str]

BLEU_EPS = 1e-9
ROUGE_BETA = 1.2
METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5
CIDER_N = 4
CIDER_SIGMA = 6.0
# memoized states allowed in the METEOR chunk search before falling back
METEOR_SEARCH_BUDGET = 200_000

__all__ = [
    "tokenize", "ngrams", "bleu4", "rouge_l", "lcs_length", "meteor",
    "meteor_alignment", "Corpus", "cider_d", "METRIC_LABELS",
]

METRIC_LABELS = {"cider": "C", "bleu4": "B-4", "meteor": "M", "rouge": "R"}


def ngrams(tokens: TokenSeq, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _nonempty(refs: Sequence[TokenSeq]) -> List[TokenSeq]:
    refs = [r for r in refs if len(r)]
    if not refs:
        raise ValueError("at least one non-empty reference is required")
    return refs


def bleu4(candidate: TokenSeq, references: Sequence[TokenSeq]) -> float:
    """Sentence BLEU-4 with BLEU_EPS standing in for zero n-gram precisions."""
    refs = _nonempty(references)
    if not candidate:
        return 0.0
    log_p = 0.0
    for n in range(1, 5):
        cand = ngrams(candidate, n)
        total = sum(cand.values())
        max_ref: Counter = Counter()
        for r in refs:
            max_ref |= ngrams(r, n)
        clipped = sum(min(c, max_ref[g]) for g, c in cand.items())
        p = clipped / total if clipped else BLEU_EPS
        log_p += math.log(p)
    c = len(candidate)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_p / 4.0)


def lcs_length(a: TokenSeq, b: TokenSeq) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: TokenSeq, references: Sequence[TokenSeq]) -> float:
    """LCS F-measure (beta = 1.2), best over references."""
    refs = _nonempty(references)
    if not candidate:
        return 0.0
    b2 = ROUGE_BETA ** 2
    best = 0.0
    for ref in refs:
        lcs = lcs_length(candidate, ref)
        if lcs == 0:
            continue
        p, r = lcs / len(candidate), lcs / len(ref)
        best = max(best, (1 + b2) * p * r / (r + b2 * p))
    return best


_stemmer = PorterStemmer()


@lru_cache(maxsize=65536)
def _stem(word: str) -> str:
    return _stemmer.stem(word)


def meteor_alignment(candidate: TokenSeq, reference: TokenSeq) -> Tuple[int, int]:
    """(matches, chunks) for a maximum unigram alignment with fewest chunks.

    Two tokens align when they are equal or share a Porter stem. Among all
    alignments of maximum size the one with the fewest contiguous chunks is
    found by memoized search; if the search exceeds METEOR_SEARCH_BUDGET states
    the best alignment seen so far is used.
    """
    ck = [_stem(w) for w in candidate]
    rk = [_stem(w) for w in reference]
    cc, rc = Counter(ck), Counter(rk)
    need = {c: min(cc[c], rc[c]) for c in cc if c in rc}
    total = sum(need.values())
    if total == 0:
        return 0, 0
    ref_pos: Dict[str, List[int]] = {}
    for j, c in enumerate(rk):
        ref_pos.setdefault(c, []).append(j)
    # occurrences of each class strictly after position i
    after = []
    running: Counter = Counter()
    for c in reversed(ck):
        after.append(dict(running))
        running[c] += 1
    after.reverse()

    memo: Dict[tuple, float] = {}
    budget = [METEOR_SEARCH_BUDGET]

    def solve(i: int, prev_j: int, used: int, matched: Tuple[Tuple[str, int], ...]) -> float:
        if i == len(ck):
            return 0.0
        key = (i, prev_j, used)
        if key in memo:
            return memo[key]
        c = ck[i]
        done = dict(matched)
        best = math.inf
        if c in need:
            m_c = done.get(c, 0)
            if m_c < need[c]:
                options = ref_pos[c]
                # continuing the running chunk first finds good bounds early
                options = sorted(options, key=lambda j: j != prev_j + 1)
                for j in options:
                    if used >> j & 1:
                        continue
                    step = 0 if (prev_j >= 0 and j == prev_j + 1) else 1
                    nd = dict(done)
                    nd[c] = m_c + 1
                    best = min(best, step + solve(i + 1, j, used | (1 << j),
                                                  tuple(sorted(nd.items()))))
                    if budget[0] <= 0:
                        break
            can_skip = after[i].get(c, 0) >= need[c] - m_c
        else:
            can_skip = True
        if can_skip and budget[0] > 0:
            best = min(best, solve(i + 1, -2, used, matched))
        budget[0] -= 1
        memo[key] = best
        return best

    chunks = solve(0, -2, 0, ())
    if math.isinf(chunks):
        chunks = _greedy_chunks(ck, rk)
    return total, int(chunks)


def _greedy_chunks(ck: List[str], rk: List[str]) -> int:
    used = set()
    chunks, prev = 0, -2
    for c in ck:
        js = [j for j, r in enumerate(rk) if r == c and j not in used]
        if not js:
            prev = -2
            continue
        j = prev + 1 if prev + 1 in js else js[0]
        used.add(j)
        chunks += 0 if j == prev + 1 else 1
        prev = j
    return chunks


def meteor(candidate: TokenSeq, references: Sequence[TokenSeq]) -> float:
    """METEOR from exact and stem matches only (no synonym tables)."""
    refs = _nonempty(references)
    if not candidate:
        return 0.0
    best = 0.0
    for ref in refs:
        matches, chunks = meteor_alignment(candidate, ref)
        if matches == 0:
            continue
        p, r = matches / len(candidate), matches / len(ref)
        fmean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
        penalty = METEOR_GAMMA * (chunks / matches) ** METEOR_BETA
        best = max(best, fmean * (1 - penalty))
    return best


class Corpus:
    """Document frequencies of 1..4-grams over a reference corpus."""

    def __init__(self, documents: Iterable[TokenSeq]):
        self.documents = [tuple(d) for d in documents]
        self.df: Counter = Counter()
        for doc in self.documents:
            for n in range(1, CIDER_N + 1):
                self.df.update(ngrams(doc, n).keys())
        self.log_n = math.log(len(self.documents)) if self.documents else 0.0

    def __len__(self) -> int:
        return len(self.documents)

    def digest(self) -> str:
        h = hashlib.sha256()
        for doc in sorted(self.documents):
            h.update(" ".join(doc).encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def tfidf(self, tokens: TokenSeq):
        vecs, norms = [], []
        for n in range(1, CIDER_N + 1):
            vec = {g: tf * (self.log_n - math.log(max(1.0, self.df[g])))
                   for g, tf in ngrams(tokens, n).items()}
            vecs.append(vec)
            norms.append(math.sqrt(sum(w * w for w in vec.values())))
        return vecs, norms


def cider_d(candidate: TokenSeq, references: Sequence[TokenSeq], corpus: Corpus) -> float:
    """CIDEr-D in [0, 10]: clipped TF-IDF cosine with a Gaussian length penalty."""
    if len(corpus) == 0:
        raise ValueError("CIDEr-D needs a non-empty document-frequency corpus")
    refs = _nonempty(references)
    if not candidate:
        return 0.0
    hv, hn = corpus.tfidf(candidate)
    total = 0.0
    for ref in refs:
        rv, rn = corpus.tfidf(ref)
        delta = len(candidate) - len(ref)
        penalty = math.exp(-(delta ** 2) / (2 * CIDER_SIGMA ** 2))
        for n in range(CIDER_N):
            if hn[n] == 0 or rn[n] == 0:
                continue
            dot = sum(min(w, rv[n][g]) * rv[n][g] for g, w in hv[n].items() if g in rv[n])
            total += penalty * dot / (hn[n] * rn[n])
    return 10.0 * total / (CIDER_N * len(refs))
