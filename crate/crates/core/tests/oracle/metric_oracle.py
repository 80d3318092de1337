#!/usr/bin/env python3
"""Brute-force reference values for the 3-pair metric fixture.

Counts n-grams by enumerating every start index, computes LCS by
exhaustive recursion with memoization, and never shares code with the
Rust implementation. Run from the crate root:

    python3 tests/oracle/metric_oracle.py fixtures/metrics/three_pairs.json \
        > fixtures/metrics/three_pairs.golden.json
"""
import json
import math
import sys
from fractions import Fraction
from functools import lru_cache


def tokenize(text):
    out = []
    for word in text.lower().split():
        chars = list(word)
        while chars and not chars[0].isalnum():
            chars.pop(0)
        while chars and not chars[-1].isalnum():
            chars.pop()
        if chars:
            out.append("".join(chars))
    return out


def grams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def bleu(cands, refs, max_n):
    log_sum = 0.0
    for n in range(1, max_n + 1):
        matched = total = 0
        for c, r in zip(cands, refs):
            cg, rg = grams(c, n), grams(r, n)
            for g in set(cg):
                matched += min(cg.count(g), rg.count(g))
            total += len(cg)
        if matched == 0 or total == 0:
            return 0.0
        log_sum += math.log(matched / total)
    c = sum(len(x) for x in cands)
    r = sum(len(x) for x in refs)
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    return 100 * bp * math.exp(log_sum / max_n)


def lcs(a, b):
    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))
    return go(0, 0)


def rouge_l(cands, refs):
    fs = []
    for c, r in zip(cands, refs):
        l = lcs(tuple(c), tuple(r))
        if l == 0:
            fs.append(0.0)
            continue
        p, rc = Fraction(l, len(c)), Fraction(l, len(r))
        fs.append(float(2 * p * rc / (p + rc)))
    return 100 * sum(fs) / len(fs)


def distinct(docs, n):
    vals = [len(set(grams(d, n))) / len(grams(d, n)) for d in docs if len(d) >= n]
    return 100 * sum(vals) / len(vals)


def repetition(docs, n):
    vals = []
    for d in docs:
        if len(d) < n:
            continue
        g = grams(d, n)
        types = set(g)
        vals.append(sum(1 for t in types if g.count(t) >= 2) / len(types))
    return 100 * sum(vals) / len(vals)


def main():
    data = json.load(open(sys.argv[1]))
    cands = [tokenize(s) for s in data["candidates"]]
    refs = [tokenize(s) for s in data["references"]]
    out = {
        "bleu_2": bleu(cands, refs, 2),
        "bleu_3": bleu(cands, refs, 3),
        "bleu_4": bleu(cands, refs, 4),
        "rouge_l": rouge_l(cands, refs),
        "distinct_3": distinct(cands, 3),
        "repetition_3": repetition(cands, 3),
    }
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
