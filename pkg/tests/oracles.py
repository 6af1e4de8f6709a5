"""Independent, deliberately naive reference implementations.

Nothing here imports the package's numerics; each function is a direct
loop over the definition so it can serve as an oracle for the vectorised
code.
"""

from __future__ import annotations

import math


def naive_attention(q, keys, values, rows=None):
    """Masked softmax attention with explicit loops over rows and channels."""
    d = len(q)
    rows = range(len(keys)) if rows is None else sorted(rows)
    logits = []
    for i in rows:
        logits.append((i, sum(q[j] * keys[i][j] for j in range(d)) / math.sqrt(d)))
    top = max(l for _, l in logits)
    weights = [(i, math.exp(l - top)) for i, l in logits]
    z = math.fsum(w for _, w in weights)
    out = [0.0] * len(values[0])
    for i, w in weights:
        for c in range(len(out)):
            out[c] += w / z * values[i][c]
    return out


def naive_recurrence(gates, inputs):
    """State after every step of s_t = g_t s_{t-1} + (1 - g_t) x_t, s_0 = 0."""
    T, d = len(inputs), len(inputs[0])
    state = [0.0] * d
    out = []
    for t in range(T):
        state = [gates[t][c] * state[c] + (1.0 - gates[t][c]) * inputs[t][c] for c in range(d)]
        out.append(list(state))
    return out


def naive_unrolled(gates, t, channel):
    """Weight of input s (1..t) in state t, from the product formula."""
    w = []
    for s in range(1, t + 1):
        prod = 1.0
        for r in range(s + 1, t + 1):
            prod *= gates[r - 1][channel]
        w.append((1.0 - gates[s - 1][channel]) * prod)
    return w


def brute_block_max(q, block):
    return max(sum(a * b for a, b in zip(q, k)) for k in block)


def sort_topk(scores, k):
    """Top-k by full sort; ties to the smaller index; ascending output."""
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(ranked[:k])


def cosine(a, b):
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return sum(x * y for x, y in zip(a, b)) / (na * nb)
