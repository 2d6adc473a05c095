"""Pure-Python reference implementations of the scoring kernels.

Semantically identical to the compiled versions in ``_speedups.pyx``;
used as the fallback backend when the extension is unavailable and as
the comparison baseline in benchmarks.
"""


def lcs_length(a, b):
    """Length of the longest common subsequence of two int sequences.

    Rolling-row DP, O(len(a) * len(b)) time, O(min-row) memory.
    """
    a = list(a)
    b = list(b)
    m, n = len(a), len(b)
    if m == 0 or n == 0:
        return 0
    prev = [0] * (n + 1)
    curr = [0] * (n + 1)
    for i in range(m):
        ai = a[i]
        for j in range(n):
            if ai == b[j]:
                curr[j + 1] = prev[j] + 1
            else:
                pj = prev[j + 1]
                cj = curr[j]
                curr[j + 1] = pj if pj >= cj else cj
        prev, curr = curr, prev
    return prev[n]


def clipped_overlap_apply(ids, cur, ref):
    """Add occurrences ``ids`` to the running counts ``cur`` (mutated).

    Returns the increase in clipped overlap sum(min(cur, ref)) caused by
    the additions.  ``ids`` are indices into ``cur``/``ref`` and may repeat.
    """
    delta = 0
    for i in ids:
        if cur[i] < ref[i]:
            delta += 1
        cur[i] += 1
    return delta


def clipped_overlap_peek(ids, cur, ref):
    """Like :func:`clipped_overlap_apply` but leaves ``cur`` unchanged."""
    delta = 0
    for i in ids:
        if cur[i] < ref[i]:
            delta += 1
        cur[i] += 1
    for i in ids:
        cur[i] -= 1
    return delta
