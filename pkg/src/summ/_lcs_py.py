"""Pure-Python fallback for the LCS kernel (same contract as ``_clcs``)."""


def lcs_length(a, b) -> int:
    """Length of the longest common subsequence of two id sequences."""
    m, n = len(a), len(b)
    if m == 0 or n == 0:
        return 0
    row = [0] * (n + 1)
    for i in range(m):
        diag = 0
        ai = a[i]
        for j in range(n):
            above = row[j + 1]
            if ai == b[j]:
                val = diag + 1
            else:
                val = above if above >= row[j] else row[j]
            row[j + 1] = val
            diag = above
    return row[n]
