"""Pure-Python twin of the compiled Levenshtein kernel."""


def levenshtein(a: str, b: str) -> int:
    n, m = len(a), len(b)
    lo = 0
    while lo < n and lo < m and a[lo] == b[lo]:
        lo += 1
    while n > lo and m > lo and a[n - 1] == b[m - 1]:
        n -= 1
        m -= 1
    a, b = a[lo:n], b[lo:m]
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)

    row = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        diag = row[0]
        row[0] = i
        for j, cb in enumerate(b, 1):
            up = row[j]
            if ca == cb:
                row[j] = diag
            else:
                row[j] = min(diag, up, row[j - 1]) + 1
            diag = up
    return row[-1]
