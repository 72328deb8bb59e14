"""Pure-Python kernels.  ``_ckernels.pyx`` mirrors these signatures exactly."""


def bpe_encode(char_ids, rank_table, merge_table, n_vocab):
    """Apply rank-ordered pair merges to a sequence of base-symbol ids.

    ``rank_table[a * n_vocab + b]`` is the merge rank of the pair (a, b), or -1;
    ``merge_table`` holds the id the pair merges into.
    """
    seq = [int(c) for c in char_ids]
    while len(seq) > 1:
        best = -1
        pos = -1
        for k in range(len(seq) - 1):
            r = rank_table[seq[k] * n_vocab + seq[k + 1]]
            if r >= 0 and (best < 0 or r < best):
                best = r
                pos = k
        if pos < 0:
            break
        merged = merge_table[seq[pos] * n_vocab + seq[pos + 1]]
        # merge every occurrence of the winning pair, left to right
        a, b = seq[pos], seq[pos + 1]
        out = []
        k = 0
        while k < len(seq):
            if k + 1 < len(seq) and seq[k] == a and seq[k + 1] == b:
                out.append(merged)
                k += 2
            else:
                out.append(seq[k])
                k += 1
        seq = out
    return seq


def trie_encode(char_ids, trie_next, trie_tok, n_alpha):
    """Greedy longest-match segmentation against a character trie rooted at node 0."""
    out = []
    n = len(char_ids)
    pos = 0
    while pos < n:
        node = 0
        best_tok = -1
        best_end = pos
        k = pos
        while k < n:
            node = trie_next[node * n_alpha + char_ids[k]]
            if node < 0:
                break
            k += 1
            if trie_tok[node] >= 0:
                best_tok = trie_tok[node]
                best_end = k
        if best_tok < 0:
            raise ValueError(f"no lexicon entry matches at position {pos}")
        out.append(int(best_tok))
        pos = best_end
    return out


def walk_offsets(off_t, off_s, first_t, first_s):
    """Two-pointer walk over end offsets; zeros mark special tokens.

    Returns (t_start, t_end, s_start, s_end) per matched offset, inclusive.
    """
    m = len(off_t)
    n = len(off_s)
    i = 0
    j = 0
    last_t = first_t
    last_s = first_s
    pairs = []
    while i < m and j < n:
        if off_t[i] == 0:
            i += 1
            continue
        if off_s[j] == 0:
            j += 1
            continue
        if off_t[i] == off_s[j]:
            pairs.append((last_t, i, last_s, j))
            last_t = i + 1
            last_s = j + 1
            i += 1
            j += 1
        elif off_t[i] < off_s[j]:
            i += 1
        else:
            j += 1
    return pairs


def lcs_offsets(a, b):
    """Classical O(mn) longest common subsequence, recovered by backtracking."""
    m = len(a)
    n = len(b)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m - 1, -1, -1):
        row = table[i]
        below = table[i + 1]
        ai = a[i]
        for j in range(n - 1, -1, -1):
            if ai == b[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = below[j] if below[j] >= row[j + 1] else row[j + 1]
    out = []
    i = j = 0
    while i < m and j < n:
        if a[i] == b[j]:
            out.append(int(a[i]))
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    return out
