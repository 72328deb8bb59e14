# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the functions in ``_pykernels``."""

import numpy as np


def bpe_encode(char_ids, const long long[::1] rank_table, const long long[::1] merge_table, long long n_vocab):
    cdef long long[::1] seq = np.array(char_ids, dtype=np.int64)
    cdef Py_ssize_t length = seq.shape[0]
    cdef Py_ssize_t k, w, pos
    cdef long long best, r, a, b, merged
    while length > 1:
        best = -1
        pos = -1
        for k in range(length - 1):
            r = rank_table[seq[k] * n_vocab + seq[k + 1]]
            if r >= 0 and (best < 0 or r < best):
                best = r
                pos = k
        if pos < 0:
            break
        a = seq[pos]
        b = seq[pos + 1]
        merged = merge_table[a * n_vocab + b]
        # in-place compaction: w trails k
        w = 0
        k = 0
        while k < length:
            if k + 1 < length and seq[k] == a and seq[k + 1] == b:
                seq[w] = merged
                k += 2
            else:
                seq[w] = seq[k]
                k += 1
            w += 1
        length = w
    return [int(seq[k]) for k in range(length)]


def trie_encode(char_ids, const long long[::1] trie_next, const long long[::1] trie_tok, long long n_alpha):
    cdef long long[::1] chars = np.array(char_ids, dtype=np.int64)
    cdef Py_ssize_t n = chars.shape[0]
    cdef Py_ssize_t pos = 0, k, best_end
    cdef long long node, best_tok
    out = []
    while pos < n:
        node = 0
        best_tok = -1
        best_end = pos
        k = pos
        while k < n:
            node = trie_next[node * n_alpha + chars[k]]
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


def walk_offsets(off_t, off_s, long long first_t, long long first_s):
    cdef long long[::1] ot = np.array(off_t, dtype=np.int64)
    cdef long long[::1] os_ = np.array(off_s, dtype=np.int64)
    cdef Py_ssize_t m = ot.shape[0], n = os_.shape[0]
    cdef Py_ssize_t i = 0, j = 0
    cdef long long last_t = first_t, last_s = first_s
    pairs = []
    while i < m and j < n:
        if ot[i] == 0:
            i += 1
            continue
        if os_[j] == 0:
            j += 1
            continue
        if ot[i] == os_[j]:
            pairs.append((int(last_t), int(i), int(last_s), int(j)))
            last_t = i + 1
            last_s = j + 1
            i += 1
            j += 1
        elif ot[i] < os_[j]:
            i += 1
        else:
            j += 1
    return pairs


def lcs_offsets(a, b):
    cdef long long[::1] xa = np.array(a, dtype=np.int64)
    cdef long long[::1] xb = np.array(b, dtype=np.int64)
    cdef Py_ssize_t m = xa.shape[0], n = xb.shape[0]
    cdef Py_ssize_t i, j
    cdef long long[:, ::1] table = np.zeros((m + 1, n + 1), dtype=np.int64)
    for i in range(m - 1, -1, -1):
        for j in range(n - 1, -1, -1):
            if xa[i] == xb[j]:
                table[i, j] = table[i + 1, j + 1] + 1
            elif table[i + 1, j] >= table[i, j + 1]:
                table[i, j] = table[i + 1, j]
            else:
                table[i, j] = table[i, j + 1]
    out = []
    i = 0
    j = 0
    while i < m and j < n:
        if xa[i] == xb[j]:
            out.append(int(xa[i]))
            i += 1
            j += 1
        elif table[i + 1, j] >= table[i, j + 1]:
            i += 1
        else:
            j += 1
    return out
