"""Slow, obviously-correct reference computations used by the tests."""

import cmath
import math

import numpy as np


def naive_dft(v, inverse=False):
    k = len(v)
    sign = 1 if inverse else -1
    out = []
    for f in range(k):
        acc = 0j
        for t in range(k):
            acc += complex(v[t]) * cmath.exp(sign * 2j * math.pi * f * t / k)
        out.append(acc / k if inverse else acc)
    return np.array(out)


def direct_convolve(a, b):
    k = len(a)
    return np.array([sum(a[j] * b[(i - j) % k] for j in range(k)) for i in range(k)])


def direct_correlate(a, b):
    k = len(a)
    return np.array([sum(a[i] * b[(i - j) % k] for i in range(k)) for j in range(k)])


def naive_matvec(M, x):
    M = np.asarray(M)
    out = np.zeros(M.shape[0])
    for r in range(M.shape[0]):
        acc = 0.0
        for c in range(M.shape[1]):
            acc += M[r, c] * x[c]
        out[r] = acc
    return out


def dense_from_vectors(vectors, m, n):
    """Assemble the dense matrix entry by entry from the defining vectors."""
    p, q, k = vectors.shape
    full = np.zeros((p * k, q * k))
    for i in range(p):
        for j in range(q):
            for r in range(k):
                for c in range(k):
                    full[i * k + r, j * k + c] = vectors[i, j, (r - c) % k]
    return full[:m, :n]


def fold_dense_gradient(dW, p, q, k):
    """Sum a dense (padded) gradient along each block's circulant diagonals."""
    padded = np.zeros((p * k, q * k))
    padded[: dW.shape[0], : dW.shape[1]] = dW
    out = np.zeros((p, q, k))
    for i in range(p):
        for j in range(q):
            for r in range(k):
                for c in range(k):
                    out[i, j, (r - c) % k] += padded[i * k + r, j * k + c]
    return out


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def lstm_step_scalar(W, x, c, r, peephole):
    """Per-element LSTMP step from dense matrices in ``W`` (a dict of arrays)."""
    H = len(c)

    def row(name, vec, h):
        return sum(W[name][h, j] * vec[j] for j in range(len(vec)))

    c_new = np.zeros(H)
    m = np.zeros(H)
    for h in range(H):
        zi = row("W_ix", x, h) + row("W_ir", r, h) + W["b_i"][h]
        zf = row("W_fx", x, h) + row("W_fr", r, h) + W["b_f"][h]
        zg = row("W_gx", x, h) + row("W_gr", r, h) + W["b_g"][h]
        if peephole:
            zi += W["p_i"][h] * c[h]
            zf += W["p_f"][h] * c[h]
        i, f, g = sigmoid(zi), sigmoid(zf), math.tanh(zg)
        c_new[h] = f * c[h] + i * g
        zo = row("W_ox", x, h) + row("W_or", r, h) + W["b_o"][h]
        if peephole:
            zo += W["p_o"][h] * c_new[h]
        m[h] = sigmoid(zo) * math.tanh(c_new[h])
    r_new = np.array([sum(W["W_proj"][a, h] * m[h] for h in range(H)) for a in range(W["W_proj"].shape[0])])
    return c_new, r_new, m
