"""Independent reference implementations used to check the fast paths.

Everything here is written the slow, obvious way (explicit loops, explicit
inverses) on purpose: these functions are the oracles the package code is
tested against, so they must not share code with it.
"""

from __future__ import annotations

import math

import numpy as np


def matmul_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def conv2d_loops(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    c_out, c_in, k, _ = kernel.shape
    _, h, w = x.shape
    pad = (k - 1) // 2
    out = np.zeros((c_out, h, w))
    for o in range(c_out):
        for i in range(h):
            for j in range(w):
                acc = bias[o]
                for c in range(c_in):
                    for u in range(k):
                        for v in range(k):
                            ii = i + u - pad
                            jj = j + v - pad
                            if 0 <= ii < h and 0 <= jj < w:
                                acc += kernel[o, c, u, v] * x[c, ii, jj]
                out[o, i, j] = acc
    return out


def softmax_rows_ref(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        row = x[i] - x[i].max()
        e = np.exp(row)
        out[i] = e / e.sum()
    return out


def layer_norm_ref(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                   eps: float) -> np.ndarray:
    x2 = np.atleast_2d(x)
    out = np.zeros_like(x2)
    for i in range(x2.shape[0]):
        row = x2[i]
        mu = row.mean()
        var = ((row - mu) ** 2).mean()
        out[i] = (row - mu) / math.sqrt(var + eps) * gain + bias
    return out.reshape(x.shape)


def sin_encode_ref(x: float, num_frequencies: int) -> np.ndarray:
    entries = [x]
    for k in range(num_frequencies):
        arg = (2.0 ** k) * math.pi * x
        entries.append(math.sin(arg))
        entries.append(math.cos(arg))
    return np.array(entries)


def attention_block_ref(queries, keys, values, params, eps, bypass_norms=False,
                        norm_keys=False):
    """Explicit per-head, per-row evaluation of one cross-attention block.

    params mirrors the package's BlockParams: per-head (query_proj, key_proj,
    value_proj) matrices, out_proj, two norm gain/bias pairs and the two
    feed-forward weights.  No shared code with the package implementation.
    """
    def ln(mat, gain, bias):
        if bypass_norms:
            return mat.copy()
        return layer_norm_ref(mat, gain, bias, eps)

    q_in = ln(queries, params.norm1_gain.data, params.norm1_bias.data)
    k_in = ln(keys, params.norm1_gain.data, params.norm1_bias.data) if norm_keys else keys
    heads = []
    for hp in params.heads:
        qh = q_in @ hp.query_proj.data
        kh = k_in @ hp.key_proj.data
        vh = values @ hp.value_proj.data
        d_h = qh.shape[1]
        scores = qh @ kh.T / math.sqrt(d_h)
        attn = softmax_rows_ref(scores)
        heads.append(attn @ vh)
    mha = np.concatenate(heads, axis=1) @ params.out_proj.data
    updated = queries + mha
    z = ln(updated, params.norm2_gain.data, params.norm2_bias.data)
    ffn = np.maximum(z @ params.ffn_in.data, 0.0) @ params.ffn_out.data
    return updated + ffn


def finite_diff(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f at x, elementwise."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = f(x)
        flat[i] = keep - step
        lo = f(x)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.max(np.abs(a - b) / denom))


def ordinary_kriging_ref(meas_xy, meas_vals, query_xy, nugget, sill, range_m):
    """Dense ordinary kriging via explicit matrix inverse."""
    def gamma(d):
        out = nugget + (sill - nugget) * (1.0 - np.exp(-d / range_m))
        return np.where(d == 0.0, 0.0, out)

    n = len(meas_vals)
    a = np.zeros((n + 1, n + 1))
    for i in range(n):
        for j in range(n):
            d = math.hypot(meas_xy[i, 0] - meas_xy[j, 0], meas_xy[i, 1] - meas_xy[j, 1])
            a[i, j] = gamma(np.array(d))
    a[n, :n] = 1.0
    a[:n, n] = 1.0
    a_inv = np.linalg.inv(a)
    preds = np.zeros(len(query_xy))
    for qi, q in enumerate(query_xy):
        b = np.zeros(n + 1)
        for i in range(n):
            d = math.hypot(q[0] - meas_xy[i, 0], q[1] - meas_xy[i, 1])
            b[i] = gamma(np.array(d))
        b[n] = 1.0
        lam = a_inv @ b
        preds[qi] = float(lam[:n] @ meas_vals)
    return preds


def gpr_ref(meas_xy, meas_vals, query_xy, lengthscale, signal_var, noise_var):
    """GP regression posterior mean via explicit inverse, prior mean = data mean."""
    n = len(meas_vals)
    mu = float(np.mean(meas_vals))
    k = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            d2 = np.sum((meas_xy[i] - meas_xy[j]) ** 2)
            k[i, j] = signal_var * math.exp(-d2 / (2.0 * lengthscale ** 2))
    ky_inv = np.linalg.inv(k + noise_var * np.eye(n))
    alpha = ky_inv @ (meas_vals - mu)
    preds = np.zeros(len(query_xy))
    for qi, q in enumerate(query_xy):
        ks = np.array([
            signal_var * math.exp(-np.sum((q - meas_xy[i]) ** 2) / (2.0 * lengthscale ** 2))
            for i in range(n)
        ])
        preds[qi] = mu + float(ks @ alpha)
    return preds
