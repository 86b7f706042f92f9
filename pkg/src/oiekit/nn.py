"""Plain-numpy building blocks for the tagger: LSTM cells, bidirectional
stacking with highway gates between layers, a softmax classifier, and Adam.

Everything runs in float64. Forward helpers return the caches their
backward counterparts need; correctness is pinned by finite-difference
gradient checks in the test suite.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp overflow saturates to exactly 0.0 or 1.0, which is what we want.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# LSTM (single direction)
# ---------------------------------------------------------------------------


def lstm_forward(x: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray):
    """Run an LSTM over ``x`` of shape (m, in_dim); returns (h, cache).

    Gate layout within the 4H axis: input, forget, output (sigmoid block),
    then cell candidate (tanh).
    """
    m = x.shape[0]
    h_dim = wh.shape[0]
    xw = x @ wx + b
    sig_all = np.empty((m, 3 * h_dim))
    g_all = np.empty((m, h_dim))
    c_all = np.empty((m, h_dim))
    tc_all = np.empty((m, h_dim))
    h_all = np.empty((m, h_dim))
    h = np.zeros(h_dim)
    c = np.zeros(h_dim)
    for t in range(m):
        z = xw[t] + h @ wh
        sig = sigmoid(z[: 3 * h_dim])
        g = np.tanh(z[3 * h_dim :])
        i = sig[:h_dim]
        f = sig[h_dim : 2 * h_dim]
        o = sig[2 * h_dim :]
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        sig_all[t], g_all[t] = sig, g
        c_all[t], tc_all[t], h_all[t] = c, tc, h
    cache = (x, wx, wh, sig_all, g_all, c_all, tc_all, h_all)
    return h_all, cache


def lstm_backward(dh_out: np.ndarray, cache):
    """Backpropagate gradients on the hidden outputs; returns
    (dx, dwx, dwh, db). Per-step work is kept to the recurrence; weight
    gradients are two matmuls over the collected gate gradients."""
    x, wx, wh, sig_all, g_all, c_all, tc_all, h_all = cache
    m, h_dim = dh_out.shape
    dz_all = np.empty((m, 4 * h_dim))
    dh_next = np.zeros(h_dim)
    dc_next = np.zeros(h_dim)
    zeros = np.zeros(h_dim)
    for t in range(m - 1, -1, -1):
        dh = dh_out[t] + dh_next
        sig = sig_all[t]
        i = sig[:h_dim]
        f = sig[h_dim : 2 * h_dim]
        o = sig[2 * h_dim :]
        g = g_all[t]
        tc = tc_all[t]
        dc = dh * o * (1.0 - tc * tc) + dc_next
        c_prev = c_all[t - 1] if t > 0 else zeros
        dz = dz_all[t]
        dz[:h_dim] = dc * g * i * (1.0 - i)
        dz[h_dim : 2 * h_dim] = dc * c_prev * f * (1.0 - f)
        dz[2 * h_dim : 3 * h_dim] = dh * tc * o * (1.0 - o)
        dz[3 * h_dim :] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = wh @ dz
    h_prevs = np.vstack([zeros[None, :], h_all[:-1]])
    dwx = x.T @ dz_all
    dwh = h_prevs.T @ dz_all
    db = dz_all.sum(axis=0)
    dx = dz_all @ wx.T
    return dx, dwx, dwh, db


# ---------------------------------------------------------------------------
# Bidirectional layer with an optional highway gate on the input
# ---------------------------------------------------------------------------


def bilstm_forward(x: np.ndarray, params: dict, prefix: str):
    h_fw, cache_fw = lstm_forward(x, params[f"{prefix}.fw.wx"], params[f"{prefix}.fw.wh"],
                                  params[f"{prefix}.fw.b"])
    h_bw_rev, cache_bw = lstm_forward(x[::-1], params[f"{prefix}.bw.wx"],
                                      params[f"{prefix}.bw.wh"], params[f"{prefix}.bw.b"])
    h = np.concatenate([h_fw, h_bw_rev[::-1]], axis=1)
    return h, (cache_fw, cache_bw)


def bilstm_backward(dh: np.ndarray, caches, grads: dict, prefix: str):
    h_dim = dh.shape[1] // 2
    cache_fw, cache_bw = caches
    dx_fw, dwx, dwh, db = lstm_backward(dh[:, :h_dim], cache_fw)
    grads[f"{prefix}.fw.wx"] = dwx
    grads[f"{prefix}.fw.wh"] = dwh
    grads[f"{prefix}.fw.b"] = db
    dx_bw_rev, dwx, dwh, db = lstm_backward(np.ascontiguousarray(dh[:, h_dim:][::-1]), cache_bw)
    grads[f"{prefix}.bw.wx"] = dwx
    grads[f"{prefix}.bw.wh"] = dwh
    grads[f"{prefix}.bw.b"] = db
    return dx_fw + dx_bw_rev[::-1]


def highway_forward(x: np.ndarray, core: np.ndarray, params: dict, prefix: str):
    """out = gate * core + (1 - gate) * x with a learned sigmoid gate."""
    gate = sigmoid(x @ params[f"{prefix}.hw.w"] + params[f"{prefix}.hw.b"])
    out = gate * core + (1.0 - gate) * x
    return out, gate


def highway_backward(dout, x, core, gate, params, grads, prefix):
    dcore = dout * gate
    dx = dout * (1.0 - gate)
    dgate = dout * (core - x)
    dz = dgate * gate * (1.0 - gate)
    grads[f"{prefix}.hw.w"] = x.T @ dz
    grads[f"{prefix}.hw.b"] = dz.sum(axis=0)
    dx += dz @ params[f"{prefix}.hw.w"].T
    return dx, dcore


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


class Adam:
    """Adam over a named-parameter dict, updated in place."""

    def __init__(self, params: dict, step_size: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(value) for name, value in params.items()}
        self.v = {name: np.zeros_like(value) for name, value in params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for name, grad in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            self.params[name] -= self.step_size * update


def grads_finite(grads: dict) -> bool:
    return all(np.isfinite(g).all() for g in grads.values())
