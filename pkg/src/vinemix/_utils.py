"""Small numerical helpers shared across modules."""

import hashlib

import numpy as np
from scipy import stats

PIT_EPS = 1e-10


def clip_unit(u, eps=PIT_EPS):
    """Clip values into the closed interval ``[eps, 1 - eps]``."""
    return np.clip(u, eps, 1.0 - eps)


def derive_seed(seed, label):
    """Expand a top-level seed into an independent per-subsystem seed.

    The derivation is ``sha256(f"{seed}:{label}")`` truncated to 63 bits, so
    the same ``(seed, label)`` pair always yields the same stream regardless
    of the order in which subsystems are run.
    """
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def effective_sample_size(w):
    w = np.asarray(w, dtype=float)
    s2 = np.sum(w * w)
    if s2 <= 0:
        return 0.0
    return float(np.sum(w) ** 2 / s2)


def _equal_weights(w):
    return w is None or np.all(w == w.flat[0])


def weighted_kendall_tau(x, y, w=None, chunk=2048):
    """Kendall's tau-b with observation weights.

    Every pair ``(i, j)`` contributes ``w_i * w_j * sign(dx) * sign(dy)``;
    the result is normalised like tau-b so that unit weights reproduce
    :func:`scipy.stats.kendalltau`. Zero-weight observations are ignored.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if w is not None:
        w = np.asarray(w, dtype=float)
        keep = w > 0
        x, y, w = x[keep], y[keep], w[keep]
    if x.size < 2:
        return 0.0
    if _equal_weights(w):
        tau = stats.kendalltau(x, y).statistic
        return 0.0 if np.isnan(tau) else float(tau)

    num = 0.0
    sxx = 0.0
    syy = 0.0
    for start in range(0, x.size, chunk):
        sl = slice(start, start + chunk)
        sx = np.sign(x[sl, None] - x[None, :])
        sy = np.sign(y[sl, None] - y[None, :])
        ww = w[sl, None] * w[None, :]
        num += np.sum(ww * sx * sy)
        sxx += np.sum(ww * sx * sx)
        syy += np.sum(ww * sy * sy)
    if sxx <= 0 or syy <= 0:
        return 0.0
    return float(num / np.sqrt(sxx * syy))


def weighted_tau_matrix(u, w=None):
    d = u.shape[1]
    out = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            out[i, j] = out[j, i] = weighted_kendall_tau(u[:, i], u[:, j], w)
    return out
