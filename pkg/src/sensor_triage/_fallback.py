"""Pure numpy implementations of the per-sample kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``SENSOR_TRIAGE_PURE_PYTHON`` is set. Results are bit-identical to the
compiled versions.
"""

import numpy as np


def forward_fill(x, mask):
    """Zero-order hold over dropped samples, back-filling a leading gap."""
    T, d = x.shape
    out = np.empty_like(x)
    rows = np.arange(T)
    for j in range(d):
        m = mask[:, j]
        kept = np.flatnonzero(m)
        idx = np.where(m, rows, -1)
        np.maximum.accumulate(idx, out=idx)
        idx[idx < 0] = kept[0]
        out[:, j] = x[idx, j]
    return out


def linear_fill(x, mask):
    """Linear interpolation between retained neighbours, held at both ends."""
    T, d = x.shape
    out = np.empty_like(x)
    t = np.arange(T, dtype=np.float64)
    for j in range(d):
        kept = np.flatnonzero(mask[:, j])
        out[:, j] = np.interp(t, t[kept], x[kept, j])
        # np.interp may round retained points; restore them exactly
        out[kept, j] = x[kept, j]
    return out


def send_on_delta(x, delta, candidates):
    """Dead-band filter: keep (t, j) iff |x[t, j] - last sent| > delta[j].

    Only positions where ``candidates`` is true may transmit. Row 0 is
    always transmitted.
    """
    T, d = x.shape
    keep = np.zeros((T, d), dtype=bool)
    if T == 0:
        return keep
    keep[0] = True
    last = x[0].copy()
    for t in range(1, T):
        fire = (np.abs(x[t] - last) > delta) & candidates[t]
        keep[t] = fire
        last = np.where(fire, x[t], last)
    return keep
