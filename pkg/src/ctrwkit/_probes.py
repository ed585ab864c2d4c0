"""Record walker positions at fixed probe times while paths are advanced."""

from __future__ import annotations

import numpy as np

# segment kinds shared by the samplers
CONTINUOUS = 0  # A and D move linearly across the segment
CLOCK_JUMP = 1  # D jumps at the segment end, A is continuous
PAIRED = 2  # D and A jump together (coupled walk)


class ProbeRecorder:
    """Fills ``x[p, k]`` (and ``y[p, k]``) when path ``p`` first has ``D > times[k]``.

    Between calls every path satisfies ``D <= times[next[p]]``, so a segment
    ``D0 -> D1`` crosses exactly the probes ``next[p] ..`` below ``D1``.
    """

    def __init__(self, times, n: int, dim: int, octrw: bool = False):
        self.times = np.asarray(times, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) < 0):
            raise ValueError("probe times must be a sorted 1-d array")
        self.x = np.full((n, self.times.size, dim), np.nan)
        self.y = np.full((n, self.times.size, dim), np.nan) if octrw else None
        self.next = np.zeros(n, dtype=np.int64)

    def done(self, idx) -> np.ndarray:
        return self.next[idx] >= self.times.size

    def record(self, kind: int, idx, a0, d0, a1, d1) -> None:
        nt = self.times.size
        nxt = self.next[idx]
        times = self.times
        mask = nxt < nt
        mask[mask] = times[nxt[mask]] < d1[mask]
        while mask.any():
            sel = np.flatnonzero(mask)
            rows, k = idx[sel], nxt[sel]
            if kind == CONTINUOUS:
                w = (times[k] - d0[sel]) / (d1[sel] - d0[sel])
                xv = a0[sel] + w[:, None] * (a1[sel] - a0[sel])
                yv = xv
            elif kind == CLOCK_JUMP:
                xv = yv = a1[sel]
            else:
                xv, yv = a0[sel], a1[sel]
            self.x[rows, k] = xv
            if self.y is not None:
                self.y[rows, k] = yv
            k = k + 1
            nxt[sel] = k
            ok = k < nt
            ok[ok] = times[k[ok]] < d1[sel][ok]
            mask[:] = False
            mask[sel] = ok
        self.next[idx] = nxt
