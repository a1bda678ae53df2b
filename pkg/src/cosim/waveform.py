"""Piecewise-linear time signals exchanged between subsystems."""

from __future__ import annotations

import numpy as np


class Waveform:
    """Vector-valued signal sampled on a strictly increasing time grid.

    Evaluation interpolates linearly between samples, is exact at the
    samples, and holds the end values constant outside the grid.
    """

    __slots__ = ("t", "values")

    def __init__(self, t, values):
        t = np.array(t, dtype=float).reshape(-1)
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(t.size, -1) if t.size > 1 else values.reshape(1, -1)
        if values.shape[0] != t.size:
            raise ValueError(f"{t.size} sample times but {values.shape[0]} samples")
        if t.size > 1 and np.any(np.diff(t) <= 0.0):
            raise ValueError("waveform sample times must be strictly increasing")
        t.setflags(write=False)
        values.setflags(write=False)
        self.t = t
        self.values = values

    @classmethod
    def constant(cls, value, t0=0.0, t1=None) -> "Waveform":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        if t1 is None or t1 <= t0:
            return cls([t0], value[None, :])
        return cls([t0, t1], np.vstack([value, value]))

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def __call__(self, t: float) -> np.ndarray:
        ts = self.t
        if t <= ts[0]:
            return self.values[0]
        if t >= ts[-1]:
            return self.values[-1]
        i = int(np.searchsorted(ts, t, side="right")) - 1
        if ts[i] == t:
            return self.values[i]
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return self.values[i] + w * (self.values[i + 1] - self.values[i])

    def sample(self, times) -> np.ndarray:
        return np.array([self(float(s)) for s in times])

    def __repr__(self):
        return f"Waveform(n={self.t.size}, dim={self.dimension}, span=[{self.t[0]}, {self.t[-1]}])"
