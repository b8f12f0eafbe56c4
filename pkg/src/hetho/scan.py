"""Backend selection for the handover scan kernel.

The scan advances every UE through its motion legs, tracks the serving
station and records handover events and residence intervals.  A compiled
(Cython) kernel is used when it was built; otherwise the NumPy version is
used.  Set ``HETHO_BACKEND=python`` to force the NumPy version.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class ScanInput:
    """Flat arrays describing one replication.

    Stations are ordered tier-major so that ascending global index means
    ascending tier, then ascending index within the tier; ties in biased
    received power go to the lowest global index.  Motion legs are stored
    in CSR form: UE ``u`` owns legs ``leg_ptr[u]:leg_ptr[u+1]``, and leg
    ``l`` lasts ``leg_steps[l]`` steps along ``(leg_cos[l], leg_sin[l])`` at
    ``leg_speed[l]``.
    """

    bs_x: np.ndarray
    bs_y: np.ndarray
    bs_tier: np.ndarray
    tier_logw: np.ndarray
    tier_alpha: np.ndarray
    ue_x: np.ndarray
    ue_y: np.ndarray
    serving: np.ndarray
    leg_ptr: np.ndarray
    leg_steps: np.ndarray
    leg_cos: np.ndarray
    leg_sin: np.ndarray
    leg_speed: np.ndarray
    n_steps: int
    dt: float
    boundary_radius: float
    count_radius: float
    residence_radius: float
    residence_cutoff: float
    refresh_distance: float

    def __post_init__(self):
        f8 = lambda a: np.ascontiguousarray(a, dtype=np.float64)
        i8 = lambda a: np.ascontiguousarray(a, dtype=np.int64)
        i4 = lambda a: np.ascontiguousarray(a, dtype=np.int32)
        for name in ("bs_x", "bs_y", "tier_logw", "tier_alpha", "ue_x", "ue_y", "leg_cos", "leg_sin", "leg_speed"):
            setattr(self, name, f8(getattr(self, name)))
        self.bs_tier = i4(self.bs_tier)
        self.serving = i4(self.serving)
        self.leg_ptr = i8(self.leg_ptr)
        self.leg_steps = i8(self.leg_steps)
        if self.leg_ptr.shape[0] != self.ue_x.shape[0] + 1:
            raise ValueError("leg_ptr must have one entry per UE plus one")
        if self.ue_x.size and np.any(np.add.reduceat(self.leg_steps, self.leg_ptr[:-1]) < self.n_steps):
            raise ValueError("motion legs do not cover the simulated duration")
        vmax = float(self.leg_speed.max()) if self.leg_speed.size else 0.0
        if vmax * self.dt > self.refresh_distance:
            raise ValueError("refresh distance must exceed the largest step length")


@dataclass
class ScanOutput:
    counts: np.ndarray
    in_region_steps: int
    residence_tier: np.ndarray
    residence_time: np.ndarray
    final_x: np.ndarray
    final_y: np.ndarray
    final_serving: np.ndarray


@dataclass(frozen=True)
class CellGrid:
    """Stations bucketed into square cells, in CSR form."""

    x0: float
    y0: float
    cell: float
    size: int
    start: np.ndarray
    items: np.ndarray


def build_grid(bs_x: np.ndarray, bs_y: np.ndarray, radius: float, cell: float) -> CellGrid:
    size = max(1, int(math.ceil(2.0 * radius / cell)))
    x0 = y0 = -radius
    ix = np.clip(((bs_x - x0) / cell).astype(np.int64), 0, size - 1)
    iy = np.clip(((bs_y - y0) / cell).astype(np.int64), 0, size - 1)
    key = iy * size + ix
    order = np.argsort(key, kind="stable").astype(np.int32)
    start = np.zeros(size * size + 1, dtype=np.int64)
    np.cumsum(np.bincount(key, minlength=size * size), out=start[1:])
    return CellGrid(x0, y0, cell, size, start, order)


def _load() -> tuple[str, Callable[[ScanInput], ScanOutput]]:
    if os.environ.get("HETHO_BACKEND", "").lower() != "python":
        try:
            from . import _scan_ext

            return _scan_ext.BACKEND, _scan_ext.scan
        except ImportError:
            pass
    from . import _scan_py

    return _scan_py.BACKEND, _scan_py.scan


BACKEND, _scan = _load()


def _canonical(out: ScanOutput) -> ScanOutput:
    # the kernels emit residence intervals in different orders; sort by (tier, duration)
    order = np.lexsort((out.residence_time, out.residence_tier))
    out.residence_tier = out.residence_tier[order]
    out.residence_time = out.residence_time[order]
    return out


def python_scan(inp: ScanInput) -> ScanOutput:
    from . import _scan_py

    return _canonical(_scan_py.scan(inp))


def compiled_available() -> bool:
    try:
        from . import _scan_ext  # noqa: F401
    except ImportError:
        return False
    return True


def compiled_scan(inp: ScanInput) -> ScanOutput:
    from . import _scan_ext

    return _canonical(_scan_ext.scan(inp))


def scan(inp: ScanInput, backend: str | None = None) -> ScanOutput:
    """Run the scan with the selected backend (``"compiled"``, ``"python"`` or the default)."""
    if backend is None:
        return _canonical(_scan(inp))
    if backend == "python":
        return python_scan(inp)
    if backend == "compiled":
        return compiled_scan(inp)
    raise ValueError(f"unknown backend {backend!r}")
