"""Trace sampling on hypersurfaces and the forward (data prediction) map.

A sampler is a sparse linear map from state vectors to receiver channels:
multilinear interpolation onto cell centers composed with a per-receiver
weight matrix acting on the state components.  Built-in tags cover the
acoustic traces that extend continuously to the solution space (pressure
and normal velocity); custom weight matrices are accepted with a warning,
since their trace continuity is physics-specific and cannot be vetted
generically.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatchError, InvalidArgumentError, UnsupportedConfigurationError
from .evolution import IntegratorConfig, Trajectory, solve_causal
from .fields import Grid, SourceTerm
from .operators import DiscreteSystem

PRESSURE = "pressure"
NORMAL_VELOCITY = "normal_velocity"
CUSTOM = "custom"


@dataclass(frozen=True)
class Sampler:
    """Discrete trace operator: channels = matrix @ state."""

    matrix: sp.csr_matrix
    receivers: np.ndarray
    tag: str
    grid: Grid
    k: int
    channels_per_receiver: int

    @property
    def n_channels(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SeismogramData:
    """Receiver data on the solve's time axis; data is (channels, n_times)."""

    times: np.ndarray
    data: np.ndarray
    receivers: np.ndarray
    tag: str = CUSTOM

    def __post_init__(self):
        if self.data.shape[1] != self.times.size:
            raise InvalidArgumentError("data columns must match the time axis")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def _interp_weights(grid: Grid, point: np.ndarray) -> list[tuple[int, float]]:
    """Multilinear interpolation weights of a point onto cell centers."""
    lows, fracs = [], []
    for a in range(grid.dim):
        lo_center = grid.origin[a] + 0.5 * grid.h[a]
        hi_center = grid.origin[a] + (grid.shape[a] - 0.5) * grid.h[a]
        if point[a] < grid.origin[a] - 1e-12 or point[a] > grid.origin[a] + grid.extent[a] + 1e-12:
            raise InvalidArgumentError(f"receiver at {tuple(point)} lies outside the domain")
        s = (np.clip(point[a], lo_center, hi_center) - lo_center) / grid.h[a]
        i0 = min(int(np.floor(s)), grid.shape[a] - 2)
        lows.append(i0)
        fracs.append(s - i0)
    weights: list[tuple[int, float]] = []
    for corner in range(2**grid.dim):
        idx, w = [], 1.0
        for a in range(grid.dim):
            bit = (corner >> a) & 1
            idx.append(lows[a] + bit)
            w *= fracs[a] if bit else (1.0 - fracs[a])
        if w:
            weights.append((grid.cell_index(idx), w))
    return weights


def build_sampler(
    receivers,
    tag: str,
    grid: Grid,
    k: int,
    normal=None,
    weights: np.ndarray | None = None,
) -> Sampler:
    """Build the trace operator for receivers at physical coordinates.

    ``tag`` selects the component weights: "pressure" reads component 0,
    "normal_velocity" contracts the velocity block with the (shared or
    per-receiver) unit normal, "custom" uses explicit ``weights`` of shape
    (l, k) or (n_receivers, l, k).
    """
    receivers = np.atleast_2d(np.asarray(receivers, dtype=float))
    if receivers.shape[1] != grid.dim:
        raise InvalidArgumentError(f"receivers must have {grid.dim} coordinates each")
    n_rec = receivers.shape[0]

    if tag in (PRESSURE, NORMAL_VELOCITY):
        if k != grid.dim + 1:
            raise UnsupportedConfigurationError(
                f"built-in tag {tag!r} assumes the acoustic state layout (k = dim + 1)"
            )
    if tag == PRESSURE:
        m_rows = np.zeros((n_rec, 1, k))
        m_rows[:, 0, 0] = 1.0
    elif tag == NORMAL_VELOCITY:
        if normal is None:
            raise InvalidArgumentError("normal_velocity sampling needs a normal field")
        normal = np.asarray(normal, dtype=float)
        if normal.ndim == 1:
            normal = np.broadcast_to(normal, (n_rec, grid.dim))
        norms = np.linalg.norm(normal, axis=1, keepdims=True)
        normal = normal / norms
        m_rows = np.zeros((n_rec, 1, k))
        m_rows[:, 0, 1:] = normal
    elif tag == CUSTOM:
        if weights is None:
            raise InvalidArgumentError("custom sampling needs explicit weight matrices")
        weights = np.asarray(weights, dtype=float)
        if weights.ndim == 2:
            weights = np.broadcast_to(weights, (n_rec, *weights.shape))
        if weights.shape[0] != n_rec or weights.shape[2] != k:
            raise InvalidArgumentError(f"weights must be (n_receivers, l, {k})")
        m_rows = weights
        warnings.warn(
            "custom sampler weights are not vetted for trace continuity on the "
            "solution space; only components with continuous traces are meaningful",
            stacklevel=2,
        )
    else:
        raise InvalidArgumentError(f"unknown sampler tag {tag!r}")

    l = m_rows.shape[1]
    mat = sp.lil_matrix((n_rec * l, grid.state_size(k)))
    for r in range(n_rec):
        cells = _interp_weights(grid, receivers[r])
        for li in range(l):
            row = r * l + li
            for cell, w in cells:
                for comp in range(k):
                    if m_rows[r, li, comp]:
                        mat[row, cell * k + comp] += w * m_rows[r, li, comp]
    return Sampler(matrix=mat.tocsr(), receivers=receivers, tag=tag, grid=grid, k=k,
                   channels_per_receiver=l)


def apply_sampler(sampler: Sampler, u: np.ndarray) -> np.ndarray:
    if u.shape != (sampler.matrix.shape[1],):
        raise InvalidArgumentError("state length does not match the sampler")
    return sampler.matrix @ u


def sample_trajectory(sampler: Sampler, traj: Trajectory) -> SeismogramData:
    traj.require_dense("trace sampling")
    if traj.grid != sampler.grid:
        raise GridMismatchError("trajectory and sampler grids differ")
    data = sampler.matrix @ traj.states.T
    return SeismogramData(times=traj.times, data=np.asarray(data), receivers=sampler.receivers,
                          tag=sampler.tag)


def forward_map(
    system: DiscreteSystem,
    source: SourceTerm,
    sampler: Sampler,
    config: IntegratorConfig | None = None,
) -> SeismogramData:
    """The data-prediction map: causal solve composed with the trace operator."""
    if source.smoothness < 2:
        warnings.warn(
            "source wavelet declares fewer than two continuous derivatives; "
            "the forward map is continuous but not differentiable there",
            stacklevel=2,
        )
    if config is not None and config.store_stride != 1:
        from dataclasses import replace

        config = replace(config, store_stride=1)  # sampling needs every step
    traj = solve_causal(system, source, config)
    return sample_trajectory(sampler, traj)


def forward_map_shots(
    system: DiscreteSystem,
    sources: list[SourceTerm],
    sampler: Sampler,
    config: IntegratorConfig | None = None,
    jobs: int = 1,
) -> list[SeismogramData]:
    """Independent forward solves per source; results in source order."""
    if jobs <= 1 or len(sources) <= 1:
        return [forward_map(system, s, sampler, config) for s in sources]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(forward_map, system, s, sampler, config) for s in sources]
        return [f.result() for f in futures]


def sampler_adjoint_source(sampler: Sampler, residual: SeismogramData | np.ndarray) -> np.ndarray:
    """Transpose of the sampling map applied per step: (n_times, n_state)."""
    data = residual.data if isinstance(residual, SeismogramData) else np.asarray(residual)
    if data.shape[0] != sampler.n_channels:
        raise InvalidArgumentError("residual channel count does not match the sampler")
    return np.asarray((sampler.matrix.T @ data).T)


# ---------------------------------------------------------------------------
# seismogram IO
# ---------------------------------------------------------------------------


def save_seismogram_csv(seis: SeismogramData, path) -> None:
    with open(path, "w") as fh:
        header = ",".join(f"ch{j}" for j in range(seis.data.shape[0]))
        fh.write(f"t,{header}\n")
        for i, t in enumerate(seis.times):
            row = ",".join(f"{v:.17g}" for v in seis.data[:, i])
            fh.write(f"{t:.17g},{row}\n")


def load_seismogram_csv(path) -> SeismogramData:
    raw = np.genfromtxt(path, delimiter=",", skip_header=1)
    raw = np.atleast_2d(raw)
    times = raw[:, 0]
    data = raw[:, 1:].T
    return SeismogramData(times=times, data=data, receivers=np.zeros((data.shape[0], 1)))


def save_seismogram_binary(seis: SeismogramData, basepath: str) -> None:
    """Binary frames (fields header convention: one row per time step) plus a
    JSON sidecar carrying the time axis and receiver positions.
    """
    import json
    import struct

    data = np.ascontiguousarray(seis.data.T, dtype="<f8")  # (n_times, channels)
    with open(f"{basepath}.rwf", "wb") as fh:
        fh.write(b"RWF1")
        fh.write(struct.pack("<2q", 1, data.shape[1]))
        fh.write(struct.pack("<1q", data.shape[0]))
        fh.write(data.tobytes())
    sidecar = {
        "times": seis.times.tolist(),
        "receivers": seis.receivers.tolist(),
        "tag": seis.tag,
    }
    with open(f"{basepath}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_seismogram_binary(basepath: str) -> SeismogramData:
    import json

    from .fields import read_field_array

    _, channels, shape, payload = read_field_array(f"{basepath}.rwf")
    with open(f"{basepath}.json") as fh:
        sidecar = json.load(fh)
    data = payload.reshape(shape[0], channels).T
    return SeismogramData(
        times=np.asarray(sidecar["times"]),
        data=data,
        receivers=np.asarray(sidecar["receivers"]),
        tag=sidecar.get("tag", CUSTOM),
    )


def load_observed_data(path: str) -> SeismogramData:
    """Observed-data import in either supported format (by extension)."""
    if str(path).endswith(".csv"):
        return load_seismogram_csv(path)
    base = str(path)
    if base.endswith(".rwf"):
        base = base[: -len(".rwf")]
    return load_seismogram_binary(base)
