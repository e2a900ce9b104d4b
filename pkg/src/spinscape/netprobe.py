"""Piece-occupancy statistics of random-weight networks.

For each neuron, how often each activation piece fires across a dataset
(data averaging), and for each datum, how many neurons sit on each piece
(neuron averaging).  Both ratio families concentrate for wide random
networks; the probe measures that concentration and its CLT decay with
dataset size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .piecewise import MLPNetwork, PiecewiseLinear, piece_index

__all__ = [
    "ProbeReport",
    "random_mlp",
    "probe_counts",
    "gaussian_data",
    "load_idx",
    "variance_scaling_check",
]


@dataclass(frozen=True)
class ProbeReport:
    piece_labels: tuple
    data_avg: dict = field(repr=False)
    neuron_avg: dict = field(repr=False)
    data_avg_stats: dict
    neuron_avg_stats: dict
    data_avg_hist: dict = field(repr=False)
    neuron_avg_hist: dict = field(repr=False)
    chi_data: np.ndarray = field(repr=False)
    chi_neuron: np.ndarray = field(repr=False)
    peaked: dict
    dataset_descriptor: str
    network_descriptor: str

    def to_json_dict(self) -> dict:
        return {
            "pieces": list(self.piece_labels),
            "data_avg_stats": {str(j): {"mean": m, "var": v}
                               for j, (m, v) in self.data_avg_stats.items()},
            "neuron_avg_stats": {str(j): {"mean": m, "var": v}
                                 for j, (m, v)
                                 in self.neuron_avg_stats.items()},
            "peaked": {str(j): bool(p) for j, p in self.peaked.items()},
            "dataset": self.dataset_descriptor,
            "network": self.network_descriptor,
        }


def random_mlp(layer_sizes, activation: PiecewiseLinear, seed=0) -> MLPNetwork:
    """Bias-free MLP with i.i.d. N(0, 1/fan_in) weights."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least input and one layer")
    rng = np.random.default_rng(seed)
    ws = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        ws.append(rng.standard_normal((fan_out, fan_in))
                  / math.sqrt(fan_in))
    return MLPNetwork(weights=tuple(ws), activation=activation)


def _batch_iota(net: MLPNetwork, X: np.ndarray):
    """Per-layer 1-based piece indices for every row of X."""
    act = net.activation
    alpha = np.asarray(act.slopes)
    beta = np.asarray(act.intercepts)
    h = X
    out = []
    for w in net.weights:
        z = h @ w.T
        idx = piece_index(act, z)
        h = alpha[idx] * z + beta[idx]
        out.append(idx + 1)
    return out


def _ratio_stats(samples: np.ndarray):
    vals = samples[np.isfinite(samples)]
    if vals.size == 0:
        return float("nan"), float("nan")
    return float(np.mean(vals)), float(np.var(vals))


def _fd_hist(samples: np.ndarray):
    vals = samples[np.isfinite(samples)]
    if vals.size == 0:
        return np.array([0.0, 1.0]), np.array([0])
    counts, edges = np.histogram(vals, bins="fd")
    return edges, counts


def probe_counts(net: MLPNetwork, dataset,
                 literal_denominator: bool = False,
                 peak_threshold: float = 0.15) -> ProbeReport:
    """Occupancy ratios per neuron (data averaging) and per datum (neuron
    averaging) for pieces j = 2..L.

    Ratios are counts over the all-piece total; literal_denominator divides
    by the first-piece count instead (zero denominators become nan and are
    excluded from the statistics).
    """
    X = np.asarray(dataset, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("dataset must be a nonempty matrix of rows")
    L = len(net.activation.slopes)
    if L < 2:
        raise ValueError("need an activation with at least two pieces")
    iotas = _batch_iota(net, X)
    n_data = X.shape[0]
    per_layer = [i.shape[1] for i in iotas]
    n_neurons = sum(per_layer)
    chi_data = np.zeros((n_neurons, L), dtype=int)
    chi_neuron = np.zeros((n_data, L), dtype=int)
    col = 0
    for iota in iotas:
        for j in range(1, L + 1):
            hits = iota == j
            chi_data[col:col + iota.shape[1], j - 1] = hits.sum(axis=0)
            chi_neuron[:, j - 1] += hits.sum(axis=1)
        col += iota.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        if literal_denominator:
            den_d = chi_data[:, 0].astype(float)
            den_n = chi_neuron[:, 0].astype(float)
        else:
            den_d = chi_data.sum(axis=1).astype(float)
            den_n = chi_neuron.sum(axis=1).astype(float)
        ratios_d = np.where(den_d[:, None] > 0,
                            chi_data / den_d[:, None], np.nan)
        ratios_n = np.where(den_n[:, None] > 0,
                            chi_neuron / den_n[:, None], np.nan)
    labels = tuple(range(2, L + 1))
    data_avg = {j: ratios_d[:, j - 1] for j in labels}
    neuron_avg = {j: ratios_n[:, j - 1] for j in labels}
    data_stats = {j: _ratio_stats(data_avg[j]) for j in labels}
    neuron_stats = {j: _ratio_stats(neuron_avg[j]) for j in labels}
    peaked = {}
    for j in labels:
        mean, var = neuron_stats[j]
        peaked[j] = bool(np.isfinite(mean) and mean > 0
                         and math.sqrt(var) <= peak_threshold * mean)
    sizes = [net.weights[0].shape[1]] + [w.shape[0] for w in net.weights]
    net_desc = "-".join(str(s) for s in sizes) + f", {L} pieces"
    return ProbeReport(
        piece_labels=labels,
        data_avg=data_avg,
        neuron_avg=neuron_avg,
        data_avg_stats=data_stats,
        neuron_avg_stats=neuron_stats,
        data_avg_hist={j: _fd_hist(data_avg[j]) for j in labels},
        neuron_avg_hist={j: _fd_hist(neuron_avg[j]) for j in labels},
        chi_data=chi_data,
        chi_neuron=chi_neuron,
        peaked=peaked,
        dataset_descriptor=f"{n_data} rows x {X.shape[1]} features",
        network_descriptor=net_desc,
    )


def gaussian_data(n: int, d: int, seed=0) -> np.ndarray:
    if n < 1 or d < 1:
        raise ValueError("need positive dataset dimensions")
    return np.random.default_rng(seed).standard_normal((n, d))


def load_idx(path, kind: str = "images") -> np.ndarray:
    """Big-endian IDX reader.  Images (magic 0x803) come back as a rows x
    pixels matrix scaled to [0, 1]; labels (magic 0x801) as an int vector."""
    if kind not in ("images", "labels"):
        raise ValueError("kind must be 'images' or 'labels'")
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError("truncated file: no header")
    magic = int.from_bytes(raw[:4], "big")
    expected = 0x00000803 if kind == "images" else 0x00000801
    if magic != expected:
        raise ValueError(
            f"bad magic 0x{magic:08x}, expected 0x{expected:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ValueError("truncated file: missing dimension sizes")
    dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big")
            for i in range(ndim)]
    count = int(np.prod(dims))
    if len(raw) < header + count:
        raise ValueError("truncated file: payload shorter than header claims")
    data = np.frombuffer(raw[header:header + count], dtype=np.uint8)
    if kind == "labels":
        return data.astype(np.int64)
    n = dims[0]
    return (data.reshape(n, -1).astype(float)) / 255.0


def variance_scaling_check(net: MLPNetwork, d: int, sizes, seed=0,
                           neuron=(0, 0), resamples: int = 24) -> dict:
    """Variance of one neuron's second-piece occupancy ratio across dataset
    resamples, at each dataset size, with the fitted log-log slope."""
    sizes = [int(s) for s in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be increasing")
    layer, unit = neuron
    variances = []
    for si, size in enumerate(sizes):
        vals = []
        for r in range(resamples):
            X = gaussian_data(size, d, seed=(seed, si, r))
            iota = _batch_iota(net, X)[layer][:, unit]
            vals.append(float(np.mean(iota == 2)))
        variances.append(float(np.var(vals, ddof=1)))
    if all(v > 0 for v in variances):
        slope = float(np.polyfit(np.log(sizes), np.log(variances), 1)[0])
    else:
        slope = float("nan")
    return {
        "sizes": sizes,
        "variances": variances,
        "slope": slope,
        "neuron": (int(layer), int(unit)),
        "resamples": resamples,
    }
