"""Chain summaries: temperatures, autocorrelation times, density errors."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np


def kinetic_temperature(p, M_diag=None) -> float:
    """Instantaneous temperature ``p^T M^{-1} p / N_d``."""
    p = np.asarray(p, dtype=float)
    M = np.ones_like(p) if M_diag is None else np.asarray(M_diag, dtype=float)
    if M.shape != p.shape:
        raise ValueError("mass and momentum dimensions differ")
    return float(p @ (p / M)) / p.shape[0]


def autocorrelation(series) -> np.ndarray:
    """Normalised sample autocorrelation at all lags, via FFT."""
    x = np.asarray(series, dtype=float)
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / acov[0]


@dataclass(frozen=True)
class IACT:
    value: float
    cutoff: int
    degenerate: bool = False

    def __float__(self):
        return self.value


def iact(series) -> IACT:
    """Integrated autocorrelation time ``1 + 2 sum_k rho_k``.

    The sum runs over lags ``1..K-1`` where ``K`` is the first lag with a
    negative sample autocorrelation.  A constant series returns 1 and is
    flagged ``degenerate``.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 100:
        raise ValueError(f"iact needs at least 100 points, got {x.size}")
    if np.ptp(x) == 0:
        return IACT(1.0, 0, degenerate=True)
    rho = autocorrelation(x)
    neg = np.flatnonzero(rho[1:] < 0)
    K = neg[0] + 1 if neg.size else rho.size
    return IACT(float(1.0 + 2.0 * rho[1:K].sum()), int(K))


def batch_means_se(series, batches: int = 20) -> float:
    """Standard error of the mean from non-overlapping batch means.

    Trailing points that do not fill a batch are dropped.
    """
    x = np.asarray(series, dtype=float)
    if batches < 10:
        raise ValueError("use at least 10 batches")
    size = x.size // batches
    if size < 1:
        raise ValueError(f"series of length {x.size} is too short for {batches} batches")
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(batches))


def default_grid(mean: float, sd: float, bins: int = 100, width: float = 5.0) -> np.ndarray:
    """Bin edges spanning ``mean +- width * sd``."""
    return np.linspace(mean - width * sd, mean + width * sd, bins + 1)


def marginal_rmse(samples, density, edges) -> float:
    """RMS difference between a histogram density and ``density`` at bin centres.

    Samples beyond the grid are folded into the edge bins; a warning is raised
    when that is more than 1% of them.
    """
    x = np.asarray(samples, dtype=float).ravel()
    edges = np.asarray(edges, dtype=float)
    outside = np.count_nonzero((x < edges[0]) | (x > edges[-1]))
    if outside > 0.01 * x.size:
        warnings.warn(f"{outside / x.size:.2%} of samples fall outside the density grid",
                      RuntimeWarning, stacklevel=2)
    counts, _ = np.histogram(np.clip(x, edges[0], edges[-1]), bins=edges)
    est = counts / (x.size * np.diff(edges))
    centres = 0.5 * (edges[:-1] + edges[1:])
    return float(np.sqrt(np.mean((est - density(centres)) ** 2)))


@dataclass
class DiagnosticsReport:
    """Per-parameter and chain-level summaries of one run."""

    names: list
    rmse: dict = field(default_factory=dict)
    iact: dict = field(default_factory=dict)
    mean: dict = field(default_factory=dict)
    mean_se: dict = field(default_factory=dict)
    mean_temperature: float = float("nan")
    mean_xi: float = float("nan")
    counters: dict = field(default_factory=dict)
    grid: str = ""

    def rows(self):
        for name in self.names:
            for key, table in (("rmse", self.rmse), ("iact", self.iact),
                               ("mean", self.mean), ("mean_se", self.mean_se)):
                if name in table:
                    yield f"{key}_{name}", table[name]
        yield "mean_temperature", self.mean_temperature
        yield "mean_xi", self.mean_xi
        for key, val in sorted(self.counters.items()):
            yield key, val

    def to_csv(self, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        if self.grid:
            buf.write(f"# density grid: {self.grid}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for key, val in self.rows():
            w.writerow([key, fmt(val)])
        return buf.getvalue()

    def to_text(self) -> str:
        return "\n".join(f"{key:>20s}  {fmt(val)}" for key, val in self.rows())


def fmt(val) -> str:
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    return "%.17g" % float(val)


def summarize(log, names, densities=None, grids=None, batches: int = 20) -> DiagnosticsReport:
    """Build a report from a chain's post-burn-in records.

    ``densities`` and ``grids`` map parameter names to analytic marginal
    densities and histogram edges, for the parameters where they are known.
    """
    keep = log.post_burnin
    theta = log.theta[keep]
    rep = DiagnosticsReport(list(names), counters=dict(log.counters))
    for j, name in enumerate(names):
        col = theta[:, j]
        rep.mean[name] = float(col.mean())
        rep.mean_se[name] = batch_means_se(col, batches) if col.size >= batches else float("nan")
        if col.size >= 100:
            rep.iact[name] = iact(col).value
        if densities and name in densities:
            edges = grids[name]
            rep.rmse[name] = marginal_rmse(col, densities[name], edges)
            rep.counters[f"outside_grid_{name}"] = int(np.count_nonzero((col < edges[0]) | (col > edges[-1])))
    temps = log.temperature[keep]
    if np.isfinite(temps).all() and temps.size:
        rep.mean_temperature = float(temps.mean())
    xis = log.xi[keep]
    if log.method in ("sgnht", "ccadl") and xis.size:
        rep.mean_xi = float(xis.mean())
    if grids:
        rep.grid = "; ".join(f"{k}: {len(v) - 1} bins on [{v[0]:.6g}, {v[-1]:.6g}]"
                             for k, v in grids.items())
    return rep
