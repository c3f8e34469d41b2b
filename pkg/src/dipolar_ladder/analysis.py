"""Post-processing of quench runs.

* damped-cosine fits ``c + A exp(-t/tau) cos(omega t)`` of global-quench series,
* polynomial trends of fit parameters against a control parameter,
* light-cone front tracking and velocity regression for local quenches.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, signal, stats

__all__ = [
    "FitResult",
    "TrendResult",
    "VelocityEstimate",
    "damped_cosine",
    "fit_damped_cosine",
    "parameter_trend",
    "track_light_cone",
    "front_arrival_times",
    "front_polarity",
    "velocity_vs_coupling",
    "append_results_csv",
]


def damped_cosine(t, c, A, tau, omega):
    return c + A * np.exp(-t / tau) * np.cos(omega * t)


@dataclass
class FitResult:
    """Damped-cosine fit; ``status`` is 'ok', 'failed' or 'unidentifiable'."""

    c: float
    A: float
    tau: float
    omega: float
    stderr: dict[str, float]
    window: tuple[float, float]
    rms: float
    status: str = "ok"
    message: str = ""
    init: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def rate(self) -> float:
        """Decay rate 1/tau."""
        return 1.0 / self.tau if self.tau and np.isfinite(self.tau) else float("nan")

    def record(self) -> dict:
        out = asdict(self)
        out["window"] = list(self.window)
        return out


def _series_arrays(series, observable):
    if isinstance(series, tuple):
        t, y = series
    else:
        t, y = series.times, series.averages[observable]
    return np.asarray(t, dtype=float), np.asarray(y, dtype=float)


def _dominant_frequency(t, y):
    """Angular frequency of the largest peak of the zero-padded spectrum."""
    n = len(y)
    dt = float(np.median(np.diff(t)))
    pad = 16 * max(n, 256)
    spec = np.abs(np.fft.rfft((y - y.mean()) * np.hanning(n), pad))
    freqs = np.fft.rfftfreq(pad, dt) * 2 * np.pi
    spec[0] = 0.0
    k = int(np.argmax(spec))
    return float(freqs[k])


def _envelope_rate(t, r):
    """Decay rate from a log-linear fit through the local maxima of |r|."""
    mag = np.abs(r)
    idx = signal.argrelmax(mag)[0]
    idx = np.concatenate([[0], idx]) if mag[0] >= mag[1] else idx
    idx = idx[mag[idx] > 0]
    if len(idx) < 2:
        return float("nan")
    slope = np.polyfit(t[idx], np.log(mag[idx]), 1)[0]
    return float(-slope)


def fit_damped_cosine(series, observable: str = "dx", window=(0.0, 0.3), min_periods: float = 1.5,
                      rms_bound: float = 0.05, flat_tol: float = 1e-6) -> FitResult:
    """Least-squares fit of ``c + A exp(-t/tau) cos(omega t)`` inside ``window``.

    ``series`` is a :class:`~dipolar_ladder.tebd.TimeSeries` or a ``(t, y)``
    tuple. Starting values come from the spectrum (omega), the mean over the
    last period of the window (c), the first sample (A) and the log-envelope
    slope (tau). ``status`` is 'failed' when the window holds fewer than
    ``min_periods`` oscillations, the optimizer does not converge, or the
    residual RMS exceeds ``rms_bound * |A|``. A series whose peak-to-peak
    spread is below ``flat_tol`` is 'unidentifiable' (tau and omega are NaN);
    the default sits above Trotter noise and far below physical amplitudes.
    """
    t_all, y_all = _series_arrays(series, observable)
    t_min, t_max = map(float, window)
    m = (t_all >= t_min - 1e-12) & (t_all <= t_max + 1e-12)
    t, y = t_all[m], y_all[m]
    nan = float("nan")
    if len(t) < 8:
        return FitResult(nan, nan, nan, nan, {}, (t_min, t_max), nan, "failed", "fewer than 8 samples in window")
    if np.ptp(y) <= flat_tol:
        c = float(np.mean(y))
        return FitResult(c, 0.0, nan, nan, {"c": 0.0}, (t_min, t_max), float(np.std(y)), "unidentifiable",
                         "series is constant; tau and omega not identifiable")

    omega0 = _dominant_frequency(t, y)
    periods = omega0 * (t[-1] - t[0]) / (2 * np.pi)
    period = 2 * np.pi / omega0 if omega0 > 0 else t[-1] - t[0]
    tail = t >= t[-1] - period
    c0 = float(np.mean(y[tail])) if tail.sum() >= 3 else float(np.mean(y[-max(3, len(y) // 3):]))
    A0 = float(y[0] - c0)
    rate0 = _envelope_rate(t - t[0], y - c0)
    if not np.isfinite(rate0) or rate0 <= 0:
        rate0 = 1.0 / (t[-1] - t[0])
    init = {"c": c0, "A": A0, "tau": 1.0 / rate0, "omega": omega0}
    if periods < min_periods:
        return FitResult(nan, nan, nan, nan, {}, (t_min, t_max), nan, "failed",
                         f"window holds {periods:.2f} periods (< {min_periods})", init)

    def model(tt, c, A, rate, omega):
        return c + A * np.exp(-rate * tt) * np.cos(omega * tt)

    try:
        popt, pcov = optimize.curve_fit(
            model, t, y, p0=[c0, A0, rate0, omega0],
            bounds=([-np.inf, -np.inf, 0.0, 0.0], [np.inf, np.inf, np.inf, np.inf]),
            method="trf", x_scale=[abs(A0) or 1.0, abs(A0) or 1.0, rate0, omega0], max_nfev=20000,
        )
    except (RuntimeError, ValueError) as exc:
        return FitResult(nan, nan, nan, nan, {}, (t_min, t_max), nan, "failed", str(exc), init)

    c, A, rate, omega = map(float, popt)
    perr = np.sqrt(np.clip(np.diag(pcov), 0.0, None))
    resid = y - model(t, *popt)
    rms = float(np.sqrt(np.mean(resid**2)))
    tau = 1.0 / rate if rate > 0 else float("inf")
    stderr = {"c": float(perr[0]), "A": float(perr[1]), "tau": float(perr[2] / rate**2) if rate > 0 else nan,
              "omega": float(perr[3]), "rate": float(perr[2])}
    diagnostics = {"c_minus_tail_mean": c - c0, "A_minus_first_minus_c": A - (float(y[0]) - c)}
    status, msg = "ok", ""
    if not np.isfinite(tau) or rate <= 0:
        status, msg = "failed", "no decay resolved (tau infinite)"
    elif not rms < rms_bound * abs(A):
        status, msg = "failed", f"residual RMS {rms:.3g} above {rms_bound} |A|"
    return FitResult(c, A, tau, omega, stderr, (t_min, t_max), rms, status, msg, init, diagnostics)


# ---------------------------------------------------------------------------
# trends


@dataclass
class TrendResult:
    """OLS polynomial; ``coefficients[k]`` multiplies ``x**k``."""

    coefficients: np.ndarray
    stderr: np.ndarray
    r2: float
    degree: int
    n: int
    flag: str = ""

    @property
    def slope(self) -> float:
        return float(self.coefficients[1])

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coefficients)

    def record(self) -> dict:
        return {"coefficients": [float(v) for v in self.coefficients], "stderr": [float(v) for v in self.stderr],
                "r2": self.r2, "degree": self.degree, "n": self.n, "flag": self.flag}


_DEGREES = {"linear": 1, "quadratic": 2}


def parameter_trend(fits, model: str = "linear", key: str = "omega") -> TrendResult:
    """Ordinary least squares of a fit parameter against a control value.

    ``fits`` is a sequence of ``(control, FitResult)`` or ``(control, value)``.
    ``key`` selects the FitResult attribute ('omega', 'rate', 'tau', 'c', 'A').
    With no residual degrees of freedom R^2 and the standard errors are NaN
    and ``flag`` reads 'exact'.
    """
    deg = _DEGREES[model]
    x = np.array([float(cv) for cv, _ in fits])
    y = np.array([float(getattr(f, key)) if isinstance(f, FitResult) else float(f) for _, f in fits])
    n, p = len(x), deg + 1
    if n < p:
        raise ValueError(f"{model} trend needs at least {p} points, got {n}")
    X = np.vander(x, p, increasing=True)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    rss = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    flag = ""
    if n == p:
        stderr = np.full(p, np.nan)
        r2 = float("nan")
        flag = "exact"
    else:
        cov = rss / (n - p) * np.linalg.inv(X.T @ X)
        stderr = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        r2 = 1.0 - rss / tss if tss > 0 else float("nan")
        if tss == 0:
            flag = "constant"
    return TrendResult(coef, stderr, r2, deg, n, flag)


# ---------------------------------------------------------------------------
# light cones


@dataclass
class VelocityEstimate:
    """Front velocity from a site-index vs arrival-time regression.

    ``status`` is 'ok' or 'insufficient_signal'.
    """

    velocity: float
    stderr: float
    peak_times: list[float]
    sites: list[int]
    side: str
    status: str = "ok"
    message: str = ""
    intercept: float = float("nan")
    r2: float = float("nan")
    polarity: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def record(self) -> dict:
        return asdict(self)


def _refine_peak(x, t, k):
    """Parabolic interpolation of a sampled maximum at index k."""
    if k <= 0 or k >= len(x) - 1:
        return float(t[k])
    y0, y1, y2 = x[k - 1], x[k], x[k + 1]
    den = y0 - 2 * y1 + y2
    if den == 0:
        return float(t[k])
    off = 0.5 * (y0 - y2) / den
    return float(t[k] + off * (t[k + 1] - t[k]))


def front_polarity(profiles, sites) -> str:
    """'max' or 'min', from the sign of the largest departure from t = 0 on ``sites``."""
    profiles = np.asarray(profiles, dtype=float)
    cols = np.asarray(sites, dtype=int) - 1
    dev = profiles[:, cols] - profiles[0, cols]
    return "max" if dev.flat[np.argmax(np.abs(dev))] >= 0 else "min"


def front_arrival_times(profiles, times, sites, prominence_frac: float = 0.25, polarity: str = "auto"):
    """First qualifying peak time per 1-based site (NaN where none is found).

    A peak qualifies when its prominence is at least ``prominence_frac`` times
    the full range of that site's trace. ``polarity='min'`` tracks dips;
    ``'auto'`` picks the direction in which the front moves the observable.
    """
    profiles = np.asarray(profiles, dtype=float)
    times = np.asarray(times, dtype=float)
    if polarity == "auto":
        polarity = front_polarity(profiles, sites)
    elif polarity not in ("max", "min"):
        raise ValueError(f"polarity must be 'max', 'min' or 'auto', got {polarity!r}")
    out = []
    for site in sites:
        x = profiles[:, site - 1]
        if polarity == "min":
            x = -x
        span = np.ptp(x)
        if span <= 0:
            out.append(float("nan"))
            continue
        peaks, _ = signal.find_peaks(x, prominence=prominence_frac * span)
        out.append(_refine_peak(x, times, peaks[0]) if len(peaks) else float("nan"))
    return np.array(out)


def track_light_cone(profiles, times, origin: int, side: str = "right", prominence_frac: float = 0.25,
                     edge_margin: int = 5, min_sites: int = 10, polarity: str = "auto",
                     max_distance: int | None = None, min_distance: int = 1,
                     contiguous: bool = True) -> VelocityEstimate:
    """Velocity of the leading front on one side of a local quench.

    Args:
        profiles: array ``(n_times, L)`` of a per-site observable.
        times: sample times.
        origin: 1-based quench site.
        side: 'left' or 'right'.
        edge_margin: sites this close to a chain end are excluded.
        min_sites: the side must offer at least this many usable sites.
        max_distance: optional cap on the distance from ``origin``.
        min_distance: sites closer than this are skipped; near the quenched
            rung the local relaxation can mask the travelling front.
        contiguous: keep only the unbroken run of detected sites starting
            at the one nearest the origin.

    The velocity is the OLS slope of distance |i - origin| against arrival
    time, with the regression standard error.
    """
    profiles = np.asarray(profiles, dtype=float)
    L = profiles.shape[1]
    if side == "right":
        sites = list(range(origin + 1, L - edge_margin + 1))
    elif side == "left":
        sites = list(range(origin - 1, edge_margin, -1))
    else:
        raise ValueError("side must be 'left' or 'right'")
    sites = [s for s in sites if abs(s - origin) >= min_distance]
    if max_distance is not None:
        sites = [s for s in sites if abs(s - origin) <= max_distance]
    nan = float("nan")
    if len(sites) < min_sites:
        return VelocityEstimate(nan, nan, [], sites, side, "insufficient_signal",
                                f"only {len(sites)} usable sites on the {side} side")
    if polarity == "auto":
        polarity = front_polarity(profiles, sites)
    arrival = front_arrival_times(profiles, times, sites, prominence_frac, polarity)
    good = np.isfinite(arrival)
    if contiguous and good.any():
        # the front reaches sites in order: stop at the first site it skips
        first = int(np.argmax(good))
        gap = np.flatnonzero(~good[first:])
        good[first + (gap[0] if len(gap) else len(good)):] = False
    used = [s for s, g in zip(sites, good) if g]
    tp = arrival[good]
    if len(used) < 4:
        return VelocityEstimate(nan, nan, tp.tolist(), used, side, "insufficient_signal",
                                f"{len(used)} detectable peaks (< 4)", polarity=polarity)
    dist = np.abs(np.array(used) - origin).astype(float)
    reg = stats.linregress(tp, dist)
    return VelocityEstimate(float(reg.slope), float(reg.stderr), tp.tolist(), used, side, "ok", "",
                            float(reg.intercept), float(reg.rvalue**2), polarity)


def velocity_vs_coupling(runs) -> TrendResult:
    """Straight line through ``(C, VelocityEstimate or velocity)`` pairs."""
    pts = [(c, v.velocity if isinstance(v, VelocityEstimate) else float(v)) for c, v in runs]
    return parameter_trend(pts, "linear")


# ---------------------------------------------------------------------------
# records


def append_results_csv(path: str | Path, run_id: str, kind: str, params, record: dict, window=None) -> None:
    """Append one fit or velocity record, keyed by run id, with the parameter hash."""
    path = Path(path)
    new = not path.exists()
    row = {
        "run_id": run_id,
        "kind": kind,
        "params_hash": params.digest() if params is not None else "",
        "params": json.dumps(params.to_file_dict(), sort_keys=True) if params is not None else "",
        "window": json.dumps(list(window)) if window is not None else "",
        "record": json.dumps(_jsonable(record), sort_keys=True),
    }
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(row))
        if new:
            w.writeheader()
        w.writerow(row)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj
