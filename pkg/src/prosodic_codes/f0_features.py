"""F0 contours, normalised log-F0 features with dynamics, and MLPG.

Feature frames are ``(static, delta, delta-delta)`` of mean-variance
normalised log-F0.  Frames are 5 ms apart; ``0.0`` in an F0 track marks an
unvoiced frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import AllUnvoiced, EmptyCorpus, LengthMismatch, SingularSystem

FRAME_SHIFT = 0.005
STD_FLOOR = 1e-6

# Window coefficients over frames (t-1, t, t+1).
DELTA_WINDOW = (-0.5, 0.0, 0.5)
ACCEL_WINDOW = (1.0, -2.0, 1.0)


@dataclass
class F0Contour:
    f0_hz: np.ndarray
    frame_shift: float = FRAME_SHIFT

    def __post_init__(self):
        self.f0_hz = np.asarray(self.f0_hz, dtype=np.float64).reshape(-1)
        if self.f0_hz.size < 1:
            raise ValueError("F0 contour needs at least one frame")
        if not np.all(np.isfinite(self.f0_hz)) or np.any(self.f0_hz < 0):
            raise ValueError("F0 values must be finite and non-negative")

    def __len__(self):
        return self.f0_hz.size

    @property
    def voiced(self) -> np.ndarray:
        return self.f0_hz > 0


@dataclass
class NormStats:
    mean: float
    std: float
    global_std_static: float = 1.0
    global_std_delta: float = 1.0
    global_std_deltadelta: float = 1.0

    def __post_init__(self):
        if not (self.std > 0 and self.global_std_static > 0
                and self.global_std_delta > 0 and self.global_std_deltadelta > 0):
            raise ValueError("all standard deviations must be positive")

    @property
    def global_stds(self) -> np.ndarray:
        return np.array([self.global_std_static, self.global_std_delta,
                         self.global_std_deltadelta])

    def to_text(self) -> str:
        return "".join(f"{k}={float(v)!r}\n" for k, v in self.__dict__.items())

    @classmethod
    def from_text(cls, text: str) -> "NormStats":
        values = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = float(val)
        return cls(**values)


@dataclass
class FeatureSequence:
    frames: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != 3 or self.frames.shape[0] < 1:
            raise ValueError(f"feature frames must be (T>=1, 3), got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("feature frames must be finite")

    def __len__(self):
        return self.frames.shape[0]

    @property
    def static(self):
        return self.frames[:, 0]


def interpolate_unvoiced(contour: F0Contour) -> F0Contour:
    """Fill unvoiced frames linearly between voiced neighbours.

    Leading and trailing unvoiced runs take the nearest voiced value.
    """
    f0 = contour.f0_hz
    voiced = f0 > 0
    if not voiced.any():
        raise AllUnvoiced("contour has no voiced frames")
    idx = np.arange(f0.size)
    filled = np.interp(idx, idx[voiced], f0[voiced])
    filled[voiced] = f0[voiced]
    return F0Contour(filled, contour.frame_shift)


def compute_deltas(static) -> FeatureSequence:
    """Stack a static trajectory with its delta and delta-delta, edges replicated."""
    x = np.asarray(static, dtype=np.float64).reshape(-1)
    padded = np.concatenate([x[:1], x, x[-1:]])
    prev, nxt = padded[:-2], padded[2:]
    delta = 0.5 * (nxt - prev)
    accel = nxt - 2.0 * x + prev
    return FeatureSequence(np.stack([x, delta, accel], axis=1))


def normalise_log_f0(contour: F0Contour, stats: NormStats) -> np.ndarray:
    filled = interpolate_unvoiced(contour).f0_hz
    return (np.log(filled) - stats.mean) / stats.std


def extract_features(contour: F0Contour, stats: NormStats) -> FeatureSequence:
    return compute_deltas(normalise_log_f0(contour, stats))


def compute_norm_stats(contours) -> NormStats:
    """Corpus log-F0 mean/std plus the global stds of the three feature streams."""
    contours = list(contours)
    if not contours:
        raise EmptyCorpus("no contours given")
    logs = [np.log(interpolate_unvoiced(c).f0_hz) for c in contours]
    # accumulate in a fixed order so the result does not depend on batching
    n = sum(v.size for v in logs)
    mean = float(sum(float(v.sum()) for v in logs) / n)
    var = float(sum(float(((v - mean) ** 2).sum()) for v in logs) / n)
    std = max(np.sqrt(var), STD_FLOOR)
    feats = np.concatenate([compute_deltas((v - mean) / std).frames for v in logs])
    gstd = np.maximum(feats.std(axis=0), STD_FLOOR)
    return NormStats(mean, float(std), float(gstd[0]), float(gstd[1]), float(gstd[2]))


def _window_matrices(T: int):
    """Dense (T, T) static, delta and delta-delta operators with edge replication."""
    mats = []
    for coeffs in ((0.0, 1.0, 0.0), DELTA_WINDOW, ACCEL_WINDOW):
        W = np.zeros((T, T))
        for t in range(T):
            for off, c in zip((-1, 0, 1), coeffs):
                j = min(max(t + off, 0), T - 1)
                W[t, j] += c
        mats.append(W)
    return mats


def mlpg_normal_equations(means, global_stds):
    """Banded precision matrix (lower storage, bandwidth 2) and right-hand side.

    Builds ``A = sum_s W_s^T W_s / var_s`` and ``r = sum_s W_s^T mu_s / var_s``
    without forming the dense windows.
    """
    means = np.asarray(means, dtype=np.float64)
    T = means.shape[0]
    prec = 1.0 / np.asarray(global_stds, dtype=np.float64) ** 2
    band = np.zeros((3, T))
    rhs = np.zeros(T)
    for s, coeffs in enumerate(((0.0, 1.0, 0.0), DELTA_WINDOW, ACCEL_WINDOW)):
        for t in range(T):
            # row t of W_s as (column, weight) pairs after edge replication
            cols = {}
            for off, c in zip((-1, 0, 1), coeffs):
                if c == 0.0:
                    continue
                j = min(max(t + off, 0), T - 1)
                cols[j] = cols.get(j, 0.0) + c
            items = [(j, c) for j, c in cols.items() if c != 0.0]
            for j, c in items:
                rhs[j] += prec[s] * c * means[t, s]
                for i, ci in items:
                    if i >= j and i - j <= 2:
                        band[i - j, j] += prec[s] * c * ci
    return band, rhs


def mlpg(means, stats_or_stds) -> np.ndarray:
    """Smooth static trajectory maximising the Gaussian likelihood of ``means``.

    Parameters
    ----------
    means : array (T, 3)
        Predicted (static, delta, delta-delta) means.
    stats_or_stds : NormStats or sequence of three positive floats
        Per-stream global standard deviations.
    """
    stds = stats_or_stds.global_stds if isinstance(stats_or_stds, NormStats) \
        else np.asarray(stats_or_stds, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    if means.ndim != 2 or means.shape[1] != 3 or means.shape[0] < 1:
        raise ValueError(f"means must be (T>=1, 3), got {means.shape}")
    if np.any(stds <= 0):
        raise ValueError("global stds must be positive")
    band, rhs = mlpg_normal_equations(means, stds)
    x, ok = kernels.banded_cholesky_solve(band, rhs)
    if not ok:
        raise SingularSystem("MLPG normal matrix is not positive definite")
    return x


def mlpg_dense(means, stds) -> np.ndarray:
    """Reference MLPG using dense window matrices and ``numpy.linalg.solve``."""
    means = np.asarray(means, dtype=np.float64)
    T = means.shape[0]
    prec = 1.0 / np.asarray(stds, dtype=np.float64) ** 2
    A = np.zeros((T, T))
    r = np.zeros(T)
    for s, W in enumerate(_window_matrices(T)):
        A += prec[s] * W.T @ W
        r += prec[s] * W.T @ means[:, s]
    return np.linalg.solve(A, r)


def features_to_hz(static, stats: NormStats) -> F0Contour:
    static = np.asarray(static, dtype=np.float64)
    return F0Contour(np.exp(static * stats.std + stats.mean))


def f0_rmse(reference: F0Contour, generated: F0Contour) -> float:
    """RMSE in Hz over frames voiced in ``reference``."""
    ref = reference.f0_hz if isinstance(reference, F0Contour) else np.asarray(reference, float)
    gen = generated.f0_hz if isinstance(generated, F0Contour) else np.asarray(generated, float)
    if ref.shape != gen.shape:
        raise LengthMismatch(f"lengths differ: {ref.size} vs {gen.size}")
    voiced = ref > 0
    if not voiced.any():
        return 0.0
    return float(np.sqrt(np.mean((ref[voiced] - gen[voiced]) ** 2)))


def read_f0_file(path) -> F0Contour:
    from .errors import FormatError

    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise FormatError(f"not a number: {line!r}", path, lineno) from None
    if not values:
        raise FormatError("empty F0 file", path)
    try:
        return F0Contour(np.array(values))
    except ValueError as exc:
        raise FormatError(str(exc), path) from None


def write_f0_file(path, contour: F0Contour):
    with open(path, "w") as fh:
        for v in contour.f0_hz:
            fh.write(f"{float(v)!r}\n")
