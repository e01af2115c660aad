"""Holistic spatio-temporal video features.

Twenty-six numbers per video. Ten per-frame scalars (absolute luminance,
colourfulness, RMS contrast, face count and six first-derivative responses
from a Leung-Malik style bank) are reduced to their mean and standard deviation
over frames. Six temporal values follow: for each of three temporal scales, the
time-averaged magnitude of a temporal Gaussian-derivative response is reduced
to its spatial mean and standard deviation.

All convolutions are "valid" (no padding) correlations, and every standard
deviation is the population one.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import FormatError, FrameTooSmall, SidecarMismatch, TooFewFrames
from .media_io import FrameSequence, to_gray

LM_SCALES = (1.0, math.sqrt(2.0), 2.0)
LM_ELONGATION = 3.0
TEMPORAL_SCALES = (1.0, 2.0, 4.0)

_FRAME_SCALARS = (
    "lum", "color", "contrast", "faces",
    "lm_s1_o0", "lm_s1_o90", "lm_s2_o0", "lm_s2_o90", "lm_s3_o0", "lm_s3_o90",
)
FEATURE_NAMES = tuple(
    f"{name}_{stat}" for name in _FRAME_SCALARS for stat in ("mean", "std")
) + ("t1_spmean", "t1_spstd", "t2_spmean", "t2_spstd", "t4_spmean", "t4_spstd")

# frames per LM batch; bounds the float64 working set on HD input
_FRAME_CHUNK = 8
_ROW_CHUNK = 64


@dataclass(frozen=True)
class FaceSidecar:
    video_id: str
    per_frame_counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.per_frame_counts)
        if any(c < 0 for c in counts):
            raise FormatError(f"{self.video_id}: negative face count")
        object.__setattr__(self, "per_frame_counts", counts)

    @classmethod
    def load(cls, path):
        info = json.loads(Path(path).read_text())
        try:
            return cls(str(info["video_id"]), info["counts"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}: face sidecar needs video_id and counts") from exc


def kernel_radius(sigma):
    return int(math.ceil(3.0 * sigma))


def gaussian_kernel(sigma, radius):
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (k / sigma) ** 2)
    return g / g.sum()


def gaussian_derivative_kernel(sigma, radius):
    """First derivative of a Gaussian, scaled so a unit ramp responds with exactly 1.

    Used as a correlation kernel: ``sum_k d[k] * f[i + k]``.
    """
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (k / sigma) ** 2)
    d = k * g
    return d / np.sum(k * d)


def frame_colorfulness(frame):
    """Hasler-Suesstrunk colourfulness of one RGB frame (or a stack of them)."""
    f = np.asarray(frame, dtype=np.float64)
    r, g, b = f[..., 0], f[..., 1], f[..., 2]
    rg = r - g
    yb = 0.5 * (r + g) - b
    axes = (-2, -1)
    std_root = np.sqrt(rg.var(axis=axes) + yb.var(axis=axes))
    mean_root = np.sqrt(rg.mean(axis=axes) ** 2 + yb.mean(axis=axes) ** 2)
    out = std_root + 0.3 * mean_root
    return float(out) if out.ndim == 0 else out


def frame_rms_contrast(frame):
    """Population std of luma over its mean; 0 for an all-black frame."""
    y = to_gray(frame)
    mu = y.mean(axis=(-2, -1))
    sigma = y.std(axis=(-2, -1))
    out = np.divide(sigma, mu, out=np.zeros_like(np.asarray(sigma, dtype=np.float64)),
                    where=np.asarray(mu) > 0)
    return float(out) if np.ndim(out) == 0 else out


def _oriented_mean(gray, d, g, r):
    """Mean |response| of the 0 deg filter (derivative along x, smoothing along y)."""
    _, h, w = gray.shape
    resp = correlate1d(correlate1d(gray, d, axis=2, mode="constant"), g, axis=1, mode="constant")
    return np.abs(resp[:, r:h - r, r:w - r]).mean(axis=(1, 2))


def _lm_batch(gray, scales, elongation):
    """Mean |response| per frame for each (scale, orientation); shape (n, 2*len(scales)).

    The 90 deg response is the 0 deg filter applied to the transposed frames,
    so transposing the input swaps the two orientations bit for bit.
    """
    n, h, w = gray.shape
    gray_t = np.ascontiguousarray(gray.transpose(0, 2, 1))
    gray = np.ascontiguousarray(gray)
    out = np.empty((n, 2 * len(scales)))
    for i, sigma in enumerate(scales):
        r = kernel_radius(elongation * sigma)
        if h <= 2 * r or w <= 2 * r:
            raise FrameTooSmall(
                f"frame {w}x{h} has no valid pixels for a {2 * r + 1}-tap kernel (sigma={sigma:g})"
            )
        d = gaussian_derivative_kernel(sigma, r)
        g = gaussian_kernel(elongation * sigma, r)
        out[:, 2 * i] = _oriented_mean(gray, d, g, r)
        out[:, 2 * i + 1] = _oriented_mean(gray_t, d, g, r)
    return out


def lm_responses(frame, scales=LM_SCALES, elongation=LM_ELONGATION):
    """Six oriented first-derivative responses of one grey frame.

    Order is ``(s1 0deg, s1 90deg, s2 0deg, s2 90deg, s3 0deg, s3 90deg)``; each
    value is the mean absolute response over the valid region.
    """
    gray = np.asarray(frame, dtype=np.float64)
    if gray.ndim != 2:
        raise FormatError(f"expected a 2-D grey frame, got shape {gray.shape}")
    return _lm_batch(gray[None], scales, elongation)[0]


def temporal_band_features(volume, scales=TEMPORAL_SCALES):
    """Spatial mean and std of the time-averaged temporal-derivative magnitude.

    ``volume`` is ``(T, H, W)``. Returns ``(mean_1, std_1, mean_2, std_2, ...)``.
    """
    vol = np.asarray(volume, dtype=np.float64)
    t, h, w = vol.shape
    need = 2 * kernel_radius(max(scales)) + 1
    if t < need:
        raise TooFewFrames(f"{t} frames; temporal scale {max(scales):g} needs at least {need}")
    out = []
    for sigma in scales:
        r = kernel_radius(sigma)
        d = gaussian_derivative_kernel(sigma, r)
        amap = np.empty((h, w))
        for y0 in range(0, h, _ROW_CHUNK):
            block = vol[:, y0:y0 + _ROW_CHUNK]
            resp = correlate1d(block, d, axis=0, mode="constant")[r:t - r]
            amap[y0:y0 + _ROW_CHUNK] = np.abs(resp).mean(axis=0)
        out.extend((amap.mean(), amap.std()))
    return np.array(out)


def frame_scalars(seq, faces=None, lm_scales=LM_SCALES, elongation=LM_ELONGATION):
    """Per-frame scalar table, shape ``(T, 10)``, columns in feature order."""
    t = seq.meta.frame_count
    if faces is not None:
        counts = faces.per_frame_counts if isinstance(faces, FaceSidecar) else tuple(faces)
        if len(counts) != t:
            raise SidecarMismatch(
                f"{seq.meta.id}: face sidecar has {len(counts)} counts for {t} frames"
            )
        face_col = np.asarray(counts, dtype=np.float64)
    else:
        face_col = np.zeros(t)
    table = np.empty((t, 4 + 2 * len(lm_scales)))
    for start in range(0, t, _FRAME_CHUNK):
        rgb = seq.frames[start:start + _FRAME_CHUNK]
        sl = slice(start, start + len(rgb))
        gray = to_gray(rgb)
        table[sl, 0] = rgb.astype(np.float64).sum(axis=-1).mean(axis=(1, 2))
        table[sl, 1] = frame_colorfulness(rgb)
        mu = gray.mean(axis=(1, 2))
        sd = gray.std(axis=(1, 2))
        table[sl, 2] = np.divide(sd, mu, out=np.zeros_like(sd), where=mu > 0)
        table[sl, 4:] = _lm_batch(gray, lm_scales, elongation)
    table[:, 3] = face_col
    return table


def extract_features(seq, faces=None, lm_scales=LM_SCALES, elongation=LM_ELONGATION,
                     temporal_scales=TEMPORAL_SCALES):
    """The 26-entry feature vector of one video, ordered as ``FEATURE_NAMES``.

    Without a face sidecar both face entries are 0.
    """
    if not isinstance(seq, FrameSequence):
        raise TypeError(f"expected FrameSequence, got {type(seq).__name__}")
    if faces is not None and isinstance(faces, FaceSidecar) and faces.video_id != seq.meta.id:
        raise SidecarMismatch(f"face sidecar is for {faces.video_id!r}, video is {seq.meta.id!r}")
    table = frame_scalars(seq, faces, lm_scales, elongation)
    spatial = np.column_stack([table.mean(axis=0), table.std(axis=0)]).ravel()
    temporal = temporal_band_features(to_gray(seq), temporal_scales)
    return np.concatenate([spatial, temporal])


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Transformer mapping videos to rows of the 26-feature matrix.

    ``transform`` takes a list whose items are either a FrameSequence or a
    ``(FrameSequence, FaceSidecar | None)`` pair. Fitting learns nothing.
    """

    def __init__(self, lm_scales=LM_SCALES, elongation=LM_ELONGATION,
                 temporal_scales=TEMPORAL_SCALES, n_jobs=None):
        self.lm_scales = lm_scales
        self.elongation = elongation
        self.temporal_scales = temporal_scales
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        self.n_features_out_ = len(FEATURE_NAMES)
        return self

    def _one(self, item):
        seq, faces = item if isinstance(item, tuple) else (item, None)
        return extract_features(seq, faces, tuple(self.lm_scales), self.elongation,
                                tuple(self.temporal_scales))

    def transform(self, X):
        items = list(X)
        if self.n_jobs in (None, 1) or len(items) < 2:
            rows = [self._one(it) for it in items]
        else:
            from joblib import Parallel, delayed

            rows = Parallel(n_jobs=self.n_jobs)(delayed(self._one)(it) for it in items)
        return np.vstack(rows) if rows else np.empty((0, len(FEATURE_NAMES)))

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)
