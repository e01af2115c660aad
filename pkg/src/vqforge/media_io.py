"""Decoded-frame ingest: YUV4MPEG2 (4:2:0), PNG frame directories and raw RGB.

All readers return a :class:`FrameSequence` holding a read-only
``(T, H, W, 3)`` uint8 array in presentation order. Nothing is ever resized.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyError, FormatError, MediaIOError

FORMATS = ("y4m", "png_sequence_dir", "raw_rgb")

# BT.601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

_Y4M_MAGIC = b"YUV4MPEG2"
_Y4M_420 = {"420", "420jpeg", "420paldv", "420mpeg2"}


@dataclass(frozen=True)
class VideoMeta:
    id: str
    width: int
    height: int
    frame_count: int
    fps: float
    source_tag: str = ""

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.frame_count < 1:
            raise FormatError(
                f"{self.id}: dimensions must be positive, got "
                f"{self.width}x{self.height}x{self.frame_count}"
            )
        if not self.fps > 0:
            raise FormatError(f"{self.id}: fps must be positive, got {self.fps}")


@dataclass(frozen=True, eq=False)
class FrameSequence:
    meta: VideoMeta
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise FormatError(f"frames must have shape (T, H, W, 3), got {frames.shape}")
        if frames.dtype != np.uint8:
            raise FormatError(f"frames must be uint8, got {frames.dtype}")
        m = self.meta
        if frames.shape[:3] != (m.frame_count, m.height, m.width):
            raise FormatError(
                f"{m.id}: frame array {frames.shape[:3]} does not match meta "
                f"{(m.frame_count, m.height, m.width)}"
            )
        frames = frames.copy() if frames.flags.writeable else frames
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @classmethod
    def from_array(cls, frames, video_id="video", fps=30.0, source_tag=""):
        """Wrap a ``(T, H, W, 3)`` uint8 array, deriving the metadata from its shape."""
        frames = np.asarray(frames)
        if frames.ndim != 4 or frames.shape[0] == 0:
            raise EmptyError(f"{video_id}: no frames")
        t, h, w = frames.shape[:3]
        meta = VideoMeta(video_id, w, h, t, fps, source_tag)
        return cls(meta, frames)

    def __len__(self):
        return self.meta.frame_count


def to_gray(frames):
    """Luma volume ``(T, H, W)`` as float64 in [0, 255].

    Accepts a :class:`FrameSequence` or any ``(..., 3)`` RGB array.
    """
    rgb = frames.frames if isinstance(frames, FrameSequence) else np.asarray(frames)
    rgb = rgb.astype(np.float64)
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def load_frames(path, format="y4m", video_id=None):
    """Read a video from ``path``.

    ``format`` is one of ``y4m``, ``png_sequence_dir`` or ``raw_rgb``. Raw RGB
    files need a JSON sidecar at ``<path>.json`` carrying the VideoMeta fields.
    """
    path = Path(path)
    if format not in FORMATS:
        raise FormatError(f"unknown format {format!r}; expected one of {FORMATS}")
    if not path.exists():
        raise MediaIOError(f"{path}: no such file or directory")
    if format == "y4m":
        return _read_y4m(path, video_id)
    if format == "png_sequence_dir":
        return _read_png_dir(path, video_id)
    return _read_raw_rgb(path, video_id)


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise MediaIOError(f"{path}: {exc.strerror or exc}") from exc


def _parse_y4m_header(line):
    tokens = line.split(b" ")
    if not tokens or tokens[0] != _Y4M_MAGIC:
        raise FormatError("missing YUV4MPEG2 signature")
    params = {}
    for tok in tokens[1:]:
        if tok:
            params[chr(tok[0])] = tok[1:].decode("ascii", "replace")
    try:
        width, height = int(params["W"]), int(params["H"])
    except (KeyError, ValueError) as exc:
        raise FormatError("y4m header lacks a valid W/H") from exc
    fps = 30.0
    if "F" in params:
        try:
            num, den = params["F"].split(":")
            fps = int(num) / int(den)
        except (ValueError, ZeroDivisionError) as exc:
            raise FormatError(f"bad y4m frame rate {params['F']!r}") from exc
    chroma = params.get("C", "420jpeg")
    if chroma not in _Y4M_420:
        raise FormatError(f"unsupported y4m chroma {chroma!r}; only 4:2:0 is read")
    if params.get("I", "p") not in ("p", "?"):
        raise FormatError("interlaced y4m is not supported")
    if width < 1 or height < 1:
        raise FormatError(f"bad y4m dimensions {width}x{height}")
    return width, height, fps


def ycbcr420_to_rgb(y, cb, cr):
    """BT.601 full-range YCbCr with 2x2 subsampled chroma to RGB uint8.

    Chroma is upsampled by nearest neighbour (pixel repetition).
    """
    h, w = y.shape
    cb = np.repeat(np.repeat(cb, 2, axis=0), 2, axis=1)[:h, :w].astype(np.float64) - 128.0
    cr = np.repeat(np.repeat(cr, 2, axis=0), 2, axis=1)[:h, :w].astype(np.float64) - 128.0
    yf = y.astype(np.float64)
    r = yf + 1.402 * cr
    g = yf - 0.344136 * cb - 0.714136 * cr
    b = yf + 1.772 * cb
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def rgb_to_ycbcr420(rgb):
    """Inverse of :func:`ycbcr420_to_rgb`; chroma is averaged over 2x2 blocks."""
    f = rgb.astype(np.float64)
    r, g, b = f[..., 0], f[..., 1], f[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    h, w = y.shape
    ch, cw = (h + 1) // 2, (w + 1) // 2

    def pool(c):
        padded = np.pad(c, ((0, 2 * ch - h), (0, 2 * cw - w)), mode="edge")
        return padded.reshape(ch, 2, cw, 2).mean(axis=(1, 3))

    to8 = lambda a: np.clip(np.rint(a), 0, 255).astype(np.uint8)  # noqa: E731
    return to8(y), to8(pool(cb)), to8(pool(cr))


def _read_y4m(path, video_id):
    data = _read_bytes(path)
    end = data.find(b"\n")
    if end < 0:
        raise FormatError(f"{path}: truncated y4m header")
    width, height, fps = _parse_y4m_header(data[:end])
    ch, cw = (height + 1) // 2, (width + 1) // 2
    luma, chroma = width * height, cw * ch
    frame_size = luma + 2 * chroma
    frames = []
    pos = end + 1
    while pos < len(data):
        nl = data.find(b"\n", pos)
        if nl < 0 or not data[pos:nl].startswith(b"FRAME"):
            raise FormatError(f"{path}: bad frame marker at byte {pos}")
        pos = nl + 1
        if pos + frame_size > len(data):
            raise FormatError(f"{path}: truncated frame {len(frames)}")
        buf = np.frombuffer(data, dtype=np.uint8, count=frame_size, offset=pos)
        y = buf[:luma].reshape(height, width)
        cb = buf[luma:luma + chroma].reshape(ch, cw)
        cr = buf[luma + chroma:].reshape(ch, cw)
        frames.append(ycbcr420_to_rgb(y, cb, cr))
        pos += frame_size
    if not frames:
        raise EmptyError(f"{path}: zero frames")
    vid = video_id or path.stem
    return FrameSequence(VideoMeta(vid, width, height, len(frames), fps, "y4m"), np.stack(frames))


def write_y4m(seq, path):
    """Write a FrameSequence as 4:2:0 YUV4MPEG2 (lossy: chroma is subsampled)."""
    m = seq.meta
    num, den = float(m.fps).as_integer_ratio()
    header = f"YUV4MPEG2 W{m.width} H{m.height} F{num}:{den} Ip A1:1 C420jpeg\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for frame in seq.frames:
            y, cb, cr = rgb_to_ycbcr420(frame)
            fh.write(b"FRAME\n")
            fh.write(y.tobytes())
            fh.write(cb.tobytes())
            fh.write(cr.tobytes())


def _read_png_dir(path, video_id):
    from PIL import Image

    if not path.is_dir():
        raise MediaIOError(f"{path}: not a directory")
    names = sorted(p for p in os.listdir(path) if p.lower().endswith(".png"))
    if not names:
        raise EmptyError(f"{path}: no PNG frames")
    frames = []
    for name in names:
        try:
            with Image.open(path / name) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except OSError as exc:
            raise MediaIOError(f"{path / name}: {exc}") from exc
        if frames and arr.shape != frames[0].shape:
            raise FormatError(
                f"{path / name}: size {arr.shape[1]}x{arr.shape[0]} differs from "
                f"{frames[0].shape[1]}x{frames[0].shape[0]}"
            )
        frames.append(arr)
    fps, tag = 30.0, "png"
    sidecar = path / "meta.json"
    if sidecar.exists():
        info = json.loads(sidecar.read_text())
        fps = float(info.get("fps", fps))
        tag = info.get("source_tag", tag)
    h, w = frames[0].shape[:2]
    vid = video_id or path.name
    return FrameSequence(VideoMeta(vid, w, h, len(frames), fps, tag), np.stack(frames))


def _read_raw_rgb(path, video_id):
    sidecar = Path(str(path) + ".json")
    if not sidecar.exists():
        raise MediaIOError(f"{sidecar}: raw RGB input needs a JSON metadata sidecar")
    try:
        info = json.loads(sidecar.read_text())
        meta = VideoMeta(
            id=str(video_id or info.get("id", path.stem)),
            width=int(info["width"]),
            height=int(info["height"]),
            frame_count=int(info["frame_count"]),
            fps=float(info["fps"]),
            source_tag=str(info.get("source_tag", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{sidecar}: bad metadata ({exc})") from exc
    data = _read_bytes(path)
    if not data:
        raise EmptyError(f"{path}: zero frames")
    frame_size = meta.width * meta.height * 3
    if len(data) != frame_size * meta.frame_count:
        raise FormatError(
            f"{path}: {len(data)} bytes, expected {frame_size * meta.frame_count} "
            f"for {meta.frame_count} frames of {meta.width}x{meta.height}"
        )
    frames = np.frombuffer(data, dtype=np.uint8).reshape(
        meta.frame_count, meta.height, meta.width, 3
    )
    return FrameSequence(meta, frames)


def write_raw_rgb(seq, path):
    """Write headerless interleaved RGB plus the ``<path>.json`` metadata sidecar."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(seq.frames).tobytes())
    Path(str(path) + ".json").write_text(json.dumps(asdict(seq.meta), sort_keys=True))
