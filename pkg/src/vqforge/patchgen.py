"""Space-time patch coordinates (sv, tv and stv patches) for a source video.

Sizes scale each cropped dimension by 0.4: the sv patch keeps the full
duration, the tv patch the full frame, and the stv patch is cropped in all
three. Placement is random, subject to the sv and tv patches each covering at
most a quarter of the stv patch's volume.

The stv patch is drawn uniformly over its valid origins. The sv and tv origins
are then rejection-sampled uniformly among those meeting their overlap limit,
so all three are uniform given the stv placement.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import BadMeta, InfeasibleGeometry

SCALE = 0.4
MAX_OVERLAP = 0.25
MAX_ATTEMPTS = 1000
KINDS = ("sv", "tv", "stv")


def round_half_up(x):
    """Round half away from zero (inputs here are non-negative)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class PatchBox:
    x0: int
    y0: int
    w: int
    h: int
    t0: int
    d: int

    @property
    def volume(self):
        return self.w * self.h * self.d

    def contained_in(self, width, height, frames):
        return (self.x0 >= 0 and self.y0 >= 0 and self.t0 >= 0
                and self.x0 + self.w <= width and self.y0 + self.h <= height
                and self.t0 + self.d <= frames)


@dataclass(frozen=True)
class PatchTriplet:
    video_id: str
    sv: PatchBox
    tv: PatchBox
    stv: PatchBox

    def rows(self):
        for kind in KINDS:
            b = getattr(self, kind)
            yield (self.video_id, kind, b.x0, b.y0, b.w, b.h, b.t0, b.d)


def _overlap_1d(a0, alen, b0, blen):
    return max(0, min(a0 + alen, b0 + blen) - max(a0, b0))


def overlap_fraction(a, b):
    """Volume of ``a & b`` divided by the volume of ``b``."""
    inter = (_overlap_1d(a.x0, a.w, b.x0, b.w)
             * _overlap_1d(a.y0, a.h, b.y0, b.h)
             * _overlap_1d(a.t0, a.d, b.t0, b.d))
    return inter / b.volume


def patch_sizes(width, height, frames, scale=SCALE):
    return (round_half_up(scale * width), round_half_up(scale * height),
            round_half_up(scale * frames))


def video_seed(seed, video_id):
    """Per-video seed material: the global seed mixed with a stable hash of the id."""
    digest = hashlib.blake2b(str(video_id).encode("utf-8"), digest_size=8).digest()
    return [int(seed), int.from_bytes(digest, "little")]


def _has_partners(stv, W, H, T, max_overlap):
    """True if some sv and some tv placement meet the overlap limit against ``stv``.

    Overlap along each axis is smallest at one end of the placement range, so
    checking the extreme positions is exhaustive.
    """
    sv_ok = any(overlap_fraction(PatchBox(x, y, stv.w, stv.h, 0, T), stv) <= max_overlap
                for x in (0, W - stv.w) for y in (0, H - stv.h))
    tv_ok = any(overlap_fraction(PatchBox(0, 0, W, H, t, stv.d), stv) <= max_overlap
                for t in (0, T - stv.d))
    return sv_ok and tv_ok


def gen_patch_triplet(meta, seed=0, scale=SCALE, max_overlap=MAX_OVERLAP,
                      max_attempts=MAX_ATTEMPTS):
    """Draw one sv/tv/stv triplet for ``meta`` (anything with width/height/frame_count/id)."""
    W, H, T = int(meta.width), int(meta.height), int(meta.frame_count)
    if min(W, H, T) < 5:
        raise BadMeta(f"{meta.id}: {W}x{H}x{T} is too small for patch cropping (need >= 5)")
    pw, ph, pd = patch_sizes(W, H, T, scale)
    rng = np.random.default_rng(video_seed(seed, meta.id))

    for _ in range(max_attempts):
        stv = PatchBox(int(rng.integers(0, W - pw + 1)), int(rng.integers(0, H - ph + 1)),
                       pw, ph, int(rng.integers(0, T - pd + 1)), pd)
        if _has_partners(stv, W, H, T, max_overlap):
            break
    else:
        raise InfeasibleGeometry(f"{meta.id}: no stv placement admits sv/tv partners "
                                 f"in {max_attempts} attempts")

    for _ in range(max_attempts):
        sv = PatchBox(int(rng.integers(0, W - pw + 1)), int(rng.integers(0, H - ph + 1)),
                      pw, ph, 0, T)
        if overlap_fraction(sv, stv) <= max_overlap:
            break
    else:
        raise InfeasibleGeometry(f"{meta.id}: no sv placement found in {max_attempts} attempts")

    for _ in range(max_attempts):
        tv = PatchBox(0, 0, W, H, int(rng.integers(0, T - pd + 1)), pd)
        if overlap_fraction(tv, stv) <= max_overlap:
            break
    else:
        raise InfeasibleGeometry(f"{meta.id}: no tv placement found in {max_attempts} attempts")

    return PatchTriplet(str(meta.id), sv, tv, stv)


def generate_patches(metas, seed=0, **kwargs):
    return [gen_patch_triplet(m, seed, **kwargs) for m in metas]


def write_patch_csv(triplets, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["video_id", "patch_kind", "x0", "y0", "w", "h", "t0", "d"])
    for trip in triplets:
        writer.writerows(trip.rows())
