"""Strong augmentation for complex baseband samples.

A composite draw applies one transform picked uniformly from a set of
rotations and flips, then shuffles ``k`` contiguous segments.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# exact quarter-turn multipliers, so rot90 composed four times is bit-exact
_QUARTER_TURNS = {0: 1 + 0j, 90: 1j, 180: -1 + 0j, 270: -1j}

ROTATIONS = ("rot0", "rot90", "rot180", "rot270")
MODULATION_TRANSFORMS = ROTATIONS + ("fliph", "flipv")


def rotate(sample, theta):
    return np.asarray(sample) * np.exp(1j * theta)


def flip_h(sample):
    """(i, q) -> (-i, q)."""
    return np.conj(-np.asarray(sample))


def flip_v(sample):
    """(i, q) -> (i, -q)."""
    return np.conj(np.asarray(sample))


def segment_bounds(length, k):
    """Segment boundaries; the first ``length % k`` segments are one element longer."""
    if not 1 <= k <= length:
        raise ConfigError(f"k must lie in [1, {length}], got {k}")
    base, extra = divmod(length, k)
    sizes = np.full(k, base)
    sizes[:extra] += 1
    return np.concatenate([[0], np.cumsum(sizes)])


def permute_segments(sample, k, rng=None, order=None):
    """Split into ``k`` contiguous segments and re-concatenate them in a random order.

    ``order`` (0-based segment indices) overrides the random draw.
    """
    sample = np.asarray(sample)
    bounds = segment_bounds(sample.shape[-1], k)
    if k == 1:
        return sample.copy()
    if order is None:
        order = rng.permutation(k)
    return np.concatenate([sample[..., bounds[i]:bounds[i + 1]] for i in order], axis=-1)


def _parse_transform(name):
    name = name.strip().lower()
    if name in ("fliph", "flipv"):
        return name
    m = re.fullmatch(r"rot(-?\d+(?:\.\d+)?)", name)
    if not m:
        raise ConfigError(f"unknown transform {name!r}; expected rot<degrees>, fliph or flipv")
    deg = float(m.group(1)) % 360
    return f"rot{int(deg)}" if deg.is_integer() else f"rot{deg:g}"


def is_identity(name):
    return name == "rot0"


def apply_transform(sample, name):
    """Apply one named transform (``rot<deg>``, ``fliph`` or ``flipv``)."""
    if name == "fliph":
        return flip_h(sample)
    if name == "flipv":
        return flip_v(sample)
    deg = float(name[3:])
    if deg in _QUARTER_TURNS:
        return np.asarray(sample) * _QUARTER_TURNS[deg]
    return rotate(sample, math.radians(deg))


@dataclass(frozen=True)
class AugmentConfig:
    transforms: tuple = ROTATIONS
    k_segments: int = 2
    exclude_identity: bool = False
    _effective: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.transforms, str):
            raise ConfigError("transforms must be a list of names, not a single string")
        names = tuple(dict.fromkeys(_parse_transform(t) for t in self.transforms))
        if not names:
            raise ConfigError("at least one transform is required")
        if int(self.k_segments) < 1:
            raise ConfigError("k_segments must be >= 1")
        object.__setattr__(self, "transforms", names)
        object.__setattr__(self, "k_segments", int(self.k_segments))
        effective = tuple(t for t in names if not (self.exclude_identity and is_identity(t)))
        object.__setattr__(self, "_effective", effective)

    @property
    def effective(self):
        return self._effective

    @classmethod
    def modulation_preset(cls):
        """Six transforms and 64-segment permutation, as used for modulation recognition."""
        return cls(transforms=MODULATION_TRANSFORMS, k_segments=64)

    def to_dict(self):
        return {
            "transforms": list(self.transforms),
            "k_segments": self.k_segments,
            "exclude_identity": self.exclude_identity,
        }


def composite_augment(sample, config, rng):
    """One transform drawn uniformly from ``config.effective``, then segment shuffling."""
    choices = config.effective
    if not choices:
        raise ConfigError("no transforms left after excluding rot0")
    name = choices[rng.integers(len(choices))]
    return permute_segments(apply_transform(sample, name), config.k_segments, rng)
