"""Simulated QPSK transmissions with per-device power-amplifier fingerprints.

Chain per sample: random symbols -> root-raised-cosine pulse shaping ->
drive-level normalization -> memoryless Saleh PA -> AWGN.  Every sample
gets its own random stream derived from ``(seed, device_id, sample_index)``
so generation order does not matter.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DegenerateInputError

NO_NOISE = math.inf

# Saleh parameter ranges used when drawing device fingerprints.
PA_RANGES = {
    "alpha_a": (0.95, 1.05),
    "beta_a": (0.01, 0.10),
    "alpha_p": (0.0, 0.3),
    "beta_p": (0.5, 1.5),
}

_SPLIT_KEY = 0x5B117


class Modulation(str, Enum):
    QPSK = "QPSK"


@dataclass(frozen=True)
class DeviceProfile:
    device_id: int
    alpha_a: float
    beta_a: float
    alpha_p: float
    beta_p: float

    def __post_init__(self):
        if self.beta_a < 0 or self.beta_p < 0:
            raise ConfigError(f"Saleh denominators must be non-negative: {self}")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SimConfig:
    num_devices: int = 4
    samples_per_class: int = 2000
    sample_len: int = 1024
    oversample: int = 8
    rolloff: float = 0.35
    snr_db: float = 18.0
    modulation: Modulation = Modulation.QPSK
    seed: int = 0
    span_symbols: int = 8
    # mean power of the shaped waveform entering the PA
    drive_power: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "modulation", _as_modulation(self.modulation))
        if self.snr_db is None:
            object.__setattr__(self, "snr_db", NO_NOISE)
        if self.num_devices < 2:
            raise ConfigError("num_devices must be >= 2")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be >= 1")
        if self.oversample < 2:
            raise ConfigError("oversample must be >= 2")
        if self.sample_len <= 0 or self.sample_len % self.oversample:
            raise ConfigError(
                f"sample_len ({self.sample_len}) must be a positive multiple of "
                f"oversample ({self.oversample})"
            )
        if not 0 < self.rolloff <= 1:
            raise ConfigError("rolloff must lie in (0, 1]")
        if self.drive_power <= 0:
            raise ConfigError("drive_power must be positive")

    def to_dict(self):
        d = asdict(self)
        d["modulation"] = self.modulation.value
        if math.isinf(self.snr_db):
            d["snr_db"] = None
        return d


def _as_modulation(value):
    try:
        return Modulation(value)
    except ValueError:
        raise ConfigError(f"unsupported modulation: {value!r}") from None


def sample_rng(seed, *key):
    """Independent generator for a tuple key under a master seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def generate_symbols(modulation, n, rng):
    """Draw ``n`` unit-energy constellation points."""
    modulation = _as_modulation(modulation)
    if n < 1:
        raise ConfigError("need at least one symbol")
    bits = rng.integers(0, 2, size=(n, 2))
    return ((1 - 2 * bits[:, 0]) + 1j * (1 - 2 * bits[:, 1])) / math.sqrt(2)


def rrc_taps(rolloff, span_symbols=8, oversample=8, normalize=True):
    """Root-raised-cosine impulse response, ``span_symbols * oversample + 1`` taps.

    Time is measured in samples, so the symbol period is ``T = oversample``.
    With ``normalize`` the taps are scaled to unit energy.
    """
    if not 0 < rolloff <= 1:
        raise ConfigError(f"rolloff must lie in (0, 1], got {rolloff}")
    if span_symbols < 4:
        raise ConfigError("span_symbols must be >= 4")
    if oversample < 2:
        raise ConfigError("oversample must be >= 2")
    if span_symbols * oversample % 2:
        raise ConfigError("span_symbols * oversample must be even for a centered filter")

    beta = float(rolloff)
    T = float(oversample)
    half = span_symbols * oversample // 2
    t = np.arange(-half, half + 1, dtype=np.float64) / T  # in symbol periods
    h = np.empty_like(t)

    at_zero = t == 0
    at_sing = np.isclose(np.abs(t), 1.0 / (4 * beta))
    rest = ~(at_zero | at_sing)

    h[at_zero] = 1 - beta + 4 * beta / math.pi
    a = math.pi / (4 * beta)
    h[at_sing] = beta / math.sqrt(2) * (
        (1 + 2 / math.pi) * math.sin(a) + (1 - 2 / math.pi) * math.cos(a)
    )
    tr = t[rest]
    num = np.sin(math.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(math.pi * tr * (1 + beta))
    den = math.pi * tr * (1 - (4 * beta * tr) ** 2)
    h[rest] = num / den
    h /= math.sqrt(T)

    if normalize:
        h /= math.sqrt(np.sum(h * h))
    return h


def pulse_shape(symbols, taps, oversample):
    """Upsample by zero insertion and filter; output has ``len(symbols) * oversample`` samples.

    The filter's group delay is removed so that symbol ``k`` peaks at
    sample ``k * oversample``.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if symbols.size == 0:
        raise DegenerateInputError("no symbols to shape")
    n_out = symbols.size * oversample
    up = np.zeros(n_out, dtype=np.complex128)
    up[::oversample] = symbols
    full = np.convolve(up, taps)
    delay = (len(taps) - 1) // 2
    return full[delay:delay + n_out]


def matched_filter(signal, taps):
    """Filter with the time-reversed taps, group-delay aligned to the input."""
    full = np.convolve(signal, taps[::-1])
    delay = (len(taps) - 1) // 2
    return full[delay:delay + len(signal)]


def qpsk_decide(values):
    """Hard QPSK decision back onto the unit-energy constellation."""
    values = np.asarray(values)
    return (np.where(values.real >= 0, 1.0, -1.0) + 1j * np.where(values.imag >= 0, 1.0, -1.0)) / math.sqrt(2)


def apply_pa(signal, profile):
    """Memoryless Saleh AM/AM + AM/PM distortion."""
    x = np.asarray(signal, dtype=np.complex128)
    r2 = x.real ** 2 + x.imag ** 2
    gain = profile.alpha_a / (1.0 + profile.beta_a * r2)
    phase = profile.alpha_p * r2 / (1.0 + profile.beta_p * r2)
    if profile.alpha_p == 0:
        return x * gain
    return x * gain * np.exp(1j * phase)


def add_awgn(signal, snr_db, rng):
    """Add circular Gaussian noise at ``snr_db`` relative to the measured signal power.

    ``snr_db = inf`` (``NO_NOISE``) returns an unchanged copy.
    """
    x = np.asarray(signal, dtype=np.complex128)
    if snr_db is None or snr_db == math.inf:
        return x.copy()
    power = float(np.mean(x.real ** 2 + x.imag ** 2))
    if not power > 0:
        raise DegenerateInputError("cannot calibrate noise against a zero-power signal")
    sigma2 = power / 10.0 ** (snr_db / 10.0)
    noise = rng.standard_normal((2,) + x.shape)
    return x + math.sqrt(sigma2 / 2) * (noise[0] + 1j * noise[1])


def measured_snr_db(clean, noisy):
    clean = np.asarray(clean)
    noise = np.asarray(noisy) - clean
    return 10 * math.log10(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2))


def draw_profiles(num_devices, seed):
    """Draw distinct Saleh fingerprints uniformly from ``PA_RANGES``."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0xFA,)))
    profiles = []
    for d in range(num_devices):
        vals = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in PA_RANGES.items()}
        profiles.append(DeviceProfile(device_id=d, **vals))
    return profiles


def simulate_sample(config, profile, index, taps=None):
    """One received sample for ``profile``; pure function of (config, profile, index)."""
    if taps is None:
        taps = rrc_taps(config.rolloff, config.span_symbols, config.oversample)
    rng = sample_rng(config.seed, profile.device_id, index)
    symbols = generate_symbols(config.modulation, config.sample_len // config.oversample, rng)
    shaped = pulse_shape(symbols, taps, config.oversample)
    shaped *= math.sqrt(config.drive_power / np.mean(np.abs(shaped) ** 2))
    return add_awgn(apply_pa(shaped, profile), config.snr_db, rng)


def split_sizes(n):
    """Per-class (train, val, test) sizes for a 3:1:1 split."""
    n_train = 3 * n // 5
    n_val = n // 5
    return n_train, n_val, n - n_train - n_val


def simulate_dataset(config, profiles=None):
    """Simulate every device and split each class 3:1:1 into train/val/test.

    The train split lands in ``dataset.labeled``; use
    :func:`sscsr.dataio.assign_condition` to carve out the unlabeled part.
    """
    from .dataio import SignalDataset

    if profiles is None:
        profiles = draw_profiles(config.num_devices, config.seed)
    if len(profiles) != config.num_devices:
        raise ConfigError(f"expected {config.num_devices} device profiles, got {len(profiles)}")
    ids = [p.device_id for p in profiles]
    if sorted(ids) != list(range(config.num_devices)):
        raise ConfigError(f"device ids must be 0..{config.num_devices - 1}, got {ids}")

    taps = rrc_taps(config.rolloff, config.span_symbols, config.oversample)
    n = config.samples_per_class
    n_train, n_val, _ = split_sizes(n)
    parts = {"train": ([], []), "val": ([], []), "test": ([], [])}
    for profile in sorted(profiles, key=lambda p: p.device_id):
        block = np.stack([simulate_sample(config, profile, i, taps) for i in range(n)])
        order = sample_rng(config.seed, _SPLIT_KEY, profile.device_id).permutation(n)
        for name, idx in (
            ("train", order[:n_train]),
            ("val", order[n_train:n_train + n_val]),
            ("test", order[n_train + n_val:]),
        ):
            idx = np.sort(idx)
            parts[name][0].append(block[idx])
            parts[name][1].append(np.full(idx.size, profile.device_id, dtype=np.int32))

    def cat(name):
        xs, ys = parts[name]
        return np.concatenate(xs).astype(np.complex64), np.concatenate(ys)

    train_x, train_y = cat("train")
    val_x, val_y = cat("val")
    test_x, test_y = cat("test")
    return SignalDataset(
        labeled_x=train_x,
        labeled_y=train_y,
        unlabeled_x=np.zeros((0, config.sample_len), dtype=np.complex64),
        val_x=val_x,
        val_y=val_y,
        test_x=test_x,
        test_y=test_y,
        num_classes=config.num_devices,
    )
