"""Synthetic beam-space channels and the fingerprint preprocessing chain.

A snapshot is a 128x46 complex matrix (beam x subcarrier).  Preprocessing
applies a 46-point Hann window across subcarriers, a direct inverse DFT
along the same axis (1/N normalization), and takes the magnitude, giving a
non-negative 128x46 beam-delay fingerprint.

The generator replaces a proprietary measurement set: LoS-like profiles
put energy in a few beams with compact delay support, NLoS-like profiles
spread it wider over beams and delays, and a complex-Gaussian diffuse
floor sits under everything.  All randomness is seeded and reproducible.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace

import numpy as np

N_BEAMS = 128
N_SUBCARRIERS = 46

FINGERPRINT_MAGIC = b"BDFP"

# Delay spread (in bins) of the dominant paths and the per-beam lognormal
# gain spread of the diffuse floor, per propagation flavor.  The spread is
# what creates nearly-dead beams for the row-skip logic to find.
_DELAY_SPREAD = {"S1": 5, "S2": 24, "S3": 12}
_BEAM_GAIN_SIGMA = {"S1": 0.9, "S2": 0.5, "S3": 0.75}

PROFILE_DEFAULTS = {
    "S1": dict(dominant_beams=6, dominant_delays=2, diffuse_floor=0.35),
    "S2": dict(dominant_beams=40, dominant_delays=8, diffuse_floor=1.10),
    "S3": dict(dominant_beams=20, dominant_delays=5, diffuse_floor=0.50),
}


@dataclass(frozen=True)
class ScenarioProfile:
    scenario: str
    dominant_beams: int
    dominant_delays: int
    diffuse_floor: float
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in PROFILE_DEFAULTS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if not 1 <= self.dominant_beams <= N_BEAMS:
            raise ValueError("dominant_beams must be in 1..128")
        if not 1 <= self.dominant_delays <= N_SUBCARRIERS:
            raise ValueError("dominant_delays must be in 1..46")
        if self.diffuse_floor < 0:
            raise ValueError("diffuse_floor must be >= 0")


def default_profile(scenario: str, seed: int = 0, **overrides) -> ScenarioProfile:
    params = dict(PROFILE_DEFAULTS[scenario])
    params.update(overrides)
    return ScenarioProfile(scenario=scenario, seed=seed, **params)


def generate_channel(profile: ScenarioProfile) -> np.ndarray:
    """One 128x46 complex frequency-domain snapshot, deterministic per seed."""
    rng = np.random.default_rng(profile.seed)
    beam_gain = rng.lognormal(0.0, _BEAM_GAIN_SIGMA[profile.scenario], size=(N_BEAMS, 1))
    h = profile.diffuse_floor * beam_gain * (
        rng.standard_normal((N_BEAMS, N_SUBCARRIERS))
        + 1j * rng.standard_normal((N_BEAMS, N_SUBCARRIERS))
    ) / np.sqrt(2.0)

    spread = _DELAY_SPREAD[profile.scenario]
    beams = rng.choice(N_BEAMS, size=profile.dominant_beams, replace=False)
    k = np.arange(N_SUBCARRIERS)
    for b in beams:
        row_gain = rng.uniform(0.6, 1.4)
        taus = rng.choice(spread, size=min(profile.dominant_delays, spread), replace=False)
        for tau in taus:
            amp = row_gain * rng.uniform(0.4, 1.0)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            h[b] += amp * np.exp(1j * (phase - 2.0 * np.pi * k * tau / N_SUBCARRIERS))
    return h


def hann_window(h: np.ndarray, periodic: bool = False) -> np.ndarray:
    """Scale each subcarrier column by the Hann taper.

    Symmetric by default (denominator N-1, endpoint weights exactly 0);
    the periodic variant (denominator N) is available as a flag.
    """
    if h.shape[-1] != N_SUBCARRIERS:
        raise ValueError(f"expected {N_SUBCARRIERS} subcarriers, got {h.shape[-1]}")
    denom = N_SUBCARRIERS if periodic else N_SUBCARRIERS - 1
    w = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(N_SUBCARRIERS) / denom))
    return h * w


# Direct O(N^2) inverse DFT matrix; N = 46 is small enough that this is
# both trivial to verify and fast.
_IDFT = np.exp(2j * np.pi * np.outer(np.arange(N_SUBCARRIERS), np.arange(N_SUBCARRIERS))
               / N_SUBCARRIERS) / N_SUBCARRIERS


def beam_delay_transform(h: np.ndarray) -> np.ndarray:
    """Per-row inverse DFT (1/N normalization) followed by magnitude."""
    if h.shape[-1] != N_SUBCARRIERS:
        raise ValueError(f"expected {N_SUBCARRIERS} subcarriers, got {h.shape[-1]}")
    return np.abs(h @ _IDFT)


def preprocess(h: np.ndarray, periodic: bool = False) -> np.ndarray:
    return beam_delay_transform(hann_window(h, periodic=periodic))


def generate_fingerprints(profile: ScenarioProfile, count: int, periodic: bool = False) -> np.ndarray:
    """Batch of preprocessed snapshots; snapshot i uses seed profile.seed + i."""
    out = np.empty((count, N_BEAMS, N_SUBCARRIERS), dtype=np.float64)
    for i in range(count):
        snap = generate_channel(replace(profile, seed=profile.seed + i))
        out[i] = preprocess(snap, periodic=periodic)
    return out


# --------------------------------------------------------------------------
# Fingerprint container file: magic "BDFP", u32 count, then per snapshot
# 128x46 float32 values, row-major, little-endian.


def write_fingerprints(path, fingerprints: np.ndarray) -> None:
    fps = np.asarray(fingerprints, dtype=np.float32)
    if fps.ndim != 3 or fps.shape[1:] != (N_BEAMS, N_SUBCARRIERS):
        raise ValueError(f"expected (count, {N_BEAMS}, {N_SUBCARRIERS}), got {fps.shape}")
    with open(path, "wb") as f:
        f.write(FINGERPRINT_MAGIC)
        f.write(struct.pack("<I", fps.shape[0]))
        f.write(fps.astype("<f4").tobytes())


def read_fingerprints(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != FINGERPRINT_MAGIC:
            raise ValueError(f"not a fingerprint file (magic {magic!r})")
        (count,) = struct.unpack("<I", f.read(4))
        payload = f.read(count * N_BEAMS * N_SUBCARRIERS * 4)
    data = np.frombuffer(payload, dtype="<f4", count=count * N_BEAMS * N_SUBCARRIERS)
    return data.reshape(count, N_BEAMS, N_SUBCARRIERS).astype(np.float64)


def export_csv(path, fingerprints: np.ndarray) -> None:
    """Inspection export: one row per (snapshot, beam) with 46 delay columns."""
    fps = np.asarray(fingerprints)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["snapshot", "beam"] + [f"d{j}" for j in range(N_SUBCARRIERS)])
        for s in range(fps.shape[0]):
            for b in range(N_BEAMS):
                writer.writerow([s, b] + [repr(v) for v in fps[s, b].tolist()])
