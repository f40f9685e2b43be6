"""Synthetic beating-chamber phantoms with linked tabular rows and outcomes.

Each phantom is a bright ellipse ("ventricle wall pool") that contracts
periodically inside a speckled field. The contraction fraction drives both
a noisy ejection-fraction-like tabular feature and the survival outcome,
so video, tabular data, and labels share a known ground-truth structure.

Outcome model (constants frozen after calibration; see module tests):
    logit = B0 + B1 * (0.3 - contraction) + B2 * (age - 60) / 20
    death ~ Bernoulli(sigmoid(logit))
With contraction ~ U(0.05, 0.6) and age ~ U(35, 85) this yields ~24%
positives, an oracle (Bayes) AUC of ~0.975 for the exact probabilities,
and a video-information ceiling of ~0.94.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .evid import RawVideo

B0 = -3.8
B1 = 32.0
B2 = 2.8

CONTRACTION_RANGE = (0.05, 0.6)
AGE_RANGE = (35.0, 85.0)

EHR_WIDTH = 10          # noisy LVEF, age, and 8 pure-noise distractors
LVEF_NOISE_SD = 4.0


@dataclass
class PhantomParams:
    contraction: float
    age: float = 60.0
    noise: float = 0.08
    fps: float = 30.0
    duration: float = 1.5
    height: int = 54
    width: int = 74
    heart_rate_hz: float = 1.2
    # beat-to-beat variability: the RENDERED contraction is a noisy
    # realization of the outcome-driving value, so video is an imperfect
    # readout while the tabular ejection-fraction remains its own noisy
    # measurement of the true value
    contraction_jitter: float = 0.0

    def __post_init__(self):
        lo, hi = CONTRACTION_RANGE
        if not lo <= self.contraction <= hi:
            raise ConfigError(f"contraction must lie in [{lo}, {hi}]")
        if self.noise < 0 or self.fps <= 0 or self.duration <= 0:
            raise ConfigError("noise must be >= 0, fps and duration positive")
        if not 0.0 <= self.contraction_jitter <= 0.15:
            raise ConfigError("contraction jitter must lie in [0, 0.15]")
        if self.height < 8 or self.width < 8:
            raise ConfigError("phantom frames must be at least 8x8")


@dataclass
class PhantomSample:
    video: RawVideo
    ehr: np.ndarray
    label: int
    probability: float            # exact Bernoulli parameter of the label
    params: PhantomParams = field(repr=False, default=None)


def death_probability(contraction: float, age: float) -> float:
    logit = B0 + B1 * (0.3 - contraction) + B2 * (age - 60.0) / 20.0
    return float(1.0 / (1.0 + np.exp(-logit)))


def lvef_like(contraction: float) -> float:
    """Area-based ejection-fraction analogue of the radial contraction."""
    return 100.0 * (1.0 - (1.0 - contraction) ** 2)


def synth_phantom(params: PhantomParams, seed: int) -> PhantomSample:
    """One deterministic phantom: video, tabular vector, outcome."""
    rng = np.random.default_rng(seed)
    h, w = params.height, params.width
    n_frames = int(round(params.duration * params.fps)) + 1
    t = np.arange(n_frames) / params.fps

    # geometry: centered ellipse with mild per-phantom jitter
    cy = h / 2.0 + rng.uniform(-0.04, 0.04) * h
    cx = w / 2.0 + rng.uniform(-0.04, 0.04) * w
    ry0 = 0.32 * h * rng.uniform(0.9, 1.1)
    rx0 = 0.30 * w * rng.uniform(0.9, 1.1)
    rendered = params.contraction
    if params.contraction_jitter > 0:
        rendered = float(np.clip(
            rendered + params.contraction_jitter * rng.standard_normal(), 0.01, 0.7))
    phase = 2.0 * np.pi * params.heart_rate_hz * t
    scale = 1.0 - rendered * (1.0 - np.cos(phase)) / 2.0

    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    background = 24.0 + 20.0 * rng.random((h, w))
    frames = np.empty((n_frames, h, w), dtype=np.float64)
    for i in range(n_frames):
        ry = ry0 * scale[i]
        rx = rx0 * scale[i]
        dist = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        body = np.where(dist <= 1.0, 195.0, 0.0)
        # soft edge keeps the boundary sub-pixel smooth
        edge = np.clip(1.0 - (dist - 1.0) / 0.18, 0.0, 1.0)
        frames[i] = background + np.maximum(body, 195.0 * np.where(dist > 1.0, edge, 0.0))
    if params.noise > 0:
        frames *= 1.0 + params.noise * rng.standard_normal(frames.shape)
    frames = np.clip(np.rint(frames), 0, 255).astype(np.uint8)

    p = death_probability(params.contraction, params.age)
    label = int(rng.random() < p)

    ehr = np.empty(EHR_WIDTH, dtype=np.float64)
    ehr[0] = lvef_like(params.contraction) + LVEF_NOISE_SD * rng.standard_normal()
    ehr[1] = params.age
    ehr[2:] = rng.standard_normal(EHR_WIDTH - 2)

    video = RawVideo(
        frames=frames, fps=params.fps, view_tag="pl deep",
        acquisition_id=f"phantom-{seed}",
        provenance=(f"synth:seed={seed},a={params.contraction:.4f}",))
    return PhantomSample(video=video, ehr=ehr, label=label, probability=p, params=params)


def phantom_corpus(n: int, seed: int, noise: float = 0.08, fps: float = 30.0,
                   duration: float = 1.5, height: int = 54, width: int = 74,
                   contraction_jitter: float = 0.0):
    """Yield n samples with contraction and age drawn from the cohort ranges.

    Each sample gets an independent child seed, so corpus generation is
    order-independent and reproducible.
    """
    root = np.random.SeedSequence(seed)
    draws = np.random.default_rng(root.spawn(1)[0])
    child_seeds = root.generate_state(n, dtype=np.uint32)
    for i in range(n):
        params = PhantomParams(
            contraction=float(draws.uniform(*CONTRACTION_RANGE)),
            age=float(draws.uniform(*AGE_RANGE)),
            noise=noise, fps=fps, duration=duration, height=height, width=width,
            contraction_jitter=contraction_jitter)
        yield synth_phantom(params, int(child_seeds[i]))
