"""Shared geometry constants and trial builders for the test suite."""

import numpy as np

from nfloc import (ArrayConfig, BeamformerSetting, EmitterPosition,
                   fresnel_interval, synthesize)

# 240-element reference geometry used throughout: Ms=3, L=5 -> K=80, G=16,
# 30 GHz so wavelength = 1 cm and d = 5 mm.
REF = ArrayConfig.from_counts(M=240, Ms=3, L=5, carrier_freq=30e9)

# cheap geometry for statistical checks: 24 elements, Ms=2, L=3 -> G=4
SMALL = ArrayConfig.from_counts(M=24, Ms=2, L=3, carrier_freq=30e9)

POS = EmitterPosition(theta=np.radians(60.0), range_m=20.0)


def snaps_for(cfg, pos, snr_db, T, entropy):
    """One synthesized trial with a counter-derived seed (zero analog phases)."""
    return synthesize(cfg, pos, BeamformerSetting.zeros(cfg), snr_db, T,
                      np.random.SeedSequence(entropy=entropy))


def random_position(cfg, rng, theta_lo=-np.pi / 2, theta_hi=np.pi / 2, r_hi=None):
    """Uniform draw over the angle span and the Fresnel interval."""
    fi = fresnel_interval(cfg)
    hi = fi.r_max if r_hi is None else min(r_hi, fi.r_max)
    return EmitterPosition(theta=float(rng.uniform(theta_lo, theta_hi)),
                           range_m=float(rng.uniform(fi.r_min, hi)))
