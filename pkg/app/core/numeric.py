"""Shared numeric conventions: rates in bits, SNRs labelled linear or dB."""
from __future__ import annotations

import math

import numpy as np

from app.models.system import SystemConfig

LN2 = math.log(2.0)


def db_to_linear(db):
    return np.power(10.0, np.asarray(db, dtype=float) / 10.0) if np.ndim(db) else 10.0 ** (float(db) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x) if np.ndim(x) else 10.0 * math.log10(float(x))


def nats_to_bits(x):
    return x / LN2


def snr_sum(cfg: SystemConfig) -> tuple[float, float]:
    """Multi-user SNR sum(g)/sigma^2 as ``(linear, dB)``."""
    lin = cfg.total_power / cfg.noise_var
    return lin, 10.0 * math.log10(lin)
