"""Named reference systems: the three-user unequal-power MAC and its worked paths.

Each preset bundles a system, a decoding path, the per-user rate targets, the
check distributions and variable-degree set the optimizer is run with, and the
reference optimized profiles for comparison.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from app.core.errors import ConfigError
from app.models.path import MsePath
from app.models.profile import DegreeProfile, OptimizerSettings, parse_degree_set
from app.models.system import Modulation, SystemConfig

THREE_USER_G = (1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    config: SystemConfig
    path: MsePath
    target: tuple[float, ...]
    eta: tuple[dict[int, float], ...]
    degrees: str
    reference_lam: tuple[dict[int, float], ...] = ()
    reference_rates: tuple[float, ...] = ()
    layer_power: Optional[float] = None
    snr_db: float = 0.0
    notes: str = ""
    template: Optional[tuple[tuple[Optional[float], ...], ...]] = field(default=None)
    anchor: Optional[tuple[float, ...]] = None

    def optimizer_settings(self, user: int, **overrides) -> OptimizerSettings:
        return OptimizerSettings(degrees=parse_degree_set(self.degrees), eta_candidates=(self.eta[user],), **overrides)

    def reference_profile(self, user: int) -> DegreeProfile:
        """Reference profile for ``user``, renormalized (stored to four decimals)."""
        lam = self.reference_lam[user]
        total = sum(lam.values())
        return DegreeProfile(lam={d: w / total for d, w in lam.items()}, eta=self.eta[user])


def _three_user(noise_var: float = 1.0) -> SystemConfig:
    return SystemConfig(K=3, g=THREE_USER_G, noise_var=noise_var, modulation=Modulation.QPSK)


CASE_1 = Scenario(
    name="case1",
    config=_three_user(),
    path=MsePath.from_points([[1, 1, 1], [0, 0, 0]]),
    target=(0.1429, 0.2857, 0.5714),
    eta=({3: 1.0}, {4: 1.0}, {5: 1.0}),
    degrees="2:1:30, 35:5:50, 60:10:100",
    reference_lam=(
        {2: 0.5239, 3: 0.2140, 7: 0.1627, 30: 0.0685, 35: 0.0309},
        {2: 0.3770, 3: 0.2168, 7: 0.0719, 8: 0.1577, 40: 0.1237, 100: 0.0529},
        {2: 0.3293, 3: 0.2351, 8: 0.2500, 21: 0.0654, 22: 0.0014, 45: 0.0258, 50: 0.0930},
    ),
    reference_rates=(0.1467, 0.3014, 0.5707),
    notes="straight line, rates proportional to power",
)

CASE_2 = Scenario(
    name="case2",
    config=_three_user(),
    path=MsePath.from_points([[1, 1, 1], [0.2145, 0.2056, 0], [0, 0.0618, 0], [0, 0, 0]]),
    target=(0.15, 0.30, 0.55),
    eta=({3: 1.0}, {4: 1.0}, {5: 1.0}),
    degrees="2:1:30, 35:5:50",
    reference_lam=(
        {2: 0.5234, 3: 0.2292, 7: 0.0896, 8: 0.0590, 30: 0.0708, 35: 0.0280},
        {2: 0.3779, 3: 0.2290, 7: 0.1431, 8: 0.0580, 50: 0.1920},
        {2: 0.3218, 3: 0.2273, 7: 0.0879, 8: 0.1654, 20: 0.0501, 21: 0.0335, 50: 0.1140},
    ),
    reference_rates=(0.1555, 0.3154, 0.5522),
    template=((None, None, 0.0), (0.0, None, 0.0)),
    anchor=(0.2, 0.2, 0.0625),
    notes="path solved for an arbitrary target on the dominant face",
)

CASE_3 = Scenario(
    name="case3",
    config=_three_user(),
    path=MsePath.from_points([[1, 1, 1], [0.5, 0.2, 0.2], [0, 0, 0]]),
    target=(0.157, 0.281, 0.562),
    eta=({3: 1.0}, {4: 1.0}, {5: 1.0}),
    degrees="2:1:30, 35:5:50",
    reference_lam=(
        {2: 0.5250, 3: 0.2138, 6: 0.0978, 7: 0.0618, 30: 0.0604, 35: 0.0412},
        {2: 0.3788, 3: 0.1925, 6: 0.0763, 7: 0.1589, 50: 0.1935},
        {2: 0.3289, 3: 0.2277, 8: 0.1189, 9: 0.1747, 45: 0.1337, 50: 0.0161},
    ),
    reference_rates=(0.1588, 0.2926, 0.5608),
    notes="arbitrary intermediate breakpoint",
)

HIGH_RATE = Scenario(
    name="highrate",
    config=_three_user(noise_var=1.0 / 3.0),
    path=MsePath.from_points([[1, 1, 1], [0.9635, 0.7154, 0.0953], [0, 0, 0]]),
    target=(0.4, 0.7, 0.9),
    eta=({4: 1.0}, {3: 1.0}, {3: 1.0}),
    degrees="2:1:50, 60:10:100",
    reference_lam=(
        {2: 0.4107, 3: 0.2398, 8: 0.1875, 9: 0.0339, 10: 0.0001, 22: 0.0001, 35: 0.0834, 100: 0.0445},
        {2: 0.6158, 3: 0.2261, 6: 0.0726, 7: 0.0413, 44: 0.0002, 50: 0.0440},
        {2: 0.5703, 3: 0.1699, 6: 0.1130, 7: 0.0713, 16: 0.0001, 25: 0.0277, 26: 0.0477},
    ),
    reference_rates=(0.4145, 0.6844, 0.8652),
    layer_power=1.0 / 7.0,
    snr_db=4.771212547196624,
    notes="sum rate 2; users split into 1, 2 and 4 equal-power layers",
)

# Four equal-power BPSK users at 20 dB, one shared code; used for decoder LLR histograms.
LLR_HISTOGRAM = Scenario(
    name="llrhist",
    config=SystemConfig(K=4, g=(0.25, 0.25, 0.25, 0.25), noise_var=0.01, modulation=Modulation.BPSK),
    path=MsePath.from_points([[1, 1, 1, 1], [0, 0, 0, 0]]),
    target=(0.25, 0.25, 0.25, 0.25),
    eta=({3: 1.0},) * 4,
    degrees="2, 3, 12",
    reference_lam=({2: 0.5231, 3: 0.3187, 12: 0.1582},) * 4,
    snr_db=20.0,
    notes="decoder-output LLR densities per outer iteration",
)

PRESETS: dict[str, Scenario] = {s.name: s for s in (CASE_1, CASE_2, CASE_3, HIGH_RATE, LLR_HISTOGRAM)}


def get_preset(name: str) -> Scenario:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
