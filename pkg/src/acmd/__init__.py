"""Adaptive channel-matched detection for CD-impaired IM/DD OOK links.

The receiver chains a polynomial nonlinear equalizer (PNLE), an AR-MA
decision-feedback equalizer (DFE) and a noise-whitening post filter with
maximum-likelihood sequence estimation (MLSE).  The package also simulates
the link those stages are meant for: RRC-shaped OOK, DAC, MZM, standard
single-mode fiber, ASE noise, square-law detection and the ADC.
"""

from .signal import ParameterError, SampledSignal, SeededRng, SymbolFrame, design_rrc
from .runner import PRESETS, LinkScenario, preset, run_scenario, run_sweep

__version__ = "0.1.0"

__all__ = [
    "ParameterError",
    "SampledSignal",
    "SeededRng",
    "SymbolFrame",
    "design_rrc",
    "PRESETS",
    "LinkScenario",
    "preset",
    "run_scenario",
    "run_sweep",
]
