"""Tap-set files.

Format: a NumPy ``.npz`` archive.  Every array is named
``<set>.<field>``; ``pnle.sizes`` holds ``(K1, K2, K3)`` and
``dfe.sizes`` holds ``(F1, F2)``.  Present sets:

========  =====================================
``pnle``  ``h1``, ``h2``, ``h3``, ``sizes``
``dfe``   ``f1``, ``f2``, ``sizes``
``pf``    ``w`` (post-filter / trellis taps)
``ac``    ``R`` (noise autocorrelation lags)
========  =====================================
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .equalizers import DfeTaps, PnleTaps
from .mlse import NoiseAutocorr, PostFilterTaps
from .signal import ParameterError

__all__ = ["save_taps", "load_taps"]


def save_taps(path, pnle: PnleTaps | None = None, dfe: DfeTaps | None = None,
              pf: PostFilterTaps | None = None, ac: NoiseAutocorr | None = None) -> Path:
    arrays = {}
    if pnle is not None:
        arrays.update({"pnle.h1": pnle.h1, "pnle.h2": pnle.h2, "pnle.h3": pnle.h3,
                       "pnle.sizes": np.array(pnle.sizes)})
    if dfe is not None:
        arrays.update({"dfe.f1": dfe.f1, "dfe.f2": dfe.f2, "dfe.sizes": np.array([dfe.f1.size, dfe.f2.size])})
    if pf is not None:
        arrays["pf.w"] = pf.w
    if ac is not None:
        arrays["ac.R"] = ac.R
    if not arrays:
        raise ParameterError("nothing to save")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_taps(path) -> dict:
    """Inverse of :func:`save_taps`; returns the sets that are present."""
    out = {}
    with np.load(Path(path)) as z:
        names = set(z.files)
        if "pnle.h1" in names:
            sizes = tuple(int(s) for s in z["pnle.sizes"])
            p = PnleTaps(z["pnle.h1"], z["pnle.h2"], z["pnle.h3"])
            if p.sizes != sizes:
                raise ParameterError("PNLE sizes do not match the stored arrays")
            out["pnle"] = p
        if "dfe.f1" in names:
            out["dfe"] = DfeTaps(z["dfe.f1"], z["dfe.f2"])
        if "pf.w" in names:
            out["pf"] = PostFilterTaps(z["pf.w"])
        if "ac.R" in names:
            out["ac"] = NoiseAutocorr(z["ac.R"])
    return out
