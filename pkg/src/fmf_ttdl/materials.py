"""Refractive-index models and piecewise-constant radial fiber profiles.

Fused silica follows the three-term Sellmeier fit of Malitson (1965); the
germania endpoint uses the coefficients of Fleming (1984).  A raised (doped)
layer is modelled one of two ways:

``scaled-silica``
    layer index = cladding Sellmeier index times (1 + delta), with the
    relative step delta taken wavelength-independent.  Deterministic and
    reproducible; the default.

``sellmeier-blend``
    Sellmeier coefficients interpolated linearly between the silica and
    germania endpoint sets, with the blend fraction of each layer calibrated
    so that its index at 1.55 um equals cladding * (1 + delta).  Closer to
    real doped-glass dispersion at the price of a coefficient-choice
    ambiguity.

Wavelengths are in micrometres throughout this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from scipy.optimize import brentq

from .fileio import FileFormatError, iter_config_lines

# Three-term Sellmeier fits, (amplitude, resonance wavelength in um) per term.
SILICA_SELLMEIER = (
    (0.6961663, 0.0684043),
    (0.4079426, 0.1162414),
    (0.8974794, 9.896161),
)  # fused silica, Malitson (1965)

GERMANIA_SELLMEIER = (
    (0.80686642, 0.068972606),
    (0.71815848, 0.15396605),
    (0.85416831, 11.841931),
)  # GeO2 glass, Fleming (1984)

SCALED_SILICA = "scaled-silica"
SELLMEIER_BLEND = "sellmeier-blend"

WAVELENGTH_RANGE_UM = (0.5, 2.0)
BLEND_CALIBRATION_UM = 1.55
_RESONANCE_EPS_UM = 1e-9


class MaterialError(ValueError):
    """Invalid material model or evaluation request."""


class WavelengthRangeError(MaterialError):
    """Wavelength outside the supported evaluation band."""


class ResonanceSingularityError(MaterialError):
    """Wavelength coincides with a Sellmeier resonance."""


def _sellmeier_n(terms, wavelength_um):
    lam2 = wavelength_um * wavelength_um
    total = 1.0
    for amplitude, resonance in terms:
        total += amplitude * lam2 / (lam2 - resonance * resonance)
    if not math.isfinite(total) or total <= 0.0:
        raise MaterialError(
            f"Sellmeier sum is non-physical ({total}) at {wavelength_um} um"
        )
    return math.sqrt(total)


@dataclass(frozen=True)
class MaterialModel:
    """Sellmeier description of the cladding glass and its doped variants."""

    kind: str = SCALED_SILICA
    silica_terms: tuple = SILICA_SELLMEIER
    germania_terms: tuple = GERMANIA_SELLMEIER

    def __post_init__(self):
        if self.kind not in (SCALED_SILICA, SELLMEIER_BLEND):
            raise MaterialError(
                f"kind must be '{SCALED_SILICA}' or '{SELLMEIER_BLEND}', got '{self.kind}'"
            )
        object.__setattr__(self, "silica_terms", tuple(tuple(t) for t in self.silica_terms))
        object.__setattr__(self, "germania_terms", tuple(tuple(t) for t in self.germania_terms))
        endpoint_fractions = (0.0, 1.0) if self.kind == SELLMEIER_BLEND else (0.0,)
        for terms in (self.silica_terms, self.germania_terms):
            for amplitude, resonance in terms:
                if not (amplitude > 0.0 and resonance > 0.0):
                    raise MaterialError(
                        f"Sellmeier amplitudes and resonance wavelengths must be > 0, "
                        f"got ({amplitude}, {resonance})"
                    )
        # index must stay finite and above 1 across the design band
        for fraction in endpoint_fractions:
            terms = self.terms(fraction)
            for lam in (1.2, 1.325, 1.45, 1.575, 1.7):
                n = _sellmeier_n(terms, lam)
                if not (math.isfinite(n) and n > 1.0):
                    raise MaterialError(
                        f"model index {n} at {lam} um violates n > 1 on [1.2, 1.7] um"
                    )

    def terms(self, blend_fraction=0.0):
        """Sellmeier terms at the given silica->germania blend fraction."""
        if blend_fraction == 0.0:
            return self.silica_terms
        return tuple(
            (
                (1.0 - blend_fraction) * bs + blend_fraction * bg,
                (1.0 - blend_fraction) * rs + blend_fraction * rg,
            )
            for (bs, rs), (bg, rg) in zip(self.silica_terms, self.germania_terms)
        )


def material_index(model, blend_fraction, wavelength_um):
    """Refractive index of the (possibly blended) glass at one wavelength."""
    lo, hi = WAVELENGTH_RANGE_UM
    if not (lo <= wavelength_um <= hi):
        raise WavelengthRangeError(
            f"wavelength {wavelength_um} um outside supported range [{lo}, {hi}] um"
        )
    if not (0.0 <= blend_fraction <= 1.0):
        raise ValueError(f"blend_fraction must lie in [0, 1], got {blend_fraction}")
    if model.kind == SCALED_SILICA:
        blend_fraction = 0.0
    terms = model.terms(blend_fraction)
    for _, resonance in terms:
        if abs(wavelength_um - resonance) < _RESONANCE_EPS_UM:
            raise ResonanceSingularityError(
                f"wavelength {wavelength_um} um sits on a Sellmeier resonance"
            )
    return _sellmeier_n(terms, wavelength_um)


@lru_cache(maxsize=None)
def _blend_fraction_for_delta(model, delta):
    """Blend fraction whose index at the calibration wavelength hits 1+delta."""
    if delta == 0.0:
        return 0.0
    target = _sellmeier_n(model.silica_terms, BLEND_CALIBRATION_UM) * (1.0 + delta)
    n_silica = _sellmeier_n(model.terms(0.0), BLEND_CALIBRATION_UM)
    n_germania = _sellmeier_n(model.terms(1.0), BLEND_CALIBRATION_UM)
    if not (n_silica <= target <= n_germania):
        raise MaterialError(
            f"relative index step {delta} is outside the silica-germania blend range"
        )
    return brentq(
        lambda x: _sellmeier_n(model.terms(x), BLEND_CALIBRATION_UM) - target,
        0.0,
        1.0,
        xtol=1e-15,
    )


@dataclass(frozen=True)
class Layer:
    """One annulus of the profile: outer radius (um) and relative index step."""

    radius_um: float
    delta: float


@dataclass(frozen=True)
class FiberProfile:
    """Ordered layers over an unbounded cladding; beyond the last layer delta = 0."""

    layers: tuple
    cladding: MaterialModel = MaterialModel()
    name: str = ""

    def __post_init__(self):
        layers = tuple(
            layer if isinstance(layer, Layer) else Layer(*layer) for layer in self.layers
        )
        object.__setattr__(self, "layers", layers)
        previous = 0.0
        for layer in layers:
            if not (math.isfinite(layer.radius_um) and layer.radius_um > 0.0):
                raise ValueError(f"layer radius must be finite and > 0, got {layer.radius_um}")
            if layer.radius_um <= previous:
                raise ValueError(
                    f"layer radii must be strictly increasing, got {layer.radius_um} "
                    f"after {previous}"
                )
            if not math.isfinite(layer.delta):
                raise ValueError(f"layer delta must be finite, got {layer.delta}")
            previous = layer.radius_um

    def cladding_index(self, wavelength_um):
        return material_index(self.cladding, 0.0, wavelength_um)

    def layer_index(self, position, wavelength_um):
        layer = self.layers[position]
        if self.cladding.kind == SELLMEIER_BLEND:
            fraction = _blend_fraction_for_delta(self.cladding, layer.delta)
            return material_index(self.cladding, fraction, wavelength_um)
        return self.cladding_index(wavelength_um) * (1.0 + layer.delta)


def profile_index(profile, radius_um, wavelength_um):
    """Index at radial position r; boundary radii belong to the inner layer."""
    if radius_um < 0.0:
        raise ValueError(f"radius must be >= 0, got {radius_um}")
    for position, layer in enumerate(profile.layers):
        if radius_um <= layer.radius_um:
            return profile.layer_index(position, wavelength_um)
    return profile.cladding_index(wavelength_um)


def parse_profile(text, source="<profile>"):
    """Parse the line-oriented profile format, reporting every defect at once."""
    diagnostics = []
    name = ""
    kind = SCALED_SILICA
    layers = []  # (radius_um, delta, radius_line)
    current = None
    current_line = 0

    def flush():
        nonlocal current
        if current is None:
            return
        missing = [k for k in ("radius_um", "delta_percent") if k not in current]
        for key in missing:
            diagnostics.append((current_line, f"[layer] is missing '{key}'"))
        if not missing:
            layers.append(
                (
                    current["radius_um"],
                    current["delta_percent"] / 100.0,
                    current.get("radius_line", current_line),
                )
            )
        current = None

    for number, entry_kind, payload in iter_config_lines(text):
        if entry_kind == "error":
            diagnostics.append((number, payload))
            continue
        if entry_kind == "section":
            if payload == "layer":
                flush()
                current = {}
                current_line = number
            else:
                diagnostics.append((number, f"unknown section '[{payload}]'"))
            continue
        key, value = payload
        if current is None:
            if key == "name":
                name = value
            elif key == "material_model":
                if value in (SCALED_SILICA, SELLMEIER_BLEND):
                    kind = value
                else:
                    diagnostics.append(
                        (
                            number,
                            f"material_model must be '{SCALED_SILICA}' or "
                            f"'{SELLMEIER_BLEND}', got '{value}'",
                        )
                    )
            else:
                diagnostics.append((number, f"unknown key '{key}'"))
        elif key in ("radius_um", "delta_percent"):
            if key in current:
                diagnostics.append((number, f"duplicate '{key}' in [layer]"))
                continue
            try:
                current[key] = float(value)
            except ValueError:
                diagnostics.append((number, f"{key}: expected a number, got '{value}'"))
                continue
            if key == "radius_um":
                current["radius_line"] = number
        else:
            diagnostics.append((number, f"unknown key '{key}' in [layer]"))
    flush()

    previous = 0.0
    for radius, _, line in layers:
        if radius <= 0.0:
            diagnostics.append((line, f"radius_um must be > 0, got {radius}"))
        elif radius <= previous:
            diagnostics.append(
                (line, f"layer radii must be strictly increasing, got {radius} after {previous}")
            )
        previous = max(previous, radius)
    if not layers and not diagnostics:
        diagnostics.append((1, "no [layer] sections found"))
    if diagnostics:
        raise FileFormatError(source, diagnostics)
    return FiberProfile(
        layers=tuple(Layer(radius, delta) for radius, delta, _ in layers),
        cladding=MaterialModel(kind=kind),
        name=name,
    )


def load_profile(path):
    return parse_profile(Path(path).read_text(), source=str(path))
