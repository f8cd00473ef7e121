"""Layered-arm geometry and tissue dielectric properties.

The bundled table (data/tissue_dielectric.csv) holds sigma(f) and eps_r(f)
per tissue on a log-spaced grid; lookups interpolate linearly in log10(f).
The default arm model is a 600 mm longitudinal slice through five layers
with implanted electrode pairs in the muscle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import FrequencyOutOfRange, SchemaViolation

__all__ = [
    "EPS0",
    "TissueLayer",
    "Electrode",
    "ArmModel",
    "DielectricTable",
    "load_dielectric_table",
    "default_arm_model",
]

EPS0 = 8.8541878128e-12

ARM_LENGTH_MM = 600.0
ELECTRODE_HEIGHT_MM = 20.0
ELECTRODE_RADIUS_MM = 1.0
TX_RX_SEPARATION_MM = 100.0
INTRA_PAIR_SPACING_MM = 40.0

ROLES = ("tx+", "tx-", "rx+", "rx-")


class DielectricTable:
    """Per-tissue sigma/eps_r versus frequency with log-f interpolation."""

    def __init__(self, rows):
        """rows: iterable of (frequency_hz, tissue_name, sigma, eps_r)."""
        by_tissue: dict[str, list[tuple[float, float, float]]] = {}
        for f, name, sigma, eps_r in rows:
            f, sigma, eps_r = float(f), float(sigma), float(eps_r)
            if f <= 0:
                raise SchemaViolation(f"non-positive frequency {f} for {name!r}")
            if sigma < 0:
                raise SchemaViolation(f"negative sigma {sigma} for {name!r} at {f} Hz")
            if eps_r < 1:
                raise SchemaViolation(f"eps_r {eps_r} < 1 for {name!r} at {f} Hz")
            by_tissue.setdefault(str(name), []).append((f, sigma, eps_r))
        if not by_tissue:
            raise SchemaViolation("dielectric table has no rows")
        self._data: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        for name, triples in by_tissue.items():
            triples.sort()
            freqs = np.array([t[0] for t in triples])
            if np.any(np.diff(freqs) <= 0):
                raise SchemaViolation(f"duplicate frequency rows for {name!r}")
            self._data[name] = (
                np.log10(freqs),
                np.array([t[1] for t in triples]),
                np.array([t[2] for t in triples]),
            )

    @property
    def tissues(self) -> list[str]:
        return sorted(self._data)

    def frequency_range(self, tissue: str) -> tuple[float, float]:
        logf = self._entry(tissue)[0]
        return 10.0 ** logf[0], 10.0 ** logf[-1]

    def _entry(self, tissue: str):
        try:
            return self._data[tissue]
        except KeyError:
            raise SchemaViolation(
                f"tissue {tissue!r} not in table (have {self.tissues})"
            ) from None

    def properties(self, tissue: str, frequency_hz: float) -> tuple[float, float]:
        """(sigma S/m, eps_r) at the given frequency."""
        logf, sigma, eps_r = self._entry(tissue)
        if frequency_hz <= 0:
            # DC handled as the low-frequency limit of the table.
            return float(sigma[0]), float(eps_r[0])
        lf = np.log10(frequency_hz)
        if lf < logf[0] - 1e-9 or lf > logf[-1] + 1e-9:
            raise FrequencyOutOfRange(
                f"{frequency_hz} Hz outside table range "
                f"{self.frequency_range(tissue)} for {tissue!r}"
            )
        return float(np.interp(lf, logf, sigma)), float(np.interp(lf, logf, eps_r))

    def admittivity(self, tissue: str, frequency_hz: float) -> complex:
        """kappa = sigma + j w eps0 eps_r."""
        sigma, eps_r = self.properties(tissue, frequency_hz)
        return complex(sigma, 2.0 * np.pi * frequency_hz * EPS0 * eps_r)


def load_dielectric_table(path=None) -> DielectricTable:
    """Load the bundled table, or a CSV with the same columns from path."""
    if path is None:
        ref = resources.files("ibchan.data").joinpath("tissue_dielectric.csv")
        text = ref.read_text()
        lines = text.splitlines()
    else:
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
    reader = csv.DictReader(lines)
    required = {"frequency_hz", "tissue_name", "sigma_s_per_m", "eps_r"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise SchemaViolation(
            f"dielectric CSV must have columns {sorted(required)}, "
            f"got {reader.fieldnames}"
        )
    rows = [
        (row["frequency_hz"], row["tissue_name"],
         row["sigma_s_per_m"], row["eps_r"])
        for row in reader
    ]
    return DielectricTable(rows)


@dataclass(frozen=True)
class TissueLayer:
    """One horizontal layer of the arm slice (top-down order)."""

    name: str
    thickness_mm: float

    def __post_init__(self):
        if self.thickness_mm <= 0:
            raise ValueError(f"thickness must be positive, got {self.thickness_mm}")


@dataclass(frozen=True)
class Electrode:
    """Implanted electrode: a vertical line segment in the slice.

    A physical cylinder electrode collapses to a segment of height_mm
    centered at (x_mm, y_center_mm); radius_mm only sets the minimum
    horizontal footprint (at most one extra cell column).
    """

    role: str
    x_mm: float
    y_center_mm: float
    height_mm: float = ELECTRODE_HEIGHT_MM
    radius_mm: float = ELECTRODE_RADIUS_MM

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.height_mm <= 0 or self.radius_mm <= 0:
            raise ValueError("electrode height and radius must be positive")

    @property
    def y_span_mm(self) -> tuple[float, float]:
        return (self.y_center_mm - self.height_mm / 2.0,
                self.y_center_mm + self.height_mm / 2.0)


@dataclass(frozen=True)
class ArmModel:
    """Longitudinal arm slice: ordered layers plus implanted electrodes."""

    layers: tuple
    electrodes: tuple
    length_mm: float = ARM_LENGTH_MM

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "electrodes", tuple(self.electrodes))
        if self.length_mm <= 0:
            raise ValueError("length must be positive")
        if not self.layers:
            raise ValueError("at least one layer required")
        roles = [e.role for e in self.electrodes]
        for pair in ("tx", "rx"):
            have = [r for r in roles if r.startswith(pair)]
            if have and sorted(have) != [f"{pair}+", f"{pair}-"]:
                raise ValueError(
                    f"{pair} pair must have exactly one + and one - electrode, "
                    f"got {have}"
                )
        depth = self.depth_mm
        for e in self.electrodes:
            lo, hi = e.y_span_mm
            if not (0 <= e.x_mm <= self.length_mm and 0 <= lo and hi <= depth):
                raise ValueError(
                    f"electrode {e.role} at x={e.x_mm} y=[{lo},{hi}] mm "
                    f"outside the {self.length_mm} x {depth} mm domain"
                )

    @property
    def depth_mm(self) -> float:
        return float(sum(layer.thickness_mm for layer in self.layers))

    def layer_boundaries_mm(self) -> np.ndarray:
        """Cumulative interface depths, starting at 0 (top of skin)."""
        edges = np.concatenate([[0.0], np.cumsum([l.thickness_mm for l in self.layers])])
        return edges

    def electrode(self, role: str) -> Electrode:
        for e in self.electrodes:
            if e.role == role:
                return e
        raise ValueError(f"no electrode with role {role!r}")


def default_arm_model() -> ArmModel:
    """Full-diameter arm section with electrode pairs in the upper muscle.

    The slice runs lengthwise through the whole limb, so the radial stack
    appears mirrored about the cancellous core: skin at both surfaces,
    bone in the middle.  Cutting the domain at the bone center instead
    (a single-sided 5-layer stack) would place an artificial insulating
    wall right under the muscle and qualitatively change the transfer
    physics of the slice.

    TX pair at x = 230/270 mm, RX pair at x = 330/370 mm: pair centers
    100 mm apart, 40 mm between the electrodes of each pair, placed
    mirror-symmetrically about the arm midline so swapping TX and RX is
    an exact symmetry of the geometry.  Electrode centers default to
    mid-depth of the upper muscle.
    """
    layers = (
        TissueLayer("Skin", 1.5),
        TissueLayer("Fat", 8.5),
        TissueLayer("Muscle", 27.5),
        TissueLayer("Cortical Bone", 6.0),
        TissueLayer("Cancellous Bone", 13.0),
        TissueLayer("Cortical Bone", 6.0),
        TissueLayer("Muscle", 27.5),
        TissueLayer("Fat", 8.5),
        TissueLayer("Skin", 1.5),
    )
    # Upper muscle spans depths 10.0..37.5 mm.
    y_mid = 10.0 + 27.5 / 2.0
    electrodes = (
        Electrode("tx+", 230.0, y_mid),
        Electrode("tx-", 270.0, y_mid),
        Electrode("rx+", 330.0, y_mid),
        Electrode("rx-", 370.0, y_mid),
    )
    return ArmModel(layers=layers, electrodes=electrodes)
