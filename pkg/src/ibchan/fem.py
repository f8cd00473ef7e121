"""Quasi-static complex-potential solver on a structured 2D slice.

Discretizes div(kappa grad V) = 0 with kappa = sigma + j w eps0 eps_r in
divergence form on a cell-centered rectangular grid:

  * one row block per tissue layer, so every layer interface falls on a
    cell face;
  * face conductances from the series (distance-weighted harmonic) mean
    of the two adjacent cell admittivities;
  * insulating (zero normal flux) outer boundary, with optional Dirichlet
    plates applied through half-cell conductances;
  * driven electrodes as Dirichlet cells at +0.5 / -0.5 V.

The assembled complex system is solved with a sparse LU factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .errors import (
    EmptyElectrode,
    ResolutionTooCoarse,
    SolverDidNotConverge,
)
from .sounder import FrequencyResponse
from .tissue import ArmModel, DielectricTable, load_dielectric_table

__all__ = [
    "RectGrid",
    "LinearSystem",
    "FieldSolution",
    "uniform_layer_grid",
    "build_arm_grid",
    "custom_system",
    "assemble_system",
    "solve_potential",
    "receive_voltage",
    "electrode_current",
    "contour_current",
    "transfer_gain_db",
    "gain_sweep",
    "field_table",
]

_RESIDUAL_TOL = 1e-8


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RectGrid:
    """Cell-centered rectangular grid with per-cell complex admittivity.

    Attributes:
        x_centers: cell-center x coordinates (m), uniform spacing hx.
        y_centers: cell-center depths (m), top surface at y = 0.
        hx: column width (m).
        hy: per-row heights (m), uniform within a layer.
        kappa: (ny, nx) complex admittivity per cell (S/m).
    """

    x_centers: np.ndarray
    y_centers: np.ndarray
    hx: float
    hy: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        kappa = np.array(self.kappa, dtype=np.complex128)
        ny, nx = kappa.shape
        if len(self.y_centers) != ny or len(self.x_centers) != nx:
            raise ValueError("kappa shape does not match grid axes")
        object.__setattr__(self, "kappa", _readonly(kappa))
        for name in ("x_centers", "y_centers", "hy"):
            object.__setattr__(
                self, name,
                _readonly(np.array(getattr(self, name), dtype=np.float64)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.kappa.shape


def uniform_layer_grid(length_m: float, thicknesses_m, rows_per_layer,
                       nx: int, kappa_per_layer) -> RectGrid:
    """Stacked-layer grid; each layer gets its own uniform row height."""
    thicknesses = [float(t) for t in thicknesses_m]
    rows = [int(r) for r in rows_per_layer]
    if len(thicknesses) != len(rows) or len(thicknesses) != len(kappa_per_layer):
        raise ValueError("thicknesses, rows, and kappas must align")
    if any(r < 1 for r in rows):
        raise ValueError("each layer needs at least one row")
    hx = length_m / nx
    x_centers = (np.arange(nx) + 0.5) * hx
    hy_list, kappa_rows = [], []
    for t, r, k in zip(thicknesses, rows, kappa_per_layer):
        hy_list.extend([t / r] * r)
        kappa_rows.extend([k] * r)
    hy = np.array(hy_list)
    y_centers = np.cumsum(hy) - hy / 2.0
    kappa = np.tile(np.array(kappa_rows, dtype=np.complex128)[:, None], (1, nx))
    return RectGrid(x_centers=x_centers, y_centers=y_centers, hx=hx,
                    hy=hy, kappa=kappa)


def _face_conductances(grid: RectGrid) -> tuple[np.ndarray, np.ndarray]:
    """Series-mean face conductances (per unit out-of-plane depth).

    gx[j, i] couples cells (j, i) and (j, i+1):  hy_j / hx * 2 k1 k2 / (k1 + k2).
    gy[j, i] couples cells (j, i) and (j+1, i):  hx / (hy_j/(2 k1) + hy_j+1/(2 k2)).
    """
    kappa, hx, hy = grid.kappa, grid.hx, grid.hy
    with np.errstate(divide="ignore", invalid="ignore"):
        k1, k2 = kappa[:, :-1], kappa[:, 1:]
        gx = (hy[:, None] / hx) * 2.0 * k1 * k2 / (k1 + k2)
        k1, k2 = kappa[:-1, :], kappa[1:, :]
        gy = hx / (hy[:-1, None] / (2.0 * k1) + hy[1:, None] / (2.0 * k2))
    # Zero-admittivity cells contribute zero face conductance.
    return np.nan_to_num(gx, nan=0.0), np.nan_to_num(gy, nan=0.0)


@dataclass(frozen=True)
class LinearSystem:
    """Assembled sparse system plus the geometry needed to interpret it."""

    grid: RectGrid
    matrix: csc_matrix
    rhs: np.ndarray
    dirichlet: dict
    electrode_cells: dict
    frequency: float
    gx: np.ndarray
    gy: np.ndarray
    plate_g: dict = field(default_factory=dict)
    plate_v: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FieldSolution:
    """Solved complex potential on the grid.

    Attributes:
        grid: the discretization.
        potential: (ny, nx) complex volts at cell centers.
        e_field: (ny, nx) magnitude of the complex potential gradient, V/m.
        frequency: Hz.
        electrode_cells: role -> list of (row, col) Dirichlet cells.
        residual: relative solver residual.
    """

    grid: RectGrid
    potential: np.ndarray
    e_field: np.ndarray
    frequency: float
    electrode_cells: dict
    residual: float
    gx: np.ndarray
    gy: np.ndarray

    def cell_potential(self, row: int, col: int) -> complex:
        return complex(self.potential[row, col])


def custom_system(grid: RectGrid, dirichlet_cells=None, plates=None,
                  electrode_cells=None, frequency: float = 0.0) -> LinearSystem:
    """Assemble the conservation equations with explicit boundary data.

    Args:
        grid: the discretization.
        dirichlet_cells: {(row, col): complex volts} cells pinned to a value
            (driven electrodes).
        plates: {"top"|"bottom": volts} Dirichlet plates applied through
            half-cell conductances; a scalar or a per-column array.
            Edges without a plate are insulating.
        electrode_cells: {role: [(row, col), ...]} bookkeeping carried
            through to the solution.
        frequency: Hz, bookkeeping only.
    """
    dirichlet_cells = dict(dirichlet_cells or {})
    plates = dict(plates or {})
    ny, nx = grid.shape
    n = ny * nx

    def idx(j, i):
        return j * nx + i

    gx, gy = _face_conductances(grid)
    diag = np.zeros(n, dtype=np.complex128)
    rhs = np.zeros(n, dtype=np.complex128)
    rows_ix, cols_ix, vals = [], [], []

    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx - 1), indexing="ij")
    a, b = idx(jj, ii).ravel(), idx(jj, ii + 1).ravel()
    g = gx.ravel()
    rows_ix.append(a); cols_ix.append(b); vals.append(-g)
    rows_ix.append(b); cols_ix.append(a); vals.append(-g)
    np.add.at(diag, a, g)
    np.add.at(diag, b, g)

    jj, ii = np.meshgrid(np.arange(ny - 1), np.arange(nx), indexing="ij")
    a, b = idx(jj, ii).ravel(), idx(jj + 1, ii).ravel()
    g = gy.ravel()
    rows_ix.append(a); cols_ix.append(b); vals.append(-g)
    rows_ix.append(b); cols_ix.append(a); vals.append(-g)
    np.add.at(diag, a, g)
    np.add.at(diag, b, g)

    plate_g, plate_v = {}, {}
    for edge, value in plates.items():
        if edge == "top":
            cells = idx(0, np.arange(nx))
            g_edge = 2.0 * grid.kappa[0, :] * grid.hx / grid.hy[0]
        elif edge == "bottom":
            cells = idx(ny - 1, np.arange(nx))
            g_edge = 2.0 * grid.kappa[-1, :] * grid.hx / grid.hy[-1]
        else:
            raise ValueError(f"unknown plate edge {edge!r}")
        v_edge = np.broadcast_to(np.asarray(value, dtype=np.complex128), (nx,))
        np.add.at(diag, cells, g_edge)
        np.add.at(rhs, cells, g_edge * v_edge)
        plate_g[edge] = g_edge
        plate_v[edge] = np.array(v_edge)

    # Dirichlet cells override their conservation rows with identity rows.
    pinned = np.zeros(n, dtype=bool)
    for (j, i), value in dirichlet_cells.items():
        pinned[idx(j, i)] = True
        rhs[idx(j, i)] = value

    rows_all = np.concatenate(rows_ix + [np.arange(n)])
    cols_all = np.concatenate(cols_ix + [np.arange(n)])
    vals_all = np.concatenate(vals + [diag])
    keep = ~(pinned[rows_all])
    keep |= rows_all == cols_all  # keep diagonal slots for pinned rows
    vals_all = np.where(pinned[rows_all] & (rows_all == cols_all), 1.0, vals_all)
    rows_all, cols_all, vals_all = rows_all[keep], cols_all[keep], vals_all[keep]

    matrix = csc_matrix((vals_all, (rows_all, cols_all)), shape=(n, n))
    return LinearSystem(grid=grid, matrix=matrix, rhs=rhs,
                        dirichlet=dirichlet_cells,
                        electrode_cells=dict(electrode_cells or {}),
                        frequency=frequency, gx=gx, gy=gy,
                        plate_g=plate_g, plate_v=plate_v)


def _electrode_cells(grid: RectGrid, electrode) -> list[tuple[int, int]]:
    """Cells whose centers fall inside the electrode footprint.

    Columns: centers within max(radius, hx/2) of the electrode x (the
    radius collapses to at least one cell column).  Rows: centers within
    the vertical span.
    """
    x_m = electrode.x_mm * 1e-3
    half_w = max(electrode.radius_mm * 1e-3, grid.hx / 2.0) * (1 + 1e-9)
    cols = np.nonzero(np.abs(grid.x_centers - x_m) <= half_w)[0]
    lo, hi = (v * 1e-3 for v in electrode.y_span_mm)
    rows = np.nonzero((grid.y_centers >= lo - 1e-12) &
                      (grid.y_centers <= hi + 1e-12))[0]
    if len(cols) == 0 or len(rows) == 0:
        raise EmptyElectrode(
            f"electrode {electrode.role} at x={electrode.x_mm} mm maps to no "
            f"grid cells (hx={grid.hx * 1e3:.3g} mm)"
        )
    return [(int(j), int(i)) for j in rows for i in cols]


def build_arm_grid(model: ArmModel, frequency: float,
                   table: DielectricTable | None = None,
                   hx_mm: float = 4.0, hy_mm: float = 0.5) -> RectGrid:
    """Grid for the layered arm with admittivities at one frequency.

    Raises:
        ResolutionTooCoarse: fewer than 3 rows across any layer.
    """
    table = table or load_dielectric_table()
    rows, kappas, thicknesses = [], [], []
    for layer in model.layers:
        r = int(round(layer.thickness_mm / hy_mm))
        if r < 3:
            raise ResolutionTooCoarse(
                f"{layer.name} ({layer.thickness_mm} mm) gets {r} rows at "
                f"hy={hy_mm} mm; need at least 3"
            )
        rows.append(r)
        thicknesses.append(layer.thickness_mm * 1e-3)
        kappas.append(table.admittivity(layer.name, frequency))
    nx = int(round(model.length_mm / hx_mm))
    return uniform_layer_grid(model.length_mm * 1e-3, thicknesses, rows,
                              nx, kappas)


def assemble_system(model: ArmModel, frequency: float,
                    table: DielectricTable | None = None,
                    hx_mm: float = 4.0, hy_mm: float = 0.5,
                    drive: tuple[str, str] = ("tx+", "tx-")) -> LinearSystem:
    """Assemble the arm problem with the drive pair pinned to +/-0.5 V."""
    if frequency < 0:
        raise ValueError("frequency must be >= 0")
    grid = build_arm_grid(model, frequency, table, hx_mm, hy_mm)
    electrode_cells = {e.role: _electrode_cells(grid, e) for e in model.electrodes}
    dirichlet = {}
    for cell in electrode_cells[drive[0]]:
        dirichlet[cell] = 0.5
    for cell in electrode_cells[drive[1]]:
        dirichlet[cell] = -0.5
    return custom_system(grid, dirichlet_cells=dirichlet,
                         electrode_cells=electrode_cells, frequency=frequency)


def solve_potential(system: LinearSystem) -> FieldSolution:
    """LU-solve the assembled system and derive the E-field magnitude.

    Raises:
        SolverDidNotConverge: relative residual above 1e-8.
    """
    try:
        lu = splu(system.matrix)
        x = lu.solve(system.rhs)
    except RuntimeError as exc:
        raise SolverDidNotConverge(f"sparse factorization failed: {exc}") from exc
    b_norm = float(np.linalg.norm(system.rhs))
    if b_norm == 0.0:
        residual = float(np.linalg.norm(system.matrix @ x))
    else:
        residual = float(np.linalg.norm(system.matrix @ x - system.rhs) / b_norm)
    if not np.isfinite(residual) or residual > _RESIDUAL_TOL:
        raise SolverDidNotConverge(
            f"relative residual {residual:.3e} exceeds {_RESIDUAL_TOL:.0e}"
        )
    ny, nx = system.grid.shape
    potential = x.reshape(ny, nx)
    dv_dy, dv_dx = np.gradient(potential, system.grid.y_centers,
                               system.grid.x_centers)
    e_field = np.sqrt(np.abs(dv_dx) ** 2 + np.abs(dv_dy) ** 2)
    return FieldSolution(grid=system.grid, potential=potential,
                         e_field=e_field, frequency=system.frequency,
                         electrode_cells=dict(system.electrode_cells),
                         residual=residual, gx=system.gx, gy=system.gy)


def receive_voltage(sol: FieldSolution, plus_role: str = "rx+",
                    minus_role: str = "rx-") -> complex:
    """Differential receive voltage: mean V over rx+ minus mean over rx-."""
    for role in (plus_role, minus_role):
        if not sol.electrode_cells.get(role):
            raise EmptyElectrode(f"no cells recorded for electrode {role!r}")

    def mean_v(role):
        cells = sol.electrode_cells[role]
        return np.mean([sol.potential[j, i] for j, i in cells])

    return complex(mean_v(plus_role) - mean_v(minus_role))


def electrode_current(sol: FieldSolution, role: str) -> complex:
    """Net complex current leaving the electrode's cell set."""
    cells = sol.electrode_cells.get(role)
    if not cells:
        raise EmptyElectrode(f"no cells recorded for electrode {role!r}")
    cell_set = set(cells)
    v = sol.potential
    total = 0.0 + 0.0j
    for j, i in cells:
        for (ja, ia), g in _cell_faces(sol, j, i):
            if (ja, ia) in cell_set:
                continue
            total += g * (v[j, i] - v[ja, ia])
    return complex(total)


def _cell_faces(sol: FieldSolution, j: int, i: int):
    """Yield ((neighbor_row, neighbor_col), face_conductance) pairs."""
    ny, nx = sol.grid.shape
    if i > 0:
        yield (j, i - 1), sol.gx[j, i - 1]
    if i < nx - 1:
        yield (j, i + 1), sol.gx[j, i]
    if j > 0:
        yield (j - 1, i), sol.gy[j - 1, i]
    if j < ny - 1:
        yield (j + 1, i), sol.gy[j, i]


def contour_current(sol: FieldSolution, row_lo: int, row_hi: int,
                    col_lo: int, col_hi: int) -> complex:
    """Net outward complex current through a rectangular cell-set boundary.

    The rectangle is the inclusive cell range [row_lo..row_hi] x
    [col_lo..col_hi]; the outer boundary is insulating, so faces on the
    domain edge carry no flux.
    """
    v = sol.potential
    ny, nx = sol.grid.shape
    total = 0.0 + 0.0j
    for j in range(row_lo, row_hi + 1):
        if col_lo > 0:
            total += sol.gx[j, col_lo - 1] * (v[j, col_lo] - v[j, col_lo - 1])
        if col_hi < nx - 1:
            total += sol.gx[j, col_hi] * (v[j, col_hi] - v[j, col_hi + 1])
    for i in range(col_lo, col_hi + 1):
        if row_lo > 0:
            total += sol.gy[row_lo - 1, i] * (v[row_lo, i] - v[row_lo - 1, i])
        if row_hi < ny - 1:
            total += sol.gy[row_hi, i] * (v[row_hi, i] - v[row_hi + 1, i])
    return complex(total)


def transfer_gain_db(v_r: complex, v_t: float = 1.0) -> float:
    """20 log10 |V_R / V_T|."""
    return float(20.0 * np.log10(np.abs(v_r) / v_t))


def gain_sweep(model: ArmModel, freqs, table: DielectricTable | None = None,
               hx_mm: float = 4.0, hy_mm: float = 0.5,
               drive: tuple[str, str] = ("tx+", "tx-"),
               receive: tuple[str, str] = ("rx+", "rx-")) -> FrequencyResponse:
    """Solve per frequency and return complex V_R/V_T, ordered by frequency.

    Frequencies are deduplicated and sorted; each point is independent, so
    the result does not depend on the input order.  Solver failures are
    re-raised tagged with the offending frequency.
    """
    table = table or load_dielectric_table()
    freqs = np.unique(np.asarray(freqs, dtype=np.float64))
    if np.any(freqs < 0):
        raise ValueError("frequencies must be >= 0")
    gains = np.empty(len(freqs), dtype=np.complex128)
    for k, f in enumerate(freqs):
        try:
            system = assemble_system(model, f, table, hx_mm, hy_mm, drive=drive)
            sol = solve_potential(system)
            gains[k] = receive_voltage(sol, *receive)
        except SolverDidNotConverge as exc:
            raise SolverDidNotConverge(f"at {f:g} Hz: {exc}") from exc
    return FrequencyResponse(freqs=freqs, gains=gains)


def field_table(sol: FieldSolution) -> np.ndarray:
    """Rows of (x_m, y_m, re_V, im_V, abs_E) for every cell, row-major."""
    ny, nx = sol.grid.shape
    xx, yy = np.meshgrid(sol.grid.x_centers, sol.grid.y_centers)
    return np.column_stack([
        xx.ravel(), yy.ravel(),
        sol.potential.real.ravel(), sol.potential.imag.ravel(),
        sol.e_field.ravel(),
    ])
