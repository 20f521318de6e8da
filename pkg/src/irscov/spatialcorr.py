"""Spatial correlation of rectangular element grids under isotropic scattering."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .scenario import PanelGeometry, Scenario, link_gains

NORMALIZATIONS = ("element-area", "unit")

# eigenvalues below this fraction of the largest are treated as null space
RANK_CUTOFF_REL = 1e-12

_DUMP_MAGIC = b"CORRM\x00"


class NumericalError(RuntimeError):
    """A numeric routine failed or left an invariant violated."""


def sinc_normalized(x):
    """Normalized sinc sin(pi x)/(pi x), elementwise, 1 at x = 0."""
    return np.sinc(x)


def element_position(index: int, panel: PanelGeometry) -> np.ndarray:
    """3D position of one element, 0-based index, row-major over the grid.

    The grid lies in the yz-plane: index i sits at
    (0, (i mod n_h) * d_h, floor(i / n_h) * d_v).
    """
    if index < 0 or index >= panel.n_elements:
        raise ValueError("element index %d out of range" % index)
    return np.array(
        [0.0, (index % panel.n_h) * panel.d_h, (index // panel.n_h) * panel.d_v]
    )


def element_positions(panel: PanelGeometry) -> np.ndarray:
    """(N, 3) array of all element positions, same layout as element_position."""
    idx = np.arange(panel.n_elements)
    y = (idx % panel.n_h) * panel.d_h
    z = (idx // panel.n_h) * panel.d_v
    return np.column_stack([np.zeros(panel.n_elements), y, z])


@dataclass(frozen=True)
class CorrelationMatrix:
    """Real symmetric PSD element correlation with a constant diagonal."""

    entries: np.ndarray  # (N, N) float64
    diagonal_value: float  # d_h*d_v or 1.0 depending on normalization
    repaired: bool  # True if negative eigenvalues were clamped

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def validate(self):
        r = self.entries
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise NumericalError("correlation matrix must be square")
        if not np.array_equal(r, r.T):
            raise NumericalError("correlation matrix must be exactly symmetric")
        if not np.all(np.diag(r) == self.diagonal_value):
            raise NumericalError("correlation diagonal drifted from %r" % self.diagonal_value)


def _psd_repair(r: np.ndarray, diagonal_value: float) -> tuple[np.ndarray, bool]:
    """Clamp negative eigenvalues to zero, keep symmetry and the exact diagonal."""
    try:
        w, v = np.linalg.eigh(r)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "eigendecomposition failed for correlation matrix of order %d" % r.shape[0]
        ) from exc
    if w.size and w[0] >= 0.0:
        return r, False
    w = np.where(w < 0.0, 0.0, w)
    fixed = (v * w) @ v.T
    fixed = 0.5 * (fixed + fixed.T)
    np.fill_diagonal(fixed, diagonal_value)
    return fixed, True


def build_correlation(
    panel: PanelGeometry, wavelength: float, normalization: str = "element-area"
) -> CorrelationMatrix:
    """Sinc-kernel correlation of the panel's element grid.

    Entry (n, p) is c * sinc(2 * dist(n, p) / wavelength) with c the
    diagonal value: d_h*d_v under "element-area", 1 under "unit". The
    result is symmetrized and clamped to the PSD cone.
    """
    if wavelength <= 0.0:
        raise ValueError("wavelength must be > 0")
    if normalization not in NORMALIZATIONS:
        raise ValueError("normalization must be one of %r" % (NORMALIZATIONS,))
    u = element_positions(panel)
    dist = np.linalg.norm(u[:, None, :] - u[None, :, :], axis=-1)
    r = sinc_normalized(2.0 * dist / wavelength)
    # pairwise distances are symmetric up to rounding; force exact symmetry
    r = 0.5 * (r + r.T)
    c = panel.element_area if normalization == "element-area" else 1.0
    if c != 1.0:
        r = c * r
    np.fill_diagonal(r, c)
    fixed, repaired = _psd_repair(r, c)
    return CorrelationMatrix(entries=fixed, diagonal_value=c, repaired=repaired)


def identity_correlation(
    panel: PanelGeometry, normalization: str = "element-area"
) -> CorrelationMatrix:
    """Uncorrelated elements: exactly c*I, no kernel evaluation."""
    if normalization not in NORMALIZATIONS:
        raise ValueError("normalization must be one of %r" % (NORMALIZATIONS,))
    c = panel.element_area if normalization == "element-area" else 1.0
    return CorrelationMatrix(
        entries=c * np.eye(panel.n_elements), diagonal_value=c, repaired=False
    )


@dataclass(frozen=True)
class SamplingFactor:
    """Tall factor L with L @ L^T reproducing a correlation matrix."""

    matrix: np.ndarray  # (N, rank) float64
    rank: int

    @property
    def order(self) -> int:
        return self.matrix.shape[0]


def sampling_factor(corr: CorrelationMatrix) -> SamplingFactor:
    """Eigenvalue-based factor of a repaired correlation matrix.

    Retains eigenpairs above RANK_CUTOFF_REL of the largest eigenvalue;
    reconstruction error stays below 1e-8 relative in Frobenius norm.
    """
    try:
        w, v = np.linalg.eigh(corr.entries)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "eigendecomposition failed for correlation matrix of order %d" % corr.order
        ) from exc
    if w[-1] <= 0.0:
        raise NumericalError("correlation matrix of order %d has no positive eigenvalue" % corr.order)
    keep = w > RANK_CUTOFF_REL * w[-1]
    rank = int(np.count_nonzero(keep))
    mat = v[:, keep] * np.sqrt(w[keep])
    err = np.linalg.norm(mat @ mat.T - corr.entries) / np.linalg.norm(corr.entries)
    if err > 1e-8:
        raise NumericalError(
            "sampling factor of order %d reconstructs poorly (rel err %.3e)"
            % (corr.order, err)
        )
    return SamplingFactor(matrix=mat, rank=rank)


@dataclass(frozen=True)
class CorrelationPair:
    """Per-surface correlation of the incident and departing links."""

    incident: CorrelationMatrix
    departing: CorrelationMatrix

    def __post_init__(self):
        if self.incident.order != self.departing.order:
            raise ValueError("correlation pair orders differ")

    @property
    def order(self) -> int:
        return self.incident.order


def scenario_correlations(
    scenario: Scenario, uncorrelated: bool = False, normalization: str = "element-area"
) -> list[CorrelationPair]:
    """Correlation pairs for every surface of a scenario.

    Identical panels see the same fading statistics on both links, but the
    pair keeps the two references separate so asymmetric setups can swap
    one side.
    """
    if uncorrelated:
        shared = identity_correlation(scenario.panel, normalization)
    else:
        shared = build_correlation(
            scenario.panel, scenario.radio.wavelength, normalization
        )
    pair = CorrelationPair(incident=shared, departing=shared)
    return [pair] * scenario.m_count


def cross_element_diag(
    scenario: Scenario,
    correlations: list[CorrelationPair],
    n: int,
    p: int,
    link: int,
) -> np.ndarray:
    """Diagonal of the cross-element covariance for element pair (n, p).

    Entry m is the link gain of surface m times its correlation entry
    (n, p); link 1 is incident, link 2 departing. Shape (m_count,).
    """
    if link not in (1, 2):
        raise ValueError("link must be 1 or 2")
    b1, b2 = link_gains(scenario)
    gains = b1 if link == 1 else b2
    out = np.empty(len(correlations))
    for m, pair in enumerate(correlations):
        r = pair.incident if link == 1 else pair.departing
        out[m] = gains[m] * r.entries[n, p]
    return out


def dump_matrix(corr: CorrelationMatrix, path: str):
    """Write the matrix as little-endian float64, row-major, after a short header.

    Header: 6 magic bytes, then the order as a little-endian uint32.
    """
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(struct.pack("<I", corr.order))
        fh.write(np.ascontiguousarray(corr.entries, dtype="<f8").tobytes())


def read_matrix_dump(path: str) -> np.ndarray:
    """Read a matrix written by dump_matrix."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_DUMP_MAGIC))
        if magic != _DUMP_MAGIC:
            raise ValueError("%s: not a correlation dump" % path)
        (order,) = struct.unpack("<I", fh.read(4))
        data = np.frombuffer(fh.read(8 * order * order), dtype="<f8")
    if data.size != order * order:
        raise ValueError("%s: truncated dump" % path)
    return data.reshape(order, order).astype(np.float64)


def export_eigenvalues_csv(matrices: list[CorrelationMatrix], path: str):
    """Write eigenvalue spectra, one row per (matrix, eigenvalue), descending."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["matrix_index", "eig_index", "eigenvalue"])
        for i, corr in enumerate(matrices):
            w = np.linalg.eigvalsh(corr.entries)[::-1]
            for j, val in enumerate(w):
                writer.writerow([i, j, repr(float(val))])
