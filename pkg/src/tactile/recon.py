"""Height-map reconstruction: per-pixel color lookup followed by gradient integration.

The integrator solves the least-squares problem

    min_z  sum_edges (z[q] - z[p] - g_edge)^2

over the whole image rectangle, where each horizontal/vertical edge carries the
mean of the two pixel gradients it joins. The normal equations are a Neumann
Poisson problem, which the type-II DCT diagonalizes exactly. The result is
deterministic: scipy's DCT is single-threaded unless ``workers`` is passed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft, linalg, ndimage, sparse

from .calib import LookupTable
from .errors import InvalidInputError
from .imgcore import Frame, color_delta, dark_spot_mask

RECON_FLOOR = 0.03
DENSE_MAX_PIXELS = 10_000


@dataclass(frozen=True)
class GradientField:
    gradient: np.ndarray          # (H, W, 2): dz/dx, dz/dy (dimensionless)
    valid: np.ndarray
    extrapolated: np.ndarray
    pixel_scale: float = 1.0

    @classmethod
    def from_arrays(cls, gx, gy, valid=None, pixel_scale=1.0):
        g = np.stack([np.asarray(gx, dtype=np.float64), np.asarray(gy, dtype=np.float64)], axis=2)
        if valid is None:
            valid = np.ones(g.shape[:2], dtype=bool)
        return cls(g, np.asarray(valid, dtype=bool), np.zeros(g.shape[:2], dtype=bool), pixel_scale)

    @property
    def shape(self):
        return self.gradient.shape[:2]


@dataclass(frozen=True)
class HeightMap:
    z: np.ndarray                 # mm
    pixel_scale: float
    valid: Optional[np.ndarray] = None
    extrapolated_fraction: float = 0.0

    @property
    def shape(self):
        return self.z.shape


def _edge_targets(g: np.ndarray):
    gx, gy = g[..., 0], g[..., 1]
    bx = 0.5 * (gx[:, 1:] + gx[:, :-1])
    by = 0.5 * (gy[1:, :] + gy[:-1, :])
    return bx, by


def _divergence(bx, by, shape):
    """D^T b for forward-difference operators D (Neumann boundary)."""
    rhs = np.zeros(shape)
    rhs[:, :-1] -= bx
    rhs[:, 1:] += bx
    rhs[:-1, :] -= by
    rhs[1:, :] += by
    return rhs


def least_squares_energy(z_px: np.ndarray, gradient: np.ndarray) -> float:
    """Discrete functional minimized by both integrators (z in pixel units)."""
    bx, by = _edge_targets(gradient)
    rx = np.diff(z_px, axis=1) - bx
    ry = np.diff(z_px, axis=0) - by
    return float(np.sum(rx * rx) + np.sum(ry * ry))


def _check_field(field: GradientField):
    if field.gradient.ndim != 3 or field.gradient.shape[2] != 2:
        raise InvalidInputError(f"gradient field must have shape (H, W, 2), got {field.gradient.shape}")
    if not np.all(np.isfinite(field.gradient)):
        raise InvalidInputError("gradient field contains non-finite values")


def _apply_gauge(z_px, field: GradientField) -> HeightMap:
    valid = field.valid if field.valid is not None and field.valid.any() else None
    z = z_px - (z_px[valid].min() if valid is not None else z_px.min())
    return HeightMap(z * field.pixel_scale, field.pixel_scale, field.valid)


def solve_poisson_dct(gradient: np.ndarray) -> np.ndarray:
    """Zero-mean least-squares height (pixel units) for a gradient field."""
    h, w = gradient.shape[:2]
    bx, by = _edge_targets(gradient)
    rhs = _divergence(bx, by, (h, w))
    lam_x = 2.0 - 2.0 * np.cos(np.pi * np.arange(w) / w)
    lam_y = 2.0 - 2.0 * np.cos(np.pi * np.arange(h) / h)
    denom = lam_y[:, None] + lam_x[None, :]
    coeffs = fft.dctn(rhs, type=2, norm="ortho")
    denom[0, 0] = 1.0
    coeffs /= denom
    coeffs[0, 0] = 0.0
    return fft.idctn(coeffs, type=2, norm="ortho")


def integrate_gradients(field: GradientField) -> HeightMap:
    """Fast Neumann-Poisson integration; gauge: minimum over the valid pixels is 0."""
    _check_field(field)
    return _apply_gauge(solve_poisson_dct(field.gradient), field)


def difference_operator(h: int, w: int) -> sparse.csr_matrix:
    """Forward-difference matrix: horizontal edges first, then vertical (row-major pixels)."""
    idx = np.arange(h * w).reshape(h, w)
    blocks = []
    for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
        a, b = a.ravel(), b.ravel()
        r = np.arange(len(a))
        blocks.append(sparse.csr_matrix(
            (np.r_[-np.ones(len(a)), np.ones(len(a))], (np.r_[r, r], np.r_[a, b])), shape=(len(a), h * w)))
    return sparse.vstack(blocks).tocsr()


def integrate_gradients_dense(field: GradientField) -> HeightMap:
    """Brute-force oracle: direct dense solve of the same normal equations (small grids only)."""
    _check_field(field)
    h, w = field.shape
    if h * w > DENSE_MAX_PIXELS:
        raise InvalidInputError(f"dense solver limited to {DENSE_MAX_PIXELS} pixels, got {h * w}")
    d = difference_operator(h, w)
    bx, by = _edge_targets(field.gradient)
    b = np.concatenate([bx.ravel(), by.ravel()])
    # D^T D is singular along constants; the ones block pins the mean without moving the minimizer.
    a = (d.T @ d).toarray() + 1.0
    z = linalg.solve(a, d.T @ b, assume_a="pos")
    return _apply_gauge(z.reshape(h, w), field)


def _fill_from_neighbors(g: np.ndarray, known: np.ndarray, holes: np.ndarray, sigma=2.0) -> np.ndarray:
    w = ndimage.gaussian_filter(known.astype(np.float64), sigma)
    out = g.copy()
    for c in range(2):
        num = ndimage.gaussian_filter(np.where(known, g[..., c], 0.0), sigma)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[..., c] = np.where(holes, np.where(w > 1e-6, num / w, 0.0), g[..., c])
    return out


def gradients_from_frame(frame: Frame, reference: Frame, table: LookupTable, floor: float = RECON_FLOOR,
                         fill_markers: bool = True) -> GradientField:
    """Look up every pixel whose color change exceeds ``floor``; others get (0, 0) and valid=False.

    Marker dots inside the contact are filled from surrounding gradients instead
    of being looked up, since their darkened color belongs to no normal.
    """
    if len(table) == 0:
        raise InvalidInputError("lookup table is empty")
    delta = color_delta(frame, reference)
    valid = delta.intensity > floor
    markers = np.zeros_like(valid)
    if fill_markers:
        markers = dark_spot_mask(frame.pixels) | dark_spot_mask(reference.pixels)
    known = valid & ~markers
    grad = np.zeros(delta.shape + (2,))
    extrap = np.zeros(delta.shape, dtype=bool)
    if known.any():
        g, e = table.lookup(delta.deltas[known])
        grad[known] = g
        extrap[known] = e
    if fill_markers:
        holes = markers & ndimage.binary_dilation(known, iterations=3)
        if holes.any():
            grad = _fill_from_neighbors(grad, known, holes)
            valid = known | holes
        else:
            valid = known
    return GradientField(grad, valid, extrap, frame.pixel_scale)


def reconstruct(frame: Frame, reference: Frame, table: LookupTable, **kwargs) -> HeightMap:
    field = gradients_from_frame(frame, reference, table, **kwargs)
    hm = integrate_gradients(field)
    n_valid = int(field.valid.sum())
    frac = float(field.extrapolated.sum()) / n_valid if n_valid else 0.0
    return HeightMap(hm.z, hm.pixel_scale, hm.valid, frac)
