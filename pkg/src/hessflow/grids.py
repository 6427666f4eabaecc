"""Structured grids, fields, and second-order difference stencils.

Grids are uniform tensor products in n = 2 or 3 dimensions; node indexing is
row-major with axis order (x, y, z).  Topology is either fully periodic or a
box with boundary nodes on the faces.  Derivatives are second order
throughout: central differences inside, one-sided three-point (gradient) and
four-point (second derivative) closures on box faces, mixed derivatives by
composing first-derivative stencils.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eigen import eigh_batch

PERIODIC = "periodic"
BOX = "box"

# upper-triangle component order of symmetric tensors
COMPONENTS = {2: ((0, 0), (0, 1), (1, 1)),
              3: ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))}


@dataclass(frozen=True)
class Grid:
    shape: tuple
    lengths: tuple
    topology: str = PERIODIC
    origin: tuple = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        lengths = tuple(float(x) for x in self.lengths)
        n = len(shape)
        if n not in (2, 3):
            raise ValueError(f"grids support n in {{2, 3}}, got n={n}")
        if len(lengths) != n:
            raise ValueError("shape and lengths disagree on dimension")
        if any(s < 4 for s in shape):
            raise ValueError("need at least 4 nodes per axis for the stencils")
        if any(x <= 0 for x in lengths):
            raise ValueError("axis lengths must be positive")
        if self.topology not in (PERIODIC, BOX):
            raise ValueError(f"unknown topology '{self.topology}'")
        origin = self.origin if self.origin is not None else (0.0,) * n
        origin = tuple(float(x) for x in origin)
        if len(origin) != n:
            raise ValueError("origin dimension mismatch")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "origin", origin)

    @property
    def n(self):
        return len(self.shape)

    @property
    def periodic(self):
        return self.topology == PERIODIC

    @property
    def spacing(self):
        # periodic axes exclude the wrap node, boxes include both endpoints
        if self.periodic:
            return tuple(l / s for l, s in zip(self.lengths, self.shape))
        return tuple(l / (s - 1) for l, s in zip(self.lengths, self.shape))

    def axes(self):
        return tuple(o + h * np.arange(s)
                     for o, h, s in zip(self.origin, self.spacing, self.shape))

    def coords(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        if not self.periodic:
            for ax in range(self.n):
                mask[tuple(0 if a == ax else slice(None) for a in range(self.n))] = True
                mask[tuple(-1 if a == ax else slice(None) for a in range(self.n))] = True
        return mask

    @property
    def node_count(self):
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time_tag", float(self.time_tag))

    def with_values(self, values, time_tag=None):
        return ScalarField(self.grid, values,
                           self.time_tag if time_tag is None else time_tag)


@dataclass(frozen=True)
class SymTensorField:
    """Symmetric 2-tensor field stored by upper-triangle components."""

    grid: Grid
    comps: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        comps = np.asarray(self.comps, dtype=float)
        want = self.grid.shape + (len(COMPONENTS[self.grid.n]),)
        if comps.shape != want:
            raise ValueError(f"component shape {comps.shape}, expected {want}")
        if not np.all(np.isfinite(comps)):
            raise ValueError("tensor components must be finite")
        object.__setattr__(self, "comps", comps)
        object.__setattr__(self, "time_tag", float(self.time_tag))

    @classmethod
    def zero(cls, grid, time_tag=0.0):
        return cls(grid, np.zeros(grid.shape + (len(COMPONENTS[grid.n]),)), time_tag)

    @classmethod
    def scaled_identity(cls, grid, c, time_tag=0.0):
        comps = np.zeros(grid.shape + (len(COMPONENTS[grid.n]),))
        for slot, (i, j) in enumerate(COMPONENTS[grid.n]):
            if i == j:
                comps[..., slot] = c
        return cls(grid, comps, time_tag)

    @classmethod
    def from_matrices(cls, grid, mats, time_tag=0.0):
        comps = np.stack([mats[..., i, j] for (i, j) in COMPONENTS[grid.n]], axis=-1)
        return cls(grid, comps, time_tag)

    def as_matrices(self):
        n = self.grid.n
        mats = np.empty(self.grid.shape + (n, n))
        for slot, (i, j) in enumerate(COMPONENTS[n]):
            mats[..., i, j] = self.comps[..., slot]
            mats[..., j, i] = self.comps[..., slot]
        return mats

    def __add__(self, other):
        if other.grid.shape != self.grid.shape:
            raise ValueError("grid mismatch")
        return SymTensorField(self.grid, self.comps + other.comps, self.time_tag)


def _diff1(values, axis, h, periodic):
    out = np.empty_like(values)
    if periodic:
        out[...] = (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2 * h)
        return out
    n = values.shape[axis]
    sl = lambda a, b=None: tuple(slice(a, b) if ax == axis else slice(None)
                                 for ax in range(values.ndim))
    at = lambda i: tuple(i if ax == axis else slice(None)
                         for ax in range(values.ndim))
    out[sl(1, n - 1)] = (values[sl(2, n)] - values[sl(0, n - 2)]) / (2 * h)
    out[at(0)] = (-3 * values[at(0)] + 4 * values[at(1)] - values[at(2)]) / (2 * h)
    out[at(n - 1)] = (3 * values[at(n - 1)] - 4 * values[at(n - 2)]
                      + values[at(n - 3)]) / (2 * h)
    return out


def _diff2(values, axis, h, periodic):
    out = np.empty_like(values)
    if periodic:
        out[...] = (np.roll(values, -1, axis) - 2 * values
                    + np.roll(values, 1, axis)) / h ** 2
        return out
    n = values.shape[axis]
    sl = lambda a, b=None: tuple(slice(a, b) if ax == axis else slice(None)
                                 for ax in range(values.ndim))
    at = lambda i: tuple(i if ax == axis else slice(None)
                         for ax in range(values.ndim))
    out[sl(1, n - 1)] = (values[sl(2, n)] - 2 * values[sl(1, n - 1)]
                         + values[sl(0, n - 2)]) / h ** 2
    out[at(0)] = (2 * values[at(0)] - 5 * values[at(1)] + 4 * values[at(2)]
                  - values[at(3)]) / h ** 2
    out[at(n - 1)] = (2 * values[at(n - 1)] - 5 * values[at(n - 2)]
                      + 4 * values[at(n - 3)] - values[at(n - 4)]) / h ** 2
    return out


def gradient_comps(grid, values):
    """All first derivatives, shape (*grid.shape, n)."""
    h = grid.spacing
    return np.stack([_diff1(values, ax, h[ax], grid.periodic)
                     for ax in range(grid.n)], axis=-1)


def hessian_comps(grid, values):
    """Upper-triangle second derivatives, shape (*grid.shape, ncomp).

    Mixed entries compose the two first-derivative stencils; on periodic
    interiors this equals the standard four-corner cross stencil.
    """
    h = grid.spacing
    out = np.empty(grid.shape + (len(COMPONENTS[grid.n]),))
    firsts = {}
    for slot, (i, j) in enumerate(COMPONENTS[grid.n]):
        if i == j:
            out[..., slot] = _diff2(values, i, h[i], grid.periodic)
        else:
            if i not in firsts:
                firsts[i] = _diff1(values, i, h[i], grid.periodic)
            out[..., slot] = _diff1(firsts[i], j, h[j], grid.periodic)
    return out


def gradient(field):
    """Gradient of a scalar field as an (n,)-stack array."""
    return gradient_comps(field.grid, field.values)


def hessian(field, chi=None):
    """Augmented Hessian D2 u + chi as a SymTensorField."""
    comps = hessian_comps(field.grid, field.values)
    if chi is not None:
        if chi.grid.shape != field.grid.shape:
            raise ValueError("chi lives on a different grid")
        comps = comps + chi.comps
    return SymTensorField(field.grid, comps, field.time_tag)


@dataclass
class AdmissibilityReport:
    admissible: bool
    min_margin: float
    worst_node: tuple
    eigen_min: float
    eigen_max: float


def admissibility_check(tensor, cone, required_margin=0.0):
    """Eigenvalue-cone membership of a tensor field, node by node."""
    w = eigh_batch(tensor.as_matrices())[0]
    margins = cone.margin(w)
    flat = int(np.argmin(margins))
    worst = np.unravel_index(flat, margins.shape)
    min_margin = float(margins[worst])
    return AdmissibilityReport(
        admissible=bool(min_margin > required_margin),
        min_margin=min_margin,
        worst_node=tuple(int(i) for i in worst),
        eigen_min=float(np.min(w)),
        eigen_max=float(np.max(w)),
    )


def field_eigenvalues(tensor):
    """Ascending eigenvalues of a symmetric tensor field, shape (..., n)."""
    return eigh_batch(tensor.as_matrices())[0]
