"""Tensor fields sampled on periodic chart grids (flat-torus topology).

Every axis has period 2*pi with N uniform nodes x_a = 2*pi*a/N, so Fourier
differentiation is exact for trigonometric polynomials of degree < N/2.
Generated fields keep their Fourier mode lists, which lets them be evaluated
exactly at arbitrary points (needed for pullbacks along diffeomorphisms).
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SUPPORTED_BASE_DIMS = (2, 3, 6)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the n-torus: N nodes per axis, period 2*pi."""

    n: int
    N: int

    def __post_init__(self):
        if self.n not in SUPPORTED_BASE_DIMS:
            raise ValueError(f"base dimension must be one of {SUPPORTED_BASE_DIMS}")
        if self.N % 2 != 0:
            raise ValueError("grid size must be even")
        if self.N < 8:
            raise ValueError("grid size must be at least 8")

    @property
    def shape(self):
        return (self.N,) * self.n

    @property
    def node_count(self):
        return self.N ** self.n

    def axes(self):
        return np.arange(self.N) * (2.0 * np.pi / self.N)

    def nodes(self):
        """Node coordinates, shape (*grid_shape, n)."""
        axes = [self.axes()] * self.n
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def node_coords(self, index):
        return np.asarray(index, dtype=float) * (2.0 * np.pi / self.N)


def spectral_derivative(samples, axis, grid):
    """Fourier differentiation of periodic samples along a grid axis.

    The grid occupies the first grid.n array axes.  The Nyquist mode is
    zeroed, the standard choice for odd derivatives of real signals.
    """
    if not 0 <= axis < grid.n:
        raise ValueError("axis out of range")
    N = grid.N
    k = np.fft.fftfreq(N, d=1.0 / N)
    k[N // 2] = 0.0
    shape = [1] * samples.ndim
    shape[axis] = N
    mult = (1j * k).reshape(shape)
    spec = np.fft.fft(samples, axis=axis)
    return np.real(np.fft.ifft(spec * mult, axis=axis))


def grid_gradient(samples, grid):
    """Stack of spectral derivatives along every axis, last axis = direction."""
    return np.stack([spectral_derivative(samples, a, grid) for a in range(grid.n)],
                    axis=-1)


# ---------------------------------------------------------------------------
# Fourier mode sets (the exact, serializable description of generated fields)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeSet:
    """Real trigonometric polynomial sum of re*cos(k.x) - im*sin(k.x).

    modes is a tuple of (k_vector, re, im) with integer wave vectors.
    """

    n: int
    modes: tuple

    def evaluate(self, points):
        """Evaluate at points of shape (..., n)."""
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1])
        for k, re, im in self.modes:
            phase = points @ np.asarray(k, dtype=float)
            out += re * np.cos(phase) - im * np.sin(phase)
        return out

    def derivative(self, axis):
        new = tuple((k, -im * k[axis], re * k[axis]) for k, re, im in self.modes)
        return ModeSet(self.n, new)

    def max_mode(self):
        return max((max(abs(c) for c in k) for k, _, _ in self.modes), default=0)

    def to_json(self):
        return [[*k, re, im] for k, re, im in self.modes]

    @staticmethod
    def from_json(n, rows):
        modes = []
        for row in rows:
            if len(row) != n + 2:
                raise ValueError(f"mode row must have {n + 2} entries")
            k = tuple(int(c) for c in row[:n])
            modes.append((k, float(row[n]), float(row[n + 1])))
        return ModeSet(n, tuple(modes))


def random_modes(rng, n, decay, amplitude=1.0, max_mode=3, include_constant=False,
                 max_terms=None):
    """Seeded band-limited mode set with |coef| ~ amplitude * |k|^-decay.

    max_terms, when given, keeps only a seeded random subset of the wave
    vectors; used on the 6-torus where the full cube of modes is wasteful.
    """
    if decay <= 1.0:
        raise ValueError("decay must exceed 1")
    waves = []
    seen = set()
    for k in np.ndindex(*(2 * max_mode + 1,) * n):
        kv = tuple(int(c) - max_mode for c in k)
        if kv == (0,) * n:
            continue
        if tuple(-c for c in kv) in seen:
            continue  # conjugate pair already drawn; field is real by design
        seen.add(kv)
        waves.append(kv)
    if max_terms is not None and len(waves) > max_terms:
        idx = rng.choice(len(waves), size=max_terms, replace=False)
        waves = [waves[i] for i in sorted(idx)]
    modes = []
    for kv in waves:
        norm = float(np.sqrt(sum(c * c for c in kv)))
        scale = amplitude * norm ** (-decay)
        re, im = rng.standard_normal(2) * scale
        modes.append((kv, float(re), float(im)))
    if include_constant:
        modes.append(((0,) * n, float(rng.standard_normal() * amplitude), 0.0))
    return ModeSet(n, tuple(modes))


# ---------------------------------------------------------------------------
# field containers
# ---------------------------------------------------------------------------

def _symmetrize_exact(a):
    upper = np.triu(np.ones(a.shape[-2:], dtype=bool))
    sym = np.where(upper, a, np.swapaxes(a, -1, -2))
    return sym


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    samples: np.ndarray
    modes: ModeSet = None

    def __post_init__(self):
        if self.samples.shape != self.grid.shape:
            raise ValueError("scalar sample shape mismatch")

    def eval_at(self, points):
        if self.modes is not None:
            return self.modes.evaluate(points)
        return eval_samples_at(self.samples, self.grid, points)


@dataclass(frozen=True)
class OneFormField:
    grid: Grid
    samples: np.ndarray  # (*grid, n)

    def __post_init__(self):
        if self.samples.shape != self.grid.shape + (self.grid.n,):
            raise ValueError("one-form sample shape mismatch")


@dataclass(frozen=True)
class VectorField:
    grid: Grid
    samples: np.ndarray  # (*grid, n)
    component_modes: tuple = None  # tuple of ModeSet, one per component

    def __post_init__(self):
        if self.samples.shape != self.grid.shape + (self.grid.n,):
            raise ValueError("vector sample shape mismatch")

    def eval_at(self, points):
        if self.component_modes is None:
            raise ValueError("vector field has no analytic description")
        return np.stack([m.evaluate(points) for m in self.component_modes], axis=-1)


@dataclass(frozen=True)
class SymTensorField:
    grid: Grid
    samples: np.ndarray  # (*grid, n, n), exactly symmetric
    component_modes: dict = None  # {(i, j) i<=j: ModeSet}

    def __post_init__(self):
        if self.samples.shape != self.grid.shape + (self.grid.n, self.grid.n):
            raise ValueError("symmetric tensor sample shape mismatch")
        sym = _symmetrize_exact(self.samples)
        if not np.array_equal(sym, self.samples):
            object.__setattr__(self, "samples", sym)


@dataclass(frozen=True)
class MetricField:
    """Riemannian metric samples; SPD is checked at every node."""

    grid: Grid
    samples: np.ndarray  # (*grid, n, n)
    conformal_factor: ModeSet = None   # set when g = exp(2*phi) * base
    base: np.ndarray = None            # constant SPD matrix for conformal metrics

    MIN_EIGENVALUE = 1e-8

    def __post_init__(self):
        if self.samples.shape != self.grid.shape + (self.grid.n, self.grid.n):
            raise ValueError("metric sample shape mismatch")
        object.__setattr__(self, "samples", _symmetrize_exact(self.samples))
        eig = np.linalg.eigvalsh(self.samples)
        if eig.min() <= self.MIN_EIGENVALUE:
            raise ValueError("metric is not positive definite on the grid")

    @property
    def is_conformal(self):
        return self.conformal_factor is not None

    def eval_at(self, points):
        if not self.is_conformal:
            raise ValueError("only conformal metrics have an analytic description")
        phi = self.conformal_factor.evaluate(points)
        return np.exp(2.0 * phi)[..., None, None] * self.base


def conformal_metric(grid, phi_modes, base=None):
    """g = exp(2*phi) * base with phi a band-limited scalar: SPD by design."""
    if base is None:
        base = np.eye(grid.n)
    base = np.asarray(base, dtype=float)
    if not np.allclose(base, base.T) or np.linalg.eigvalsh(base).min() <= 0:
        raise ValueError("base must be a constant SPD matrix")
    phi = phi_modes.evaluate(grid.nodes())
    samples = np.exp(2.0 * phi)[..., None, None] * base
    return MetricField(grid, samples, conformal_factor=phi_modes, base=base)


def sym_tensor_from_modes(grid, comp_modes):
    """comp_modes: {(i, j) with i <= j: ModeSet} -> SymTensorField."""
    n = grid.n
    nodes = grid.nodes()
    samples = np.zeros(grid.shape + (n, n))
    for (i, j), m in comp_modes.items():
        vals = m.evaluate(nodes)
        samples[..., i, j] = vals
        if i != j:
            samples[..., j, i] = vals
    return SymTensorField(grid, samples, component_modes=dict(comp_modes))


def vector_from_modes(grid, comp_modes):
    samples = np.stack([m.evaluate(grid.nodes()) for m in comp_modes], axis=-1)
    return VectorField(grid, samples, component_modes=tuple(comp_modes))


# ---------------------------------------------------------------------------
# seeded random fields
# ---------------------------------------------------------------------------

def random_scalar(rng, grid, decay=2.5, amplitude=0.3, max_mode=3):
    modes = random_modes(rng, grid.n, decay, amplitude, max_mode)
    return ScalarField(grid, modes.evaluate(grid.nodes()), modes=modes)


def random_conformal_metric(rng, grid, decay=2.5, amplitude=0.25, max_mode=3,
                            base=None):
    modes = random_modes(rng, grid.n, decay, amplitude, max_mode)
    return conformal_metric(grid, modes, base=base)


def random_sym_tensor(rng, grid, decay=2.5, amplitude=0.5, max_mode=3):
    comp = {}
    for i in range(grid.n):
        for j in range(i, grid.n):
            comp[(i, j)] = random_modes(rng, grid.n, decay, amplitude, max_mode,
                                        include_constant=True)
    return sym_tensor_from_modes(grid, comp)


def random_vector(rng, grid, decay=2.5, amplitude=0.5, max_mode=3):
    comp = tuple(random_modes(rng, grid.n, decay, amplitude, max_mode,
                              include_constant=True)
                 for _ in range(grid.n))
    return vector_from_modes(grid, comp)


# ---------------------------------------------------------------------------
# trigonometric interpolation of plain samples
# ---------------------------------------------------------------------------

def eval_samples_at(samples, grid, points):
    """Evaluate periodic grid samples at arbitrary points by evaluating the
    full discrete Fourier series.  Exact for band-limited fields, spectrally
    accurate for smooth ones."""
    points = np.asarray(points, dtype=float)
    coeffs = np.fft.fftn(samples, axes=tuple(range(grid.n))) / grid.node_count
    k1d = np.fft.fftfreq(grid.N, d=1.0 / grid.N)
    flat_c = coeffs.reshape(-1)
    kmesh = np.meshgrid(*([k1d] * grid.n), indexing="ij")
    kflat = np.stack([k.reshape(-1) for k in kmesh], axis=-1)  # (M, n)
    pts = points.reshape(-1, grid.n)
    phases = pts @ kflat.T                                     # (P, M)
    vals = np.exp(1j * phases) @ flat_c
    return np.real(vals).reshape(points.shape[:-1])


@lru_cache(maxsize=None)
def _unit(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e
