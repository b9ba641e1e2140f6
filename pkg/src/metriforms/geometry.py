"""Metric-dependent operators on periodic charts.

Index conventions, frozen once and used everywhere:

* matrices act as (E v)^i = E^i_j v^j (row = upper index);
* a 2-form beta has beta_12 = beta(d_1, d_2) and the determinant wedge
  convention (a ^ b)(u, v) = a(u) b(v) - a(v) b(u);
* vol_g = sqrt(det g) dx^1 ^ dx^2, stored as the matrix sqrt(det g) eps_ij;
* raising a 2-form to an endomorphism contracts the second slot,
  (g^-1 beta)^i_j = g^{ia} beta_{ja}.  This is the realization under which
  the skew part of the covariant vector differential equals half the raised
  exterior differential of the lowered field, and it is used consistently;
* the Hodge star on 1-forms is (star a)_i = vol_{ia} g^{ab} a_b, the
  orientation that makes the Pfaffian of the skew covariant differential
  equal minus one half the starred divergence defect (see tests).
"""

import numpy as np

from .algebra import EndForm, increasing_indices, skew_part_g
from .fields import (
    Grid, MetricField, ScalarField, SymTensorField, VectorField,
    eval_samples_at, grid_gradient, spectral_derivative,
)


# ---------------------------------------------------------------------------
# basic metric algebra
# ---------------------------------------------------------------------------

def metric_inverse(g):
    return np.linalg.inv(g.samples if isinstance(g, MetricField) else g)

def metric_det(g):
    return np.linalg.det(g.samples if isinstance(g, MetricField) else g)


def volume_density(g):
    """sqrt(det g) at every node."""
    return np.sqrt(metric_det(g))


def volume_matrix(g):
    """Coefficient matrix of the area form: sqrt(det g) * eps_ij (n = 2)."""
    eps = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return volume_density(g)[..., None, None] * eps


def raise_2form(g, beta_mat):
    """Endomorphism with (g^-1 beta)^i_j = g^{ia} beta_{ja}."""
    g_inv = metric_inverse(g)
    return np.matmul(g_inv, np.swapaxes(beta_mat, -1, -2))


def musical_flat(g, X):
    """Lower a vector field: (X^flat)_i = g_{ia} X^a."""
    return np.einsum("...ia,...a->...i", g.samples, X.samples)


def musical_sharp(g, alpha):
    """Raise a one-form: (alpha^sharp)^i = g^{ia} alpha_a."""
    return np.einsum("...ia,...a->...i", metric_inverse(g), alpha)


def hodge_star_1form(g, alpha):
    """(star alpha)_i = vol_{ia} g^{ab} alpha_b (n = 2)."""
    return np.einsum("...ia,...a->...i", volume_matrix(g), musical_sharp(g, alpha))


def trace_g(g, h):
    return np.einsum("...ij,...ij->...", metric_inverse(g), h.samples)


def complex_structure_sym2(g, h):
    """Compose a symmetric tensor with the oriented volume rotation:
    (J h)_{ij} = vol_{ia} (g^-1 h)^a_j.  On trace-free tensors J^2 = -id."""
    gh = np.matmul(metric_inverse(g), h.samples)
    return np.matmul(volume_matrix(g), gh)


# ---------------------------------------------------------------------------
# connection and curvature
# ---------------------------------------------------------------------------

def metric_derivatives(g):
    """dG[..., i, j, k] = d_k g_{ij}.

    Conformal metrics exp(2 phi) * base get the analytic 2 (d_k phi) g_{ij},
    which keeps the Christoffel symbols exactly band-limited; generic metrics
    fall back to spectral differentiation of the samples."""
    if isinstance(g, MetricField) and g.is_conformal:
        nodes = g.grid.nodes()
        dphi = np.stack([g.conformal_factor.derivative(a).evaluate(nodes)
                         for a in range(g.grid.n)], axis=-1)
        return 2.0 * g.samples[..., :, :, None] * dphi[..., None, None, :]
    return grid_gradient(g.samples, g.grid)


def metric_second_derivatives(g, dG=None):
    """ddG[..., i, j, k, l] = d_l d_k g_{ij}; analytic for conformal metrics."""
    if isinstance(g, MetricField) and g.is_conformal:
        nodes = g.grid.nodes()
        n = g.grid.n
        dphi = np.stack([g.conformal_factor.derivative(a).evaluate(nodes)
                         for a in range(n)], axis=-1)
        ddphi = np.stack([
            np.stack([g.conformal_factor.derivative(a).derivative(b).evaluate(nodes)
                      for b in range(n)], axis=-1)
            for a in range(n)], axis=-2)
        factor = 2.0 * ddphi + 4.0 * dphi[..., :, None] * dphi[..., None, :]
        return g.samples[..., :, :, None, None] * factor[..., None, None, :, :]
    if dG is None:
        dG = metric_derivatives(g)
    return grid_gradient(dG, g.grid)


def christoffel(g, dG=None):
    """Gamma^i_{jk} = (1/2) g^{ia} (d_k g_{aj} + d_j g_{ak} - d_a g_{jk})."""
    if dG is None:
        dG = metric_derivatives(g)
    g_inv = metric_inverse(g)
    # T_{ajk} = d_k g_{aj} + d_j g_{ak} - d_a g_{jk}
    T = dG + np.einsum("...akj->...ajk", dG) - np.einsum("...jka->...ajk", dG)
    return 0.5 * np.einsum("...ia,...ajk->...ijk", g_inv, T)


def christoffel_derivatives(g, gamma=None):
    """dGamma[..., i, j, k, l] = d_l Gamma^i_{jk}, spectral."""
    if gamma is None:
        gamma = christoffel(g)
    return grid_gradient(gamma, g.grid)


def riemann(g, gamma=None, dgamma=None):
    """R^i_{jkl} = d_k G^i_{lj} - d_l G^i_{kj} + G^i_{ka} G^a_{lj} - G^i_{la} G^a_{kj},
    so that the curvature of the Levi-Civita connection, as an End-valued
    2-form, has coefficient R^i_{j, k<l}."""
    if gamma is None:
        gamma = christoffel(g)
    if dgamma is None:
        dgamma = christoffel_derivatives(g, gamma)
    term = np.einsum("...iljk->...ijkl", dgamma) \
        - np.einsum("...ikjl->...ijkl", dgamma)
    quad = np.einsum("...ika,...alj->...ijkl", gamma, gamma) \
        - np.einsum("...ila,...akj->...ijkl", gamma, gamma)
    return term + quad


def ricci_scalar(g, R=None):
    """Scalar curvature; equals twice the Gauss curvature for n = 2."""
    if R is None:
        R = riemann(g)
    ric = np.einsum("...ajal->...jl", R)
    return np.einsum("...jl,...jl->...", metric_inverse(g), ric)


def scalar_curvature(g):
    return ScalarField(g.grid, ricci_scalar(g))


def curvature_endform(g, R=None):
    """Connection curvature as an End-valued 2-form over the grid:
    coefficient on k < l is the matrix R^i_{j k l}.  Valid in any dimension."""
    n = g.grid.n
    if R is None:
        R = riemann(g)
    pairs = increasing_indices(n, 2)
    coeffs = np.stack([R[..., :, :, k, l] for (k, l) in pairs], axis=0)
    return EndForm(2, n, coeffs)


def curvature_endform_surface(g, S=None):
    """Surface curvature object S * (g^-1 vol) ⊗ vol used by the global
    two-form and moment-map formulas (n = 2).

    Note: this equals -2 times curvature_endform(g); the factor is the
    price of the scalar-curvature normalization (S = 2K) together with the
    second-slot raising convention, and the agreement identities between
    the trace formulas and the scalar-curvature formulas require exactly
    this object.  Both objects are exposed; see test_geometry for the
    pinned relation.
    """
    if g.grid.n != 2:
        raise ValueError("surface curvature form requires n = 2")
    if S is None:
        S = ricci_scalar(g)
    vol = volume_matrix(g)
    E = raise_2form(g, vol)
    dens = volume_density(g)
    coeffs = (S * dens)[..., None, None] * E
    return EndForm(2, 2, coeffs[None, ...])


# ---------------------------------------------------------------------------
# covariant differentials
# ---------------------------------------------------------------------------

def nabla_vector(g, X, gamma=None, dX=None):
    """(nabla X)^i_j = d_j X^i + Gamma^i_{jk} X^k as a matrix field."""
    if gamma is None:
        gamma = christoffel(g)
    if dX is None:
        dX = grid_gradient(X.samples, g.grid)  # (..., i, j) = d_j X^i
    return dX + np.einsum("...ijk,...k->...ij", gamma, X.samples)


def covd_endform_sym2(g, h, gamma=None, dh=None):
    """Covariant differential of a symmetric 2-tensor reshaped into an
    End-valued 1-form: the 1-form slot is the first tensor slot of h and the
    matrix on slot i is M(i)^j_k = g^{jb} (d_k h_{ib} - h_{ab} G^a_{ik}
    - h_{ia} G^a_{bk}).  Its End-trace is the divergence."""
    if gamma is None:
        gamma = christoffel(g)
    if dh is None:
        dh = grid_gradient(h.samples, g.grid)  # (..., i, b, k) = d_k h_{ib}
    g_inv = metric_inverse(g)
    t1 = np.einsum("...jb,...ibk->...ijk", g_inv, dh)
    t2 = np.einsum("...jb,...ab,...aik->...ijk", g_inv, h.samples, gamma)
    t3 = np.einsum("...jb,...ia,...abk->...ijk", g_inv, h.samples, gamma)
    M = t1 - t2 - t3  # (..., i, j, k): slot i, matrix rows j, cols k
    coeffs = np.moveaxis(M, -3, 0)
    return EndForm(1, g.grid.n, coeffs)


def divergence_sym2(g, h, gamma=None, dh=None):
    """(div h)_i = g^{jb} (d_j h_{ib} - h_{ab} G^a_{ij} - h_{ia} G^a_{bj}),
    implemented directly (not via the End-trace) for cross-checking."""
    if gamma is None:
        gamma = christoffel(g)
    if dh is None:
        dh = grid_gradient(h.samples, g.grid)
    g_inv = metric_inverse(g)
    t1 = np.einsum("...jb,...ibj->...i", g_inv, dh)
    t2 = np.einsum("...jb,...ab,...aij->...i", g_inv, h.samples, gamma)
    t3 = np.einsum("...jb,...ia,...abj->...i", g_inv, h.samples, gamma)
    return t1 - t2 - t3


def divergence_defect(g, h):
    """The 1-form (div h) - d(tr_g h) entering the surface identities."""
    delta = divergence_sym2(g, h)
    tr = trace_g(g, h)
    return delta - grid_gradient(tr, g.grid)


def exterior_d_1form(alpha, grid):
    """d of a 1-form: coefficient array over increasing pairs (k < l)."""
    dal = grid_gradient(alpha, grid)  # (..., i, k) = d_k alpha_i
    pairs = increasing_indices(grid.n, 2)
    return np.stack([dal[..., l, k] - dal[..., k, l] for (k, l) in pairs], axis=-1)


def lie_derivative_metric(g, X, dX=None):
    """(L_X g)_{ij} = X^a d_a g_{ij} + g_{aj} d_i X^a + g_{ia} d_j X^a."""
    dG = metric_derivatives(g)
    if dX is None:
        dX = grid_gradient(X.samples, g.grid)
    t1 = np.einsum("...ijk,...k->...ij", dG, X.samples)
    t2 = np.einsum("...aj,...ai->...ij", g.samples, dX)
    t3 = np.einsum("...ia,...aj->...ij", g.samples, dX)
    return SymTensorField(g.grid, t1 + t2 + t3)


# ---------------------------------------------------------------------------
# diffeomorphisms of the torus and pullbacks
# ---------------------------------------------------------------------------

class Diffeo:
    """Orientation-preserving torus map with a closed-form Jacobian."""

    def apply(self, points):
        raise NotImplementedError

    def jacobian(self, points):
        raise NotImplementedError

    def inverse(self):
        raise NotImplementedError

    def check_orientation(self, grid):
        J = self.jacobian(grid.nodes())
        if np.min(np.linalg.det(J)) <= 0:
            raise ValueError("diffeomorphism does not preserve orientation")


class Translation(Diffeo):
    def __init__(self, shift):
        self.shift = np.asarray(shift, dtype=float)

    def apply(self, points):
        return np.mod(points + self.shift, 2.0 * np.pi)

    def jacobian(self, points):
        n = self.shift.size
        return np.broadcast_to(np.eye(n), points.shape[:-1] + (n, n)).copy()

    def inverse(self):
        return Translation(-self.shift)


class Shear(Diffeo):
    """x -> A x mod 2*pi with A an integer matrix of determinant one."""

    def __init__(self, matrix):
        A = np.asarray(matrix)
        if not np.issubdtype(A.dtype, np.integer):
            raise ValueError("shear matrix must be integer")
        if round(np.linalg.det(A)) != 1:
            raise ValueError("shear matrix must have determinant one")
        self.A = A.astype(float)
        self.A_int = A

    def apply(self, points):
        return np.mod(points @ self.A.T, 2.0 * np.pi)

    def jacobian(self, points):
        n = self.A.shape[0]
        return np.broadcast_to(self.A, points.shape[:-1] + (n, n)).copy()

    def inverse(self):
        inv = np.rint(np.linalg.inv(self.A)).astype(int)
        return Shear(inv)


class Perturbation(Diffeo):
    """x -> x + v(x) for a small band-limited vector field v, inverted by
    fixed-point iteration (at most 50 steps, tolerance 1e-12)."""

    MAX_ITER = 50
    TOL = 1e-12

    def __init__(self, component_modes, forward=True):
        self.component_modes = tuple(component_modes)
        self.forward = forward
        self.n = self.component_modes[0].n

    def _v(self, points):
        return np.stack([m.evaluate(points) for m in self.component_modes], axis=-1)

    def _dv(self, points):
        cols = []
        for m in self.component_modes:
            cols.append(np.stack([m.derivative(a).evaluate(points)
                                  for a in range(self.n)], axis=-1))
        return np.stack(cols, axis=-2)  # (..., i, j) = d_j v^i

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        if self.forward:
            return np.mod(points + self._v(points), 2.0 * np.pi)
        y = points.copy()
        for _ in range(self.MAX_ITER):
            y_new = points - self._v(y)
            if np.max(np.abs(y_new - y)) < self.TOL:
                y = y_new
                break
            y = y_new
        return np.mod(y, 2.0 * np.pi)

    def jacobian(self, points):
        if self.forward:
            n = self.n
            return np.broadcast_to(np.eye(n), points.shape[:-1] + (n, n)).copy() \
                + self._dv(points)
        y = self.apply(points)
        n = self.n
        Jf = np.broadcast_to(np.eye(n), points.shape[:-1] + (n, n)).copy() \
            + self._dv(y)
        return np.linalg.inv(Jf)

    def inverse(self):
        return Perturbation(self.component_modes, forward=not self.forward)


def _field_values_at(field, points):
    """Evaluate a field at arbitrary points, preferring the analytic modes."""
    if isinstance(field, MetricField):
        if field.is_conformal:
            return field.eval_at(points)
        comps = np.stack([
            eval_samples_at(field.samples[..., i, j], field.grid, points)
            for i in range(field.grid.n) for j in range(field.grid.n)
        ], axis=-1)
        return comps.reshape(points.shape[:-1] + (field.grid.n, field.grid.n))
    if isinstance(field, SymTensorField):
        n = field.grid.n
        if field.component_modes is not None:
            out = np.zeros(points.shape[:-1] + (n, n))
            for (i, j), m in field.component_modes.items():
                vals = m.evaluate(points)
                out[..., i, j] = vals
                if i != j:
                    out[..., j, i] = vals
            return out
        comps = np.stack([
            eval_samples_at(field.samples[..., i, j], field.grid, points)
            for i in range(n) for j in range(n)], axis=-1)
        return comps.reshape(points.shape[:-1] + (n, n))
    if isinstance(field, VectorField):
        if field.component_modes is not None:
            return field.eval_at(points)
        return np.stack([eval_samples_at(field.samples[..., i], field.grid, points)
                         for i in range(field.grid.n)], axis=-1)
    if isinstance(field, ScalarField):
        return field.eval_at(points)
    raise TypeError(f"cannot evaluate field of type {type(field)!r}")


def pullback_scalar(phi, f):
    pts = phi.apply(f.grid.nodes())
    return ScalarField(f.grid, _field_values_at(f, pts))


def pullback_metric(phi, g):
    pts = phi.apply(g.grid.nodes())
    J = phi.jacobian(g.grid.nodes())
    vals = _field_values_at(g, pts)
    samples = np.einsum("...ai,...ab,...bj->...ij", J, vals, J)
    return MetricField(g.grid, samples)


def pullback_sym_tensor(phi, h):
    pts = phi.apply(h.grid.nodes())
    J = phi.jacobian(h.grid.nodes())
    vals = _field_values_at(h, pts)
    samples = np.einsum("...ai,...ab,...bj->...ij", J, vals, J)
    return SymTensorField(h.grid, samples)


def pullback_vector(phi, X):
    pts = phi.apply(X.grid.nodes())
    J = phi.jacobian(X.grid.nodes())
    vals = _field_values_at(X, pts)
    samples = np.einsum("...ij,...j->...i", np.linalg.inv(J), vals)
    return VectorField(X.grid, samples)


def pullback_tensor_1_2(phi, T, grid):
    """Pull back a field of (slot, row, col)-indexed arrays where the slot
    and column are covariant and the row is contravariant:
    T'[i, j, k](x) = J^a_i (J^-1)^j_b J^c_k T[a, b, c](phi x)."""
    pts = phi.apply(grid.nodes())
    J = phi.jacobian(grid.nodes())
    J_inv = np.linalg.inv(J)
    n = grid.n
    comps = np.stack([
        eval_samples_at(T[..., i, j, k], grid, pts)
        for i in range(n) for j in range(n) for k in range(n)], axis=-1)
    vals = comps.reshape(pts.shape[:-1] + (n, n, n))
    return np.einsum("...jb,...abc,...ai,...ck->...ijk", J_inv, vals, J, J)
