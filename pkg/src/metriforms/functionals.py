"""Global functionals over the torus: curvature-trace two-forms on metric
perturbations, their moment maps, the Weil-Petersson comparison, and the
dimension-six integrands.

All quadrature is the trapezoid rule on the periodic grid (equal to the
rectangle rule there, spectrally accurate), accumulated in a fixed pairwise
order for bit-reproducible results.
"""

import math
from dataclasses import dataclass

import numpy as np

from .algebra import (
    EndForm, make_weil, skew_part_g, weil_eval_forms, weil_eval_forms_chains,
)
from .fields import Grid, MetricField, SymTensorField, VectorField, grid_gradient
from .geometry import (
    christoffel, complex_structure_sym2, covd_endform_sym2,
    curvature_endform, curvature_endform_surface, divergence_defect,
    exterior_d_1form, lie_derivative_metric, metric_derivatives,
    metric_inverse, musical_flat, nabla_vector, pullback_metric,
    pullback_sym_tensor, raise_2form, ricci_scalar, volume_density,
    volume_matrix,
)

TWO_PI = 2.0 * math.pi

# Orientation of the group action relative to the differential of the moment
# map: the residual |sigma(zeta, h) - SIGN_MOMENT * D_h mu| vanishes with
# this sign for the closed pair below.  Calibrated once and frozen (see
# tests/test_functionals.py::test_moment_identity_sign_is_frozen).
SIGN_MOMENT = +1.0


def pairwise_sum(values):
    """Deterministic pairwise summation of a 1-d array."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        v = v[:half] + v[half:2 * half] if n % 2 == 0 else \
            np.concatenate([v[:half] + v[half:2 * half], v[2 * half:]])
        n = v.size
    return float(v[0])


def integrate(samples, grid):
    """Trapezoid-rule integral of a scalar density over the periodic chart."""
    cell = (TWO_PI / grid.N) ** grid.n
    return pairwise_sum(samples) * cell


def integrate_two_form(coeff12, grid):
    """Integral of a 2-form on the 2-torus from its (1,2)-coefficient."""
    if grid.n != 2:
        raise ValueError("two-form integration is for n = 2")
    return integrate(coeff12, grid)


# ---------------------------------------------------------------------------
# result carriers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PresymplecticTerms:
    """Curvature-trace and divergence-defect contributions; value is their
    exact sum (same accumulation, no re-rounding)."""

    term_curvature: float
    term_divergence: float

    @property
    def value(self):
        return self.term_curvature + self.term_divergence


@dataclass(frozen=True)
class MomentValue:
    value: float
    X_label: str
    t: float


# ---------------------------------------------------------------------------
# shared pointwise assembly on surfaces
# ---------------------------------------------------------------------------

def _pair_product_skew(g, h, k):
    """((g^-1 h) o (g^-1 k)) with its g-skew part taken, as a matrix field."""
    g_inv = metric_inverse(g)
    gh = np.matmul(g_inv, h.samples)
    gk = np.matmul(g_inv, k.samples)
    return skew_part_g(g.samples, np.matmul(gh, gk))


def _covd_skew_form(g, h, gamma=None):
    D = covd_endform_sym2(g, h, gamma=gamma)
    return EndForm(1, g.grid.n, skew_part_g(g.samples[None], D.coeffs))


# ---------------------------------------------------------------------------
# the two-form on metric perturbations: three routes
# ---------------------------------------------------------------------------

def presymplectic_general(f, g, h, k, curvature=None):
    """Invariant-polynomial route, any dimension n = 4r - 2 with f of
    degree 2r:

        -2r(2r-1) * Int f_pol((covd h)_A, (covd k)_A, O, ..., O)
        -2r       * Int f_pol(((g^-1 h)(g^-1 k))_A, O, ..., O)

    On surfaces the curvature argument O defaults to the scalar-curvature
    object S (g^-1 vol) ⊗ vol; in higher dimensions to the connection
    curvature assembly.
    """
    n = g.grid.n
    if 2 * f.degree - 2 != n:
        raise ValueError("polynomial degree does not match the dimension")
    r = f.degree // 2 if f.degree % 2 == 0 else None
    if r is None or 4 * r - 2 != n:
        raise ValueError("dimension must be 4r - 2 for a degree-2r polynomial")
    if curvature is None:
        curvature = (curvature_endform_surface(g) if n == 2
                     else curvature_endform(g))
    gamma = christoffel(g)
    Fh = _covd_skew_form(g, h, gamma)
    Fk = _covd_skew_form(g, k, gamma)
    P = EndForm(0, n, _pair_product_skew(g, h, k)[None])
    term1 = weil_eval_forms(f, [Fh, Fk] + [curvature] * (2 * r - 2)).top
    term2 = weil_eval_forms(f, [P] + [curvature] * (2 * r - 1)).top
    cell = (TWO_PI / g.grid.N) ** n
    t1 = -2 * r * (2 * r - 1) * pairwise_sum(term1) * cell
    t2 = -2 * r * pairwise_sum(term2) * cell
    return t1 + t2


def presymplectic_p1(g, h, k):
    """First-Pontryagin trace route on a surface:
        (1/4 pi^2) Int tr(((g^-1 h)(g^-1 k))_A ^ O)
      + (1/4 pi^2) Int tr((covd h)_A ^ (covd k)_A)."""
    if g.grid.n != 2:
        raise ValueError("this route is for surfaces")
    omega = curvature_endform_surface(g)
    gamma = christoffel(g)
    Fh = _covd_skew_form(g, h, gamma)
    Fk = _covd_skew_form(g, k, gamma)
    P = _pair_product_skew(g, h, k)
    c = 1.0 / (4.0 * math.pi ** 2)
    term_a = np.einsum("...ij,...ji->...", P, omega.coeffs[0])
    term_b = Fh.wedge(Fk).trace().coeffs[0]
    cell = (TWO_PI / g.grid.N) ** 2
    return c * pairwise_sum(term_a) * cell + c * pairwise_sum(term_b) * cell


def presymplectic_scalar(g, h, k):
    """Scalar-curvature route on a surface, with the two contributions
    reported separately:

        (1/4 pi^2) Int S tr(g^-1 h o g^-1 k o g^-1 vol) vol
      - (1/8 pi^2) Int (div h - d tr h) ^ (div k - d tr k).
    """
    if g.grid.n != 2:
        raise ValueError("this route is for surfaces")
    S = ricci_scalar(g)
    g_inv = metric_inverse(g)
    gh = np.matmul(g_inv, h.samples)
    gk = np.matmul(g_inv, k.samples)
    E = raise_2form(g, volume_matrix(g))
    core = np.einsum("...ij,...jk,...ki->...", gh, gk, E)
    dens = volume_density(g)
    cell = (TWO_PI / g.grid.N) ** 2
    term_c = pairwise_sum(S * core * dens) * cell / (4.0 * math.pi ** 2)

    a = divergence_defect(g, h)
    b = divergence_defect(g, k)
    wedge12 = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    term_d = -pairwise_sum(wedge12) * cell / (8.0 * math.pi ** 2)
    return PresymplecticTerms(term_c, term_d)


def presymplectic_closed(g, h, k):
    """The closed two-form on metric perturbations: the fiber integration of
    the first invariant polynomial of the honest connection curvature.

    Evaluates to

        -2 Int p1_pol((covd h)_A, (covd k)_A)
        -1 Int p1_pol(((g^-1 h)(g^-1 k))_A, connection curvature),

    i.e. the curvature term carries half the weight it has in the displayed
    trace formulas.  This is the member of the family that is closed, and
    the one whose moment map satisfies the contraction identity; it is
    pinned against a direct jet-level fiber-integration oracle in the tests.
    """
    if g.grid.n != 2:
        raise ValueError("the closed two-form is implemented for surfaces")
    f = make_weil("p1")
    curvature = curvature_endform(g)
    gamma = christoffel(g)
    Fh = _covd_skew_form(g, h, gamma)
    Fk = _covd_skew_form(g, k, gamma)
    P = EndForm(0, 2, _pair_product_skew(g, h, k)[None])
    cell = (TWO_PI / g.grid.N) ** 2
    t1 = -2.0 * pairwise_sum(weil_eval_forms(f, [Fh, Fk]).top) * cell
    t2 = -2.0 * pairwise_sum(weil_eval_forms(f, [P, curvature]).top) * cell
    return t1 + 0.5 * t2


def moment_map_closed(g, X, t=0.0, label=""):
    """Moment value paired with presymplectic_closed: the trace formula
    against the honest connection curvature (half the displayed-formula
    value, with opposite sign)."""
    if g.grid.n != 2:
        raise ValueError("implemented for surfaces")
    omega = curvature_endform(g)
    A = skew_part_g(g.samples, nabla_vector(g, X))
    dens = np.einsum("...ij,...ji->...", A, omega.coeffs[0])
    val = integrate_two_form(dens, g.grid) / (4.0 * math.pi ** 2)
    return MomentValue(val, label, t)


# ---------------------------------------------------------------------------
# moment maps
# ---------------------------------------------------------------------------

def moment_map_trace(g, X, t=0.0, label=""):
    """(1/4 pi^2) Int tr((nabla X)_A o O) with the surface curvature object."""
    if g.grid.n != 2:
        raise ValueError("this route is for surfaces")
    omega = curvature_endform_surface(g)
    A = skew_part_g(g.samples, nabla_vector(g, X))
    dens2form = np.einsum("...ij,...ji->...", A, omega.coeffs[0])
    val = integrate_two_form(dens2form, g.grid) / (4.0 * math.pi ** 2)
    return MomentValue(val, label, t)


def moment_map_scalar(g, X, t=0.0, label=""):
    """(1/4 pi^2) Int dS ^ X^flat."""
    if g.grid.n != 2:
        raise ValueError("this route is for surfaces")
    S = ricci_scalar(g)
    dS = grid_gradient(S, g.grid)
    flat = musical_flat(g, X)
    wedge12 = dS[..., 0] * flat[..., 1] - dS[..., 1] * flat[..., 0]
    val = integrate_two_form(wedge12, g.grid) / (4.0 * math.pi ** 2)
    return MomentValue(val, label, t)


def moment_map(g, X, t=0.0, label=""):
    """Canonical moment value; independent of the scaling parameter t."""
    return moment_map_trace(g, X, t, label)


def moment_map_general(f, g, X, t=0.0, curvature=None):
    """General route: -2r Int f_pol((nabla X)_A, O, ..., O)."""
    n = g.grid.n
    r = f.degree // 2
    if f.degree % 2 or 4 * r - 2 != n:
        raise ValueError("dimension must be 4r - 2 for a degree-2r polynomial")
    if curvature is None:
        curvature = (curvature_endform_surface(g) if n == 2
                     else curvature_endform(g))
    A = EndForm(0, n, skew_part_g(g.samples, nabla_vector(g, X))[None])
    form = weil_eval_forms(f, [A] + [curvature] * (2 * r - 1))
    cell = (TWO_PI / g.grid.N) ** n
    return -2 * r * pairwise_sum(form.top) * cell


# ---------------------------------------------------------------------------
# Weil-Petersson comparison, pointwise
# ---------------------------------------------------------------------------

def weil_petersson_pointwise(g, h, k):
    """Node-wise densities (sigma_density, wp_density, S):

    sigma_density = (1/4 pi^2) S tr(g^-1 h o g^-1 k o g^-1 vol) sqrt(det g),
    wp_density    = (1/2) tr(g^-1 (J h) o g^-1 k) sqrt(det g),

    with J the composition with the oriented volume rotation.  Pointwise,
    sigma_density == -(S / 2 pi^2) wp_density for all symmetric h, k.
    """
    if g.grid.n != 2:
        raise ValueError("defined on surfaces")
    S = ricci_scalar(g)
    g_inv = metric_inverse(g)
    dens = volume_density(g)
    gh = np.matmul(g_inv, h.samples)
    gk = np.matmul(g_inv, k.samples)
    E = raise_2form(g, volume_matrix(g))
    core = np.einsum("...ij,...jk,...ki->...", gh, gk, E)
    sigma_density = S * core * dens / (4.0 * math.pi ** 2)
    Jh = complex_structure_sym2(g, h)
    wp_core = np.einsum("...ij,...ji->...", np.matmul(g_inv, Jh), gk)
    wp_density = 0.5 * wp_core * dens
    return sigma_density, wp_density, S


# ---------------------------------------------------------------------------
# variational identities by finite differences
# ---------------------------------------------------------------------------

def _metric_shift(g, h, eps):
    return MetricField(g.grid, g.samples + eps * h.samples)


def _sigma_value(g, h, k):
    return presymplectic_scalar(g, h, k).value


def action_direction(g, X, t):
    """Infinitesimal action of (X, t): t g - L_X g."""
    lie = lie_derivative_metric(g, X)
    return SymTensorField(g.grid, t * g.samples - lie.samples)


def _richardson_derivative(fn, eps):
    """Central difference with one Richardson step: O(eps^4) truncation."""
    d1 = (fn(eps) - fn(-eps)) / (2.0 * eps)
    d2 = (fn(eps / 2) - fn(-eps / 2)) / eps
    return (4.0 * d2 - d1) / 3.0


def moment_identity_residual(g, h, X, t, eps=1e-4):
    """|sigma(zeta(X, t), h) - SIGN_MOMENT * D_h mu(X, t)| with the action
    direction zeta = t g - L_X g and a Richardson-extrapolated central
    difference in the metric.

    Uses the closed pair (presymplectic_closed, moment_map_closed): that is
    the normalization for which the contraction identity holds, as certified
    at the jet level by the equivariant-closedness tests."""
    if eps <= 0:
        raise ValueError("step must be positive")
    zeta = action_direction(g, X, t)
    lhs = presymplectic_closed(g, zeta, h)
    rhs = _richardson_derivative(
        lambda e: moment_map_closed(_metric_shift(g, h, e), X, t).value, eps)
    return abs(lhs - SIGN_MOMENT * rhs)


def closedness_residual(g, h, k, el, eps=1e-4):
    """Finite-difference exterior derivative of the closed two-form on the
    affine space of metrics: D_h sigma(k, l) - D_k sigma(h, l)
    + D_l sigma(h, k) for constant directions."""
    if eps <= 0:
        raise ValueError("step must be positive")

    def d_dir(a, b, c):
        return _richardson_derivative(
            lambda e: presymplectic_closed(_metric_shift(g, a, e), b, c), eps)

    total = d_dir(h, k, el) - d_dir(k, h, el) + d_dir(el, h, k)
    return abs(total)


def diffeo_invariance_residual(g, h, k, phi):
    """|sigma_{phi* g}(phi* h, phi* k) - sigma_g(h, k)| (absolute)."""
    base = _sigma_value(g, h, k)
    moved = _sigma_value(pullback_metric(phi, g), pullback_sym_tensor(phi, h),
                         pullback_sym_tensor(phi, k))
    return abs(moved - base)


def scaling_invariance_residual(g, h, k, t):
    """|sigma_{e^t g}(e^t h, e^t k) - sigma_g(h, k)| (absolute)."""
    base = _sigma_value(g, h, k)
    s = math.exp(t)
    gs = MetricField(g.grid, s * g.samples)
    hs = SymTensorField(g.grid, s * h.samples)
    ks = SymTensorField(g.grid, s * k.samples)
    return abs(_sigma_value(gs, hs, ks) - base)


# ---------------------------------------------------------------------------
# dimension six: pointwise assembly from analytic mode data
# ---------------------------------------------------------------------------

class TorusScene6:
    """Conformal metric and band-limited tensor data on the 6-torus,
    evaluated analytically at arbitrary point batches (no stored grids)."""

    def __init__(self, phi_modes, h_modes, k_modes, X_modes=None):
        self.phi = phi_modes
        self.h_modes = h_modes
        self.k_modes = k_modes
        self.X_modes = X_modes
        self.n = 6

    def _scalar_jets(self, pts):
        n = self.n
        phi = self.phi.evaluate(pts)
        dphi = np.stack([self.phi.derivative(a).evaluate(pts)
                         for a in range(n)], axis=-1)
        ddphi = np.stack([
            np.stack([self.phi.derivative(a).derivative(b).evaluate(pts)
                      for b in range(n)], axis=-1)
            for a in range(n)], axis=-2)
        return phi, dphi, ddphi

    def _sym_values(self, modes, pts, with_derivative=True):
        n = self.n
        vals = np.zeros(pts.shape[:-1] + (n, n))
        dvals = np.zeros(pts.shape[:-1] + (n, n, n)) if with_derivative else None
        for (i, j), m in modes.items():
            v = m.evaluate(pts)
            vals[..., i, j] = v
            if i != j:
                vals[..., j, i] = v
            if with_derivative:
                for a in range(n):
                    dv = m.derivative(a).evaluate(pts)
                    dvals[..., i, j, a] = dv
                    if i != j:
                        dvals[..., j, i, a] = dv
        return vals, dvals

    def geometry_at(self, pts):
        """Metric, connection, curvature form, and skew covariant data."""
        n = self.n
        phi, dphi, ddphi = self._scalar_jets(pts)
        e2 = np.exp(2.0 * phi)
        g = e2[..., None, None] * np.eye(n)
        g_inv = np.exp(-2.0 * phi)[..., None, None] * np.eye(n)
        dG = 2.0 * g[..., :, :, None] * dphi[..., None, None, :]
        ddG = g[..., :, :, None, None] * (
            2.0 * ddphi + 4.0 * dphi[..., :, None] * dphi[..., None, :]
        )[..., None, None, :, :]

        T = dG + np.einsum("...akj->...ajk", dG) - np.einsum("...jka->...ajk", dG)
        gamma = 0.5 * np.einsum("...ia,...ajk->...ijk", g_inv, T)

        dT = ddG + np.einsum("...akjl->...ajkl", ddG) \
            - np.einsum("...jkal->...ajkl", ddG)
        dg_inv = -np.einsum("...ib,...bcl,...ca->...ial", g_inv, dG, g_inv)
        dgamma = 0.5 * (np.einsum("...ial,...ajk->...ijkl", dg_inv, T)
                        + np.einsum("...ia,...ajkl->...ijkl", g_inv, dT))

        R = np.einsum("...iljk->...ijkl", dgamma) \
            - np.einsum("...ikjl->...ijkl", dgamma) \
            + np.einsum("...ika,...alj->...ijkl", gamma, gamma) \
            - np.einsum("...ila,...akj->...ijkl", gamma, gamma)
        from .algebra import increasing_indices
        pairs = increasing_indices(n, 2)
        omega = EndForm(2, n, np.stack([R[..., :, :, a, b] for (a, b) in pairs],
                                       axis=0))
        return {"g": g, "g_inv": g_inv, "gamma": gamma, "omega": omega,
                "volume": np.exp(6.0 * phi)}

    def covd_skew_at(self, modes, pts, geo):
        n = self.n
        hv, dhv = self._sym_values(modes, pts)
        t1 = np.einsum("...jb,...ibk->...ijk", geo["g_inv"], dhv)
        t2 = np.einsum("...jb,...ab,...aik->...ijk", geo["g_inv"], hv,
                       geo["gamma"])
        t3 = np.einsum("...jb,...ia,...abk->...ijk", geo["g_inv"], hv,
                       geo["gamma"])
        M = t1 - t2 - t3
        coeffs = np.moveaxis(M, -3, 0)
        return hv, EndForm(1, n, skew_part_g(geo["g"], coeffs))

    def pair_skew_at(self, hv, kv, geo):
        gh = np.matmul(geo["g_inv"], hv)
        gk = np.matmul(geo["g_inv"], kv)
        return EndForm(0, self.n, skew_part_g(geo["g"], np.matmul(gh, gk))[None])

    def nabla_skew_at(self, pts, geo):
        n = self.n
        X = np.stack([m.evaluate(pts) for m in self.X_modes], axis=-1)
        dX = np.stack([
            np.stack([self.X_modes[a].derivative(b).evaluate(pts)
                      for b in range(n)], axis=-1)
            for a in range(n)], axis=-2)
        NX = dX + np.einsum("...ijk,...k->...ij", geo["gamma"], X)
        return EndForm(0, n, skew_part_g(geo["g"], NX)[None])


def _dim6_sigma_forms(f, scene, pts):
    geo = scene.geometry_at(pts)
    hv, Fh = scene.covd_skew_at(scene.h_modes, pts, geo)
    kv, Fk = scene.covd_skew_at(scene.k_modes, pts, geo)
    P = scene.pair_skew_at(hv, kv, geo)
    O = geo["omega"]
    return Fh, Fk, P, O


def dim6_sigma_integrand(f, scene, pts):
    """Displayed wedge-trace route (Koszul chains), pointwise top density."""
    Fh, Fk, P, O = _dim6_sigma_forms(f, scene, pts)
    t1 = weil_eval_forms_chains(f, [Fh, Fk, O, O]).top
    t2 = weil_eval_forms_chains(f, [P, O, O, O]).top
    return -12.0 * t1 - 4.0 * t2


def dim6_sigma_integrand_general(f, scene, pts):
    """Polarized-partition route (shared with presymplectic_general)."""
    Fh, Fk, P, O = _dim6_sigma_forms(f, scene, pts)
    t1 = weil_eval_forms(f, [Fh, Fk, O, O]).top
    t2 = weil_eval_forms(f, [P, O, O, O]).top
    return -12.0 * t1 - 4.0 * t2


def dim6_moment_integrand(f, scene, pts):
    geo = scene.geometry_at(pts)
    A = scene.nabla_skew_at(pts, geo)
    O = geo["omega"]
    return -4.0 * weil_eval_forms_chains(f, [A, O, O, O]).top


def dim6_moment_integrand_general(f, scene, pts):
    geo = scene.geometry_at(pts)
    A = scene.nabla_skew_at(pts, geo)
    O = geo["omega"]
    return -4.0 * weil_eval_forms(f, [A, O, O, O]).top


def dim6_integrate(integrand, scene, N=8, chunk=4096, f=None):
    """Chunked trapezoid integration of a pointwise top-density over the
    6-torus grid with N nodes per axis."""
    grid = Grid(6, N)
    nodes = grid.nodes().reshape(-1, 6)
    partials = []
    for start in range(0, nodes.shape[0], chunk):
        pts = nodes[start:start + chunk]
        vals = integrand(f, scene, pts) if f is not None else integrand(scene, pts)
        partials.append(pairwise_sum(vals))
    cell = (TWO_PI / N) ** 6
    return pairwise_sum(np.asarray(partials)) * cell
