"""First-order jet data of metrics and the universal connection objects.

Coordinates on the jet space of metrics over an n-dimensional chart:
(x^h, y_ij with i <= j, y_ij,k with i <= j), flattened in that order, for a
total of m = n + P + P*n slots with P = n(n+1)/2.  Formulas below are written
with sums over all index values; the flattening helpers fold the symmetric
double-counting so that coefficient-times-tangent contractions come out
right.

All differentials here are analytic (chain rule through y^{-1}), never finite
differences, so identity tests isolate convention errors.
"""

from dataclasses import dataclass

import numpy as np

from .algebra import EndForm, increasing_indices, index_position, skew_part_g
from .fields import grid_gradient, spectral_derivative


def sym_pairs(n):
    return tuple((i, j) for i in range(n) for j in range(i, n))


def jet_dim(n):
    P = n * (n + 1) // 2
    return n + P + P * n


def _pair_pos(n):
    return {p: a for a, p in enumerate(sym_pairs(n))}


@dataclass(frozen=True)
class JetPoint:
    """(x, y, y1) with y symmetric positive definite and y1 symmetric in its
    first two indices: y1[i, j, k] plays the role of d_k y_ij."""

    x: np.ndarray
    y: np.ndarray
    y1: np.ndarray

    def __post_init__(self):
        n = self.y.shape[0]
        if not np.allclose(self.y, self.y.T):
            raise ValueError("y must be symmetric")
        if np.linalg.eigvalsh(self.y).min() <= 0:
            raise ValueError("y must be positive definite")
        if not np.allclose(self.y1, np.swapaxes(self.y1, 0, 1)):
            raise ValueError("y1 must be symmetric in its first two indices")

    @property
    def n(self):
        return self.y.shape[0]


@dataclass(frozen=True)
class JetTangent:
    dx: np.ndarray
    dy: np.ndarray   # symmetric
    dy1: np.ndarray  # symmetric in first two indices

    @property
    def n(self):
        return self.dy.shape[0]

    def flat(self):
        """Components with respect to the independent coordinates."""
        n = self.n
        parts = [np.asarray(self.dx, dtype=float)]
        parts.append(np.array([self.dy[i, j] for (i, j) in sym_pairs(n)]))
        parts.append(np.array([self.dy1[i, j, k] for (i, j) in sym_pairs(n)
                               for k in range(n)]))
        return np.concatenate(parts)


def random_jet_tangent(rng, n):
    dy = rng.standard_normal((n, n))
    dy = 0.5 * (dy + dy.T)
    dy1 = rng.standard_normal((n, n, n))
    dy1 = 0.5 * (dy1 + np.swapaxes(dy1, 0, 1))
    return JetTangent(rng.standard_normal(n), dy, dy1)


def flatten_covector(n, c_x=None, c_y=None, c_y1=None):
    """Fold 'all indices' coefficient arrays into the independent-coordinate
    layout, so that flat_covector . tangent.flat() equals
    sum_h c_x[h] dx^h + sum_{ALL i,j} c_y[i,j] dy_ij
    + sum_{ALL i,j,k} c_y1[i,j,k] dy1_ijk."""
    P = len(sym_pairs(n))
    out = np.zeros(jet_dim(n))
    if c_x is not None:
        out[:n] = c_x
    if c_y is not None:
        for a, (i, j) in enumerate(sym_pairs(n)):
            out[n + a] = c_y[i, j] if i == j else c_y[i, j] + c_y[j, i]
    if c_y1 is not None:
        for a, (i, j) in enumerate(sym_pairs(n)):
            for k in range(n):
                v = c_y1[i, j, k] if i == j else c_y1[i, j, k] + c_y1[j, i, k]
                out[n + P + a * n + k] = v
    return out


# ---------------------------------------------------------------------------
# connection coefficients on the jet space
# ---------------------------------------------------------------------------

def christoffel_jet(p):
    """Gamma^i_{jk} = (1/2) y^{ia} (y_aj,k + y_ak,j - y_jk,a)."""
    y_inv = np.linalg.inv(p.y)
    T = p.y1 + np.einsum("akj->ajk", p.y1) - np.einsum("jka->ajk", p.y1)
    return 0.5 * np.einsum("ia,ajk->ijk", y_inv, T)


def christoffel_jet_differential(p):
    """Analytic differential of Gamma as jet 1-forms: DG[c, i, j, k] is the
    coefficient of the c-th coordinate differential in d Gamma^i_{jk},
    using d(y^{ia}) = -y^{ib} dy_bc y^{ca}."""
    n = p.n
    y_inv = np.linalg.inv(p.y)
    gamma = christoffel_jet(p)
    m = jet_dim(n)
    DG = np.zeros((m, n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                c_y = np.einsum("b,c->bc", -y_inv[i], gamma[:, j, k])
                c_y1 = np.zeros((n, n, n))
                for a in range(n):
                    c_y1[a, j, k] += 0.5 * y_inv[i, a]
                    c_y1[a, k, j] += 0.5 * y_inv[i, a]
                    c_y1[j, k, a] -= 0.5 * y_inv[i, a]
                DG[:, i, j, k] = flatten_covector(n, None, c_y, c_y1)
    return DG


def contact_form(p):
    """The metric-twisted contact structure as an End-valued jet 1-form:
    theta^j_i = y^{aj} (dy_ia - y_ia,k dx^k), matrix rows = j, cols = i."""
    n = p.n
    y_inv = np.linalg.inv(p.y)
    m = jet_dim(n)
    coeffs = np.zeros((m, n, n))
    for j in range(n):
        for i in range(n):
            c_y = np.zeros((n, n))
            c_y[i, :] += y_inv[:, j]
            c_x = -np.einsum("a,ak->k", y_inv[:, j], p.y1[i])
            coeffs[:, j, i] = flatten_covector(n, c_x, c_y, None)
    return EndForm(1, m, coeffs)


def contact_value(p, v):
    """theta evaluated on a tangent, as a matrix."""
    return contact_form(p)(v.flat())


def _wedge_one_forms(m, A, B):
    """(A ^ B)[(a<b)] = A_a B_b - A_b B_a for coefficient vectors A, B."""
    pairs = increasing_indices(m, 2)
    return np.array([A[a] * B[b] - A[b] * B[a] for (a, b) in pairs])


def horizontal_curvature_form(p):
    """(d Gamma^i_{jk} ^ dx^k + Gamma^i_{as} Gamma^a_{jr} dx^s ^ dx^r)
    dx^j ⊗ d_i as an End-valued jet 2-form."""
    n = p.n
    m = jet_dim(n)
    DG = christoffel_jet_differential(p)
    gamma = christoffel_jet(p)
    pairs = increasing_indices(m, 2)
    pos = index_position(m, 2)
    coeffs = np.zeros((len(pairs), n, n))
    for i in range(n):
        for j in range(n):
            acc = np.zeros(len(pairs))
            for k in range(n):
                ek = np.zeros(m)
                ek[k] = 1.0
                acc += _wedge_one_forms(m, DG[:, i, j, k], ek)
            # quadratic term lives on the dx-dx block
            for s in range(n):
                for r in range(s + 1, n):
                    val = np.einsum("a,a->", gamma[i, :, s], gamma[:, j, r]) \
                        - np.einsum("a,a->", gamma[i, :, r], gamma[:, j, s])
                    acc[pos[(s, r)]] += val
            coeffs[:, i, j] = acc
    return EndForm(2, m, coeffs)


def universal_curvature_form(p):
    """Display form of the universal curvature: the y-skew part of the
    horizontal curvature minus half the contact-form square.  This is the
    object whose contraction with a vertical direction produces the skew
    covariant differential of the corresponding tensor (see
    contraction_identity_sides); it differs from the honest connection
    curvature by a quarter contact-square (see connection_curvature_jet)."""
    hor = horizontal_curvature_form(p)
    theta = contact_form(p)
    return hor.skew_g(p.y) - theta.wedge(theta).scale(0.5)


def connection_curvature_jet(p):
    """Curvature of the metric-compatible connection Gamma dx + theta/2 in
    the coordinate-frame gauge: equals the y-skew horizontal curvature minus
    a QUARTER of the contact-form square.

    Unlike the display form, this object is an honest curvature: its
    invariant polynomials are closed on the jet space and its equivariant
    completion is Cartan-closed, which is what the variational identities
    downstream rely on.  It agrees with the display form on verticals paired
    with holonomic lifts and on holonomic pairs (hence has the same metric
    pullback); the two differ on vertical pairs.
    """
    hor = horizontal_curvature_form(p)
    theta = contact_form(p)
    return hor.skew_g(p.y) - theta.wedge(theta).scale(0.25)


def universal_connection_form(p):
    """The connection Gamma dx + theta/2 as an End-valued jet 1-form
    (coordinate-frame gauge)."""
    n = p.n
    gamma = christoffel_jet(p)
    coeffs = 0.5 * contact_form(p).coeffs.copy()
    for k in range(n):
        coeffs[k] += gamma[:, :, k]
    return EndForm(1, jet_dim(n), coeffs)


def universal_connection_differential(p):
    """DA[d, c] = analytic derivative of the connection coefficient A_c by
    the d-th jet coordinate; dA then has coefficients DA[c, d] - DA[d, c].
    Used to cross-check connection_curvature_jet structurally."""
    n = p.n
    m = jet_dim(n)
    y_inv = np.linalg.inv(p.y)
    DG = christoffel_jet_differential(p)
    DA = np.zeros((m, m, n, n))
    for k in range(n):
        DA[:, k, :, :] += DG[:, :, :, k]
    pairs = list(sym_pairs(n))
    for j in range(n):
        for i in range(n):
            for a in range(n):
                c_y = -np.outer(y_inv[a, :], y_inv[:, j])
                pos = n + pairs.index(tuple(sorted((i, a))))
                DA[:, pos, j, i] += 0.5 * flatten_covector(n, None, c_y, None)
            for k in range(n):
                c_y = np.zeros((n, n))
                c_y1 = np.zeros((n, n, n))
                for a in range(n):
                    c_y += p.y1[i, a, k] * np.outer(y_inv[a, :], y_inv[:, j])
                    c_y1[i, a, k] -= y_inv[a, j]
                DA[:, k, j, i] += 0.5 * flatten_covector(n, None, c_y, c_y1)
    return DA


# ---------------------------------------------------------------------------
# canonical tangents
# ---------------------------------------------------------------------------

def prolong_vector(Xd, p):
    """First prolongation of the natural lift of a base vector field.

    dy_ij = -(d_i X^a y_aj + d_j X^a y_ai);
    dy1_ijk = total derivative of dy_ij minus y_ij,l d_k X^l, which expands to
    second derivatives of X against y plus first derivatives against y1.
    Xd = (X, dX, ddX) at the base point.
    """
    X, dX, ddX = Xd  # X[a], dX[a, i] = d_i X^a, ddX[a, i, k] = d_k d_i X^a
    y, y1 = p.y, p.y1
    dy = -(np.einsum("ai,aj->ij", dX, y) + np.einsum("aj,ai->ij", dX, y))
    t1 = -(np.einsum("aik,aj->ijk", ddX, y) + np.einsum("ajk,ai->ijk", ddX, y))
    t2 = -(np.einsum("ai,ajk->ijk", dX, y1) + np.einsum("aj,aik->ijk", dX, y1))
    t3 = -np.einsum("ija,ak->ijk", y1, dX)
    return JetTangent(np.asarray(X, dtype=float), dy, t1 + t2 + t3)


def vertical_prolongation(hd, p):
    """Vertical tangent of a symmetric-tensor direction: dx = 0, dy = h(x),
    dy1 = dh(x)."""
    h, dh = hd  # h[i, j], dh[i, j, k] = d_k h_ij
    return JetTangent(np.zeros(p.n), np.asarray(h, dtype=float),
                      np.asarray(dh, dtype=float))


def scaling_tangent(p):
    """Generator of the metric-rescaling flow: dy = y, dy1 = y1, dx = 0."""
    return JetTangent(np.zeros(p.n), p.y.copy(), p.y1.copy())


def holonomic_lift(gd, p, u):
    """Tangent of the 1-jet section of a metric along a base direction u:
    dx = u, dy = u . dg, dy1 = u . ddg.  Annihilated by the contact form."""
    g, dg, ddg = gd  # dg[i, j, k] = d_k g_ij; ddg[i, j, k, l] = d_l d_k g_ij
    u = np.asarray(u, dtype=float)
    return JetTangent(u, np.einsum("ijk,k->ij", dg, u),
                      np.einsum("ijkl,l->ijk", ddg, u))


# ---------------------------------------------------------------------------
# sampling jets of concrete metric fields
# ---------------------------------------------------------------------------

def metric_jet_data(g, node):
    """(g, dg, ddg) arrays at a grid node; exact for conformal metrics."""
    from .geometry import metric_derivatives, metric_second_derivatives

    dg = metric_derivatives(g)
    ddg = metric_second_derivatives(g, dg)
    idx = tuple(node)
    return g.samples[idx], dg[idx], ddg[idx]


def sym_tensor_jet_data(h, node):
    grid = h.grid
    dh = grid_gradient(h.samples, grid)
    idx = tuple(node)
    return h.samples[idx], dh[idx]


def vector_jet_data(X, node):
    grid = X.grid
    dX_full = grid_gradient(X.samples, grid)          # (..., a, i)
    ddX_full = grid_gradient(dX_full, grid)           # (..., a, i, k)
    idx = tuple(node)
    return X.samples[idx], dX_full[idx], ddX_full[idx]


def jet_of_metric(g, node):
    gv, dgv, _ = metric_jet_data(g, node)
    x = g.grid.node_coords(node)
    return JetPoint(x, gv, dgv)


def is_holonomic(p, gd, tol=1e-9):
    g, dg, _ = gd
    return (np.max(np.abs(p.y - g)) < tol) and (np.max(np.abs(p.y1 - dg)) < tol)


# ---------------------------------------------------------------------------
# the contraction identity and the equivariant form
# ---------------------------------------------------------------------------

class JetScene:
    """Grid-wide precomputation for repeated per-node jet checks against a
    fixed metric (and optionally a fixed symmetric-tensor direction)."""

    def __init__(self, g, h=None):
        from .geometry import (covd_endform_sym2, christoffel,
                               metric_derivatives, metric_second_derivatives)

        self.g = g
        self.dg = metric_derivatives(g)
        self.ddg = metric_second_derivatives(g, self.dg)
        self.gamma = christoffel(g, self.dg)
        self.h = h
        if h is not None:
            self.dh = grid_gradient(h.samples, g.grid)
            self.covd = covd_endform_sym2(g, h, gamma=self.gamma, dh=self.dh)

    def metric_data(self, node):
        idx = tuple(node)
        return self.g.samples[idx], self.dg[idx], self.ddg[idx]

    def tensor_data(self, node):
        idx = tuple(node)
        return self.h.samples[idx], self.dh[idx]

    def point(self, node):
        idx = tuple(node)
        return JetPoint(self.g.grid.node_coords(node), self.g.samples[idx],
                        self.dg[idx])

    def contraction_sides(self, node, v):
        """Both sides of the vertical-contraction identity at a holonomic
        point: the universal curvature contracted with the vertical
        prolongation of h then with v, against the skew covariant
        differential of h minus the skew of (g^-1 h) composed with the
        contact value."""
        p = self.point(node)
        hd = self.tensor_data(node)
        omega = universal_curvature_form(p)
        H = vertical_prolongation(hd, p)
        lhs = omega.contract(H.flat())(v.flat())

        idx = tuple(node)
        M = np.stack([self.covd.coeffs[i][idx] for i in range(self.g.grid.n)])
        covd_part = np.einsum("ijk,i->jk", M, np.asarray(v.dx, dtype=float))
        theta_v = contact_value(p, v)
        gh = np.linalg.inv(p.y) @ hd[0]
        rhs = skew_part_g(p.y, covd_part) - skew_part_g(p.y, gh @ theta_v)
        return lhs, rhs


def contraction_identity_sides(g, h, node, v, point=None):
    """One-shot form of JetScene.contraction_sides; validates that any
    caller-supplied jet point sits on the holonomic locus of g."""
    scene = JetScene(g, h)
    if point is not None and not is_holonomic(point, scene.metric_data(node)):
        raise ValueError("jet point is off the holonomic locus")
    return scene.contraction_sides(node, v)


def equivariant_shift(g, X, t, node):
    """Adjoint-type 0-form subtracted from the curvature in the equivariant
    characteristic form: the skew part of nabla X plus t times the residue of
    the scaling direction, computed from jet data (the residue cancels to
    zero, which is exactly what the t-independence checks certify)."""
    from .geometry import christoffel, nabla_vector

    p = jet_of_metric(g, node)
    idx = tuple(node)
    NX = nabla_vector(g, X)[idx]
    A = skew_part_g(g.samples[idx], NX)
    theta_xi = contact_value(p, scaling_tangent(p))
    residue = 0.5 * theta_xi - 0.5 * np.eye(g.grid.n)
    return A + t * residue


def equivariant_form_terms(f, g, X, t, node, curvature):
    """Graded pieces of f(curvature - shift, ..., curvature - shift) at a
    node: a dict degree -> ScalarForm on the base chart.  Binomial expansion
    over how many curvature slots are used."""
    import math as _math

    from .algebra import weil_eval_forms

    k = f.degree
    n = g.grid.n
    idx = tuple(node)
    shift = equivariant_shift(g, X, t, node)
    omega_node = EndForm(2, n, curvature.coeffs[(slice(None),) + idx])
    shift_form = EndForm(0, n, shift[None])
    terms = {}
    for i in range(k + 1):
        deg = 2 * i
        if deg > n:
            continue  # no alternating form of this degree on the base chart
        forms = [omega_node] * i + [shift_form] * (k - i)
        val = weil_eval_forms(f, forms).scale(_math.comb(k, i) * (-1.0) ** (k - i))
        terms[deg] = val if deg not in terms else terms[deg] + val
    return terms


def equivariant_form_direct(f, g, X, t, node, curvature):
    """Same object, evaluated without collecting binomials: sum over all
    2^k slot choices.  Used to cross-check the expansion."""
    from .algebra import weil_eval_forms

    k = f.degree
    n = g.grid.n
    idx = tuple(node)
    shift = equivariant_shift(g, X, t, node)
    omega_node = EndForm(2, n, curvature.coeffs[(slice(None),) + idx])
    shift_form = EndForm(0, n, shift[None])
    terms = {}
    for mask in range(1 << k):
        forms = []
        sign = 1.0
        for slot in range(k):
            if mask >> slot & 1:
                forms.append(omega_node)
            else:
                forms.append(shift_form)
                sign = -sign
        if sum(F.degree for F in forms) > n:
            continue
        val = weil_eval_forms(f, forms).scale(sign)
        deg = val.degree
        terms[deg] = val if deg not in terms else terms[deg] + val
    return terms
