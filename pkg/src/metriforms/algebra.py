"""Pointwise multilinear algebra: invariant polynomials and End-valued forms.

Matrices are numpy arrays of shape (..., d, d) with the row as the upper
index, so (E @ v)^i = E^i_j v^j.  Alternating forms keep one coefficient per
strictly increasing multi-index over a basis of the underlying m-dimensional
space, which makes antisymmetry structural.  Every operation broadcasts over
leading batch axes; a whole grid of pointwise values is just a form whose
coefficients carry a batch axis.
"""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SUPPORTED_DIMS = (2, 3, 6)


# ---------------------------------------------------------------------------
# multi-index bookkeeping
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def increasing_indices(m, p):
    """All strictly increasing p-tuples drawn from range(m), sorted."""
    return tuple(itertools.combinations(range(m), p))


@lru_cache(maxsize=None)
def index_position(m, p):
    return {K: a for a, K in enumerate(increasing_indices(m, p))}


def _inversions_between(left, right):
    """Number of pairs (i, j) with i in left, j in right, i > j."""
    return sum(1 for i in left for j in right if i > j)


def shuffle_sign(left, right):
    """Sign of sorting the concatenation of two increasing disjoint tuples."""
    return -1.0 if _inversions_between(left, right) % 2 else 1.0


def _concat_sign(blocks):
    """Sign of sorting the concatenation of increasing disjoint blocks."""
    inv = 0
    for a in range(len(blocks)):
        for b in range(a + 1, len(blocks)):
            inv += _inversions_between(blocks[a], blocks[b])
    return -1.0 if inv % 2 else 1.0


def _ordered_partitions(K, sizes):
    """All ways to split the tuple K into ordered blocks of the given sizes,
    each block kept increasing."""
    if not sizes:
        yield ()
        return
    p = sizes[0]
    for first in itertools.combinations(K, p):
        rest = tuple(x for x in K if x not in first)
        for tail in _ordered_partitions(rest, sizes[1:]):
            yield (first,) + tail


@lru_cache(maxsize=None)
def _wedge_table(m, p, q):
    """Gather table for the wedge of a p-form with a q-form on an m-space.

    Returns (left, right, sign) index arrays grouped by output coefficient;
    each output multi-index owns exactly binom(p+q, p) consecutive rows.
    """
    pos_p = index_position(m, p)
    pos_q = index_position(m, q)
    lefts, rights, signs = [], [], []
    for K in increasing_indices(m, p + q):
        for I in itertools.combinations(K, p):
            J = tuple(x for x in K if x not in I)
            lefts.append(pos_p[I])
            rights.append(pos_q[J])
            signs.append(shuffle_sign(I, J))
    return (np.asarray(lefts), np.asarray(rights), np.asarray(signs))


@lru_cache(maxsize=None)
def _partition_table(m, sizes):
    """Gather table for blockwise evaluation of a multilinear function on
    forms of the given degrees.  Rows are grouped by output multi-index;
    each output owns multinomial(sum(sizes); sizes) consecutive rows."""
    q = sum(sizes)
    block_idx = [[] for _ in sizes]
    signs = []
    for K in increasing_indices(m, q):
        for blocks in _ordered_partitions(K, tuple(sizes)):
            signs.append(_concat_sign(blocks))
            for t, blk in enumerate(blocks):
                block_idx[t].append(index_position(m, sizes[t])[blk])
    return tuple(np.asarray(b) for b in block_idx), np.asarray(signs)


def _rows_per_output(sizes):
    q = sum(sizes)
    rows = math.factorial(q)
    for p in sizes:
        rows //= math.factorial(p)
    return rows


# ---------------------------------------------------------------------------
# forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EndForm:
    """Alternating form with endomorphism values.

    coeffs has shape (n_indices, *batch, d, d) where n_indices is
    binom(space_dim, degree) and indices run over increasing multi-indices.
    """

    degree: int
    space_dim: int
    coeffs: np.ndarray

    def __post_init__(self):
        want = len(increasing_indices(self.space_dim, self.degree))
        if self.coeffs.shape[0] != want or self.coeffs.shape[-1] != self.coeffs.shape[-2]:
            raise ValueError("coefficient array shape does not match degree/space_dim")

    @property
    def matrix_dim(self):
        return self.coeffs.shape[-1]

    def wedge(self, other):
        """Wedge with matrix-valued composition, determinant convention."""
        if self.space_dim != other.space_dim:
            raise ValueError("space_dim mismatch")
        if self.degree + other.degree > self.space_dim:
            raise ValueError("wedge degree exceeds space dimension")
        left, right, sign = _wedge_table(self.space_dim, self.degree, other.degree)
        prod = np.matmul(self.coeffs[left], other.coeffs[right])
        prod *= sign.reshape((-1,) + (1,) * (prod.ndim - 1))
        rows = _rows_per_output((self.degree, other.degree))
        out = prod.reshape((-1, rows) + prod.shape[1:]).sum(axis=1)
        return EndForm(self.degree + other.degree, self.space_dim, out)

    def trace(self):
        return ScalarForm(self.degree, self.space_dim,
                          np.einsum("...ii->...", self.coeffs))

    def map_values(self, fn):
        return EndForm(self.degree, self.space_dim, fn(self.coeffs))

    def skew_g(self, g):
        """g-skew-symmetric part of every coefficient matrix."""
        return self.map_values(lambda c: skew_part_g(g, c))

    def contract(self, vector):
        """Interior product with a vector of the underlying m-space."""
        return _contract_form(self, vector, EndForm)

    def __call__(self, *vectors):
        """Fully alternating evaluation on degree-many vectors."""
        return _eval_form(self, vectors)

    def restrict(self, basis):
        """Pull back along the linear map sending e_a to basis[a] (rows)."""
        return _restrict_form(self, basis, EndForm)

    def __add__(self, other):
        return EndForm(self.degree, self.space_dim, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return EndForm(self.degree, self.space_dim, self.coeffs - other.coeffs)

    def scale(self, c):
        return EndForm(self.degree, self.space_dim, c * self.coeffs)


@dataclass(frozen=True)
class ScalarForm:
    """Alternating form with real coefficients; layout matches EndForm."""

    degree: int
    space_dim: int
    coeffs: np.ndarray

    def wedge(self, other):
        if self.space_dim != other.space_dim:
            raise ValueError("space_dim mismatch")
        if self.degree + other.degree > self.space_dim:
            raise ValueError("wedge degree exceeds space dimension")
        left, right, sign = _wedge_table(self.space_dim, self.degree, other.degree)
        prod = self.coeffs[left] * other.coeffs[right]
        prod *= sign.reshape((-1,) + (1,) * (prod.ndim - 1))
        rows = _rows_per_output((self.degree, other.degree))
        out = prod.reshape((-1, rows) + prod.shape[1:]).sum(axis=1)
        return ScalarForm(self.degree + other.degree, self.space_dim, out)

    def __call__(self, *vectors):
        return _eval_form(self, vectors)

    def contract(self, vector):
        return _contract_form(self, vector, ScalarForm)

    def restrict(self, basis):
        return _restrict_form(self, basis, ScalarForm)

    def __add__(self, other):
        return ScalarForm(self.degree, self.space_dim, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return ScalarForm(self.degree, self.space_dim, self.coeffs - other.coeffs)

    def scale(self, c):
        return ScalarForm(self.degree, self.space_dim, c * self.coeffs)

    @property
    def top(self):
        """Coefficient on the full multi-index (degree == space_dim only)."""
        if self.degree != self.space_dim:
            raise ValueError("top coefficient only defined at top degree")
        return self.coeffs[0]


def _contract_form(form, vector, cls):
    if form.degree == 0:
        raise ValueError("cannot contract a 0-form")
    m, p = form.space_dim, form.degree
    out_n = len(increasing_indices(m, p - 1))
    out = np.zeros((out_n,) + form.coeffs.shape[1:], dtype=form.coeffs.dtype)
    pos_out = index_position(m, p - 1)
    for a, K in enumerate(increasing_indices(m, p)):
        for slot, axis in enumerate(K):
            J = K[:slot] + K[slot + 1:]
            s = (-1.0) ** slot
            out[pos_out[J]] += s * vector[axis] * form.coeffs[a]
    return cls(p - 1, m, out)


def _eval_form(form, vectors):
    p = form.degree
    if len(vectors) != p:
        raise ValueError("need exactly degree-many vectors")
    if p == 0:
        return form.coeffs[0]
    V = np.stack([np.asarray(v, dtype=float) for v in vectors], axis=1)  # (m, p)
    K = np.asarray(increasing_indices(form.space_dim, p))  # (n_idx, p)
    minors = V[K]                       # (n_idx, p, p)
    weights = np.linalg.det(minors)     # (n_idx,)
    w = weights.reshape((-1,) + (1,) * (form.coeffs.ndim - 1))
    return (w * form.coeffs).sum(axis=0)


def _restrict_form(form, basis, cls):
    basis = np.asarray(basis, dtype=float)  # (m_new, m_old) rows = new basis vectors
    m_new = basis.shape[0]
    p = form.degree
    if p == 0:
        return cls(0, m_new, form.coeffs.copy())
    K_old = np.asarray(increasing_indices(form.space_dim, p))
    new_idx = increasing_indices(m_new, p)
    out = np.zeros((len(new_idx),) + form.coeffs.shape[1:], dtype=form.coeffs.dtype)
    for b, Kn in enumerate(new_idx):
        sub = basis[list(Kn)]               # (p, m_old)
        minors = sub[:, K_old]              # (p, n_old, p)
        dets = np.linalg.det(np.swapaxes(minors, 0, 1))  # (n_old,)
        w = dets.reshape((-1,) + (1,) * (form.coeffs.ndim - 1))
        out[b] = (w * form.coeffs).sum(axis=0)
    return cls(p, m_new, out)


def basis_one_form(m, axis, batch_shape=(), matrix=None):
    """dx^axis as a ScalarForm, or matrix ⊗ dx^axis as an EndForm."""
    if matrix is None:
        c = np.zeros((m,) + batch_shape)
        c[axis] = 1.0
        return ScalarForm(1, m, c)
    matrix = np.asarray(matrix, dtype=float)
    c = np.zeros((m,) + batch_shape + matrix.shape[-2:])
    c[axis] = matrix
    return EndForm(1, m, c)


# ---------------------------------------------------------------------------
# matrix helpers
# ---------------------------------------------------------------------------

def skew_part_g(g, A):
    """g-skew part: (1/2)(A - g^{-1} A^T g).  g may broadcast against A."""
    g = np.asarray(g, dtype=float)
    g_inv = np.linalg.inv(g)
    At = np.swapaxes(A, -1, -2)
    return 0.5 * (A - g_inv @ At @ g)


def sym_part_g(g, A):
    """g-symmetric part, the complement of skew_part_g."""
    return A - skew_part_g(g, A)


def pfaffian2(A, tol=1e-12):
    """Pfaffian of a skew 2x2 matrix: Pf([[0, a], [-a, 0]]) = a."""
    A = np.asarray(A, dtype=float)
    if A.shape[-2:] != (2, 2):
        raise ValueError("pfaffian2 handles 2x2 matrices only")
    dev = np.max(np.abs(A + np.swapaxes(A, -1, -2)))
    if dev > tol:
        raise ValueError(f"matrix is not skew-symmetric (deviation {dev:.3e})")
    return A[..., 0, 1]


def pfaffian2_g(g, E, tol=1e-9):
    """Pfaffian of a g-skew endomorphism, taken in an oriented g-orthonormal
    frame: Pf_g(E) = Pf(gE)/sqrt(det g).  Reduces to pfaffian2 for g = id."""
    g = np.asarray(g, dtype=float)
    B = g @ E
    dev = np.max(np.abs(B + np.swapaxes(B, -1, -2)))
    if dev > tol * max(1.0, np.max(np.abs(B))):
        raise ValueError(f"endomorphism is not g-skew (deviation {dev:.3e})")
    return B[..., 0, 1] / np.sqrt(np.linalg.det(g))


# ---------------------------------------------------------------------------
# invariant (Weil) polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeilPolynomial:
    """Linear combination of trace-monomial products, plus an optional 2x2
    Pfaffian term.  terms = ((coefficient, (part, part, ...)), ...) where the
    parts of each monomial sum to the degree."""

    name: str
    degree: int
    terms: tuple
    pfaffian: bool = False

    def __post_init__(self):
        for _, parts in self.terms:
            if sum(parts) != self.degree:
                raise ValueError("monomial parts must sum to the degree")

    def __call__(self, A):
        """Evaluate on a single matrix (batched)."""
        A = np.asarray(A, dtype=float)
        out = 0.0
        powers = _trace_powers(A, max((max(p) for _, p in self.terms), default=0))
        for c, parts in self.terms:
            term = c
            for p in parts:
                term = term * powers[p]
            out = out + term
        if self.pfaffian:
            out = out + pfaffian2(A)
        return out


def _trace_powers(A, kmax):
    """dict p -> tr(A^p) for p = 1..kmax, batched, with shared squarings."""
    traces = {}
    if kmax >= 1:
        traces[1] = np.einsum("...ii->...", A)
    if kmax >= 2:
        A2 = A @ A
        traces[2] = np.einsum("...ii->...", A2)
    if kmax >= 3:
        traces[3] = np.einsum("...ij,...ji->...", A2, A)
    if kmax >= 4:
        traces[4] = np.einsum("...ij,...ji->...", A2, A2)
    if kmax >= 5:
        raise NotImplementedError("trace powers above 4 are not needed")
    return traces


_PI = math.pi

_WEIL_TABLE = {
    "t2": (2, ((1.0, (2,)),), False),
    "t4": (4, ((1.0, (4,)),), False),
    "t2sq": (4, ((1.0, (2, 2)),), False),
    "p1": (2, ((-1.0 / (8.0 * _PI**2), (2,)),), False),
    "p2": (4, ((1.0 / (128.0 * _PI**4), (2, 2)),
               (-2.0 / (128.0 * _PI**4), (4,))), False),
    "pfaff2": (1, (), True),
}


def make_weil(name):
    """Invariant polynomials by name: p1, p2, t2, t4, t2sq, pfaff2."""
    try:
        degree, terms, pfaff = _WEIL_TABLE[name]
    except KeyError:
        raise ValueError(f"unknown invariant polynomial {name!r}") from None
    return WeilPolynomial(name, degree, terms, pfaff)


def polarize_eval(f, mats):
    """Symmetric multilinear (polarized) evaluation on degree-many matrices.

    Inclusion-exclusion over nonempty subsets:
        f_pol(A_1..A_k) = (1/k!) sum_S (-1)^(k-|S|) f(sum_{i in S} A_i),
    so f_pol(A, ..., A) = f(A) exactly for a degree-k polynomial.
    mats is a sequence of k arrays of matching shape (broadcast batches ok).
    """
    k = f.degree
    if len(mats) != k:
        raise ValueError(f"need exactly {k} matrices")
    mats = [np.asarray(A, dtype=float) for A in mats]
    d = mats[0].shape[-1]
    for A in mats:
        if A.shape[-2:] != (d, d):
            raise ValueError("matrix dimension mismatch")
    total = 0.0
    for mask in range(1, 1 << k):
        B = None
        bits = 0
        for i in range(k):
            if mask >> i & 1:
                bits += 1
                B = mats[i] if B is None else B + mats[i]
        sign = (-1.0) ** (k - bits)
        total = total + sign * f(B)
    return total / math.factorial(k)


def weil_eval_forms(f, forms):
    """Evaluate an invariant polynomial on End-valued forms.

    The result is the scalar form whose value on (sum of degrees) vectors is
    the blockwise alternation of the polarized matrix evaluation:
        coeff[K] = sum over ordered partitions (I_1..I_k) of K,
                   sign(partition) * f_pol(F_1[I_1], ..., F_k[I_k]).
    For f = t2 on decomposable 1-forms A ⊗ a, B ⊗ b this gives tr(AB) a∧b,
    matching the trace-of-wedge convention for matrix-valued forms.
    """
    k = f.degree
    if len(forms) != k:
        raise ValueError(f"need exactly {k} forms")
    m = forms[0].space_dim
    d = forms[0].matrix_dim
    for F in forms:
        if F.space_dim != m or F.matrix_dim != d:
            raise ValueError("forms must share space and matrix dimensions")
    sizes = tuple(F.degree for F in forms)
    q = sum(sizes)
    if q > m:
        raise ValueError("total degree exceeds space dimension")
    blocks, signs = _partition_table(m, sizes)
    gathered = [forms[t].coeffs[blocks[t]] for t in range(k)]
    vals = polarize_eval(f, gathered)
    vals = vals * signs.reshape((-1,) + (1,) * (vals.ndim - 1))
    rows = _rows_per_output(sizes)
    out = vals.reshape((-1, rows) + vals.shape[1:]).sum(axis=1)
    return ScalarForm(q, m, out)


def trace_chain_form(forms):
    """tr(F_1 ∧ F_2 ∧ ... ∧ F_r) with values composed in argument order."""
    acc = forms[0]
    for F in forms[1:]:
        acc = acc.wedge(F)
    return acc.trace()


def koszul_sign(order, degrees):
    """Sign picked up reordering graded symbols 0..k-1 into the given order."""
    sign = 1.0
    for a in range(len(order)):
        for b in range(a + 1, len(order)):
            if order[a] > order[b] and degrees[order[a]] % 2 and degrees[order[b]] % 2:
                sign = -sign
    return sign


def weil_eval_forms_chains(f, forms):
    """Same value as weil_eval_forms, via Koszul-signed trace chains:
        (1/k!) sum over slot orderings sigma of
            kappa(sigma) * prod_blocks tr(wedge of the assigned forms).
    Independent code path, used for cross-checking the partition route."""
    k = f.degree
    degrees = [F.degree for F in forms]
    m = forms[0].space_dim
    q = sum(degrees)
    out = None
    cache = {}

    def chain(idx_tuple):
        if idx_tuple not in cache:
            cache[idx_tuple] = trace_chain_form([forms[i] for i in idx_tuple])
        return cache[idx_tuple]

    seen = {}
    for order in itertools.permutations(range(k)):
        seen[order] = koszul_sign(order, degrees)
    total = None
    for order, kappa in seen.items():
        term = None
        for c, parts in f.terms:
            pos = 0
            factor = None
            for p in parts:
                block = order[pos:pos + p]
                tr = chain(tuple(block))
                factor = tr if factor is None else factor.wedge(tr)
                pos += p
            factor = factor.scale(c * kappa)
            term = factor if term is None else term + factor
        if f.pfaffian:
            raise NotImplementedError("chain route not defined for Pfaffian terms")
        total = term if total is None else total + term
    return total.scale(1.0 / math.factorial(k))
