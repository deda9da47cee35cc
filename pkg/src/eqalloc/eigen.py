"""Positive eigenpair of a rank-at-most-two perturbation of a diagonal matrix.

The allocation engine reduces every design to the matrix

    D = a a^T + b b^T - diag(c)

built from a first-stage load vector ``a``, a second-stage load vector ``b``
(zero for single-stage designs) and a strictly positive correction-mass
vector ``c``, one entry per subpopulation.  Under the solvability condition
checked by :func:`check_condition_rank2`, D has exactly one positive
eigenvalue; its eigenvector has all entries of one sign and carries the
optimal budget split across subpopulations.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConditionNotSatisfied,
    DimensionMismatch,
    MultiplePositiveEigenvalues,
    NonConvergence,
    NonpositiveMass,
    NoPositiveEigenvalue,
)

#: Absolute tolerance on the Rayleigh residual of a returned eigenpair.
TOL_EIGEN = 1e-12


@dataclass(frozen=True)
class LoadVectors:
    """The (a, b, c) triple defining the perturbed matrix.

    first_stage:  per-subpopulation first-stage load, nonnegative, not all zero
    second_stage: second-stage load, nonnegative (all-zero for rank-1 problems)
    fpc_mass:     finite-population correction mass, strictly positive
    """

    first_stage: np.ndarray
    second_stage: np.ndarray
    fpc_mass: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.first_stage, dtype=np.float64)
        b = np.asarray(self.second_stage, dtype=np.float64)
        c = np.asarray(self.fpc_mass, dtype=np.float64)
        object.__setattr__(self, "first_stage", a)
        object.__setattr__(self, "second_stage", b)
        object.__setattr__(self, "fpc_mass", c)
        if not (a.ndim == b.ndim == c.ndim == 1) or not (len(a) == len(b) == len(c)):
            raise DimensionMismatch(
                f"load vectors must share one length, got {len(a)}, {len(b)}, {len(c)}"
            )
        if len(c) < 1:
            raise DimensionMismatch("empty load vectors")
        if not np.all(c > 0):
            raise NonpositiveMass(f"fpc mass must be positive, got {c}")
        if np.any(a < 0) or np.any(b < 0):
            raise ValueError("load vectors must be nonnegative")
        if not np.any(a > 0):
            raise ValueError("first-stage load must have a positive entry")

    @property
    def dim(self):
        return len(self.fpc_mass)


@dataclass(frozen=True)
class PerturbedMatrix:
    """Symmetric matrix a a^T + b b^T - diag(c) with its source vectors."""

    entries: np.ndarray
    source: LoadVectors

    @property
    def dim(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class EigenPair:
    """The unique positive eigenvalue and its one-sign unit eigenvector."""

    value: float
    vector: np.ndarray


def build_matrix(vectors):
    """Assemble the perturbed matrix from its load vectors.

    Off-diagonal entries are a_i a_j + b_i b_j, the diagonal additionally
    subtracts c_i.  The result is symmetric to representational equality.
    """
    a = vectors.first_stage
    b = vectors.second_stage
    c = vectors.fpc_mass
    entries = np.outer(a, a) + np.outer(b, b)
    entries[np.diag_indices_from(entries)] = a * a + b * b - c
    return PerturbedMatrix(entries=entries, source=vectors)


def condition_value_rank1(a, c):
    """Compensated sum of a_i^2 / c_i; the condition holds when it exceeds 1."""
    a = np.asarray(a, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    return math.fsum(ai * ai / ci for ai, ci in zip(a, c))


def check_condition_rank1(a, c):
    """Solvability test for rank-1 problems (second-stage load all zero)."""
    return condition_value_rank1(a, c) > 1.0


def condition_value_rank2(a, b, c):
    """Value of the rank-2 solvability expression.

    Sum of (a_i^2 + b_i^2)/c_i minus the sum over ordered pairs i != j of
    (a_i b_j - a_j b_i)^2 / (c_i c_j).  Reduces to the rank-1 value when
    b is identically zero.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    terms = [(a[i] * a[i] + b[i] * b[i]) / c[i] for i in range(len(c))]
    for i in range(len(c)):
        for j in range(len(c)):
            if i == j:
                continue
            cross = a[i] * b[j] - a[j] * b[i]
            if cross != 0.0:
                terms.append(-(cross * cross) / (c[i] * c[j]))
    return math.fsum(terms)


def check_condition_rank2(a, b, c):
    """Solvability test guaranteeing a unique positive eigenvalue."""
    return condition_value_rank2(a, b, c) > 1.0


def jacobi_eigh(matrix, tol=1e-14, max_sweeps=100):
    """Full symmetric eigendecomposition by cyclic Jacobi rotations.

    Returns eigenvalues ascending and the matching eigenvector columns.
    Used as the in-package full-spectrum path for force certification and
    as the fallback when power iteration stalls.
    """
    a = np.array(matrix, dtype=np.float64)
    d = a.shape[0]
    vecs = np.eye(d)
    if d == 1:
        return a.diagonal().copy(), vecs
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(d), vecs
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0)
        if off <= tol * norm:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                cs = 1.0 / math.hypot(1.0, t)
                sn = t * cs
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = cs * rp - sn * rq
                a[q, :] = sn * rp + cs * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = cs * cp - sn * cq
                a[:, q] = sn * cp + cs * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = vecs[:, p].copy()
                vq = vecs[:, q].copy()
                vecs[:, p] = cs * vp - sn * vq
                vecs[:, q] = sn * vp + cs * vq
    else:
        raise NonConvergence("Jacobi sweeps exhausted without reducing off-diagonal mass")
    vals = a.diagonal().copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]


def _sign_fix(vector):
    # orient so the dominant entry (and, for valid problems, every entry)
    # is nonnegative, then renormalize
    v = vector / np.linalg.norm(vector)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v


def _polish(scaled, value, vector):
    """Inverse-iteration refinement down to machine-level residual.

    The allocation identity divides by the eigenvector, so when the
    eigenvalue is small against the correction mass the pair needs more
    accuracy than the iteration tolerance guarantees.
    """
    d = len(vector)
    best_v, best_val = vector, value
    best_res = float(np.max(np.abs(scaled @ vector - value * vector)))
    eye = np.eye(d)
    # a few-ulp shift offset keeps the system factorable when the shift
    # hits the eigenvalue exactly; amplification along the eigenvector is
    # still enormous
    tiny = 64.0 * np.finfo(np.float64).eps * max(1.0, float(np.abs(scaled).max()))
    for _ in range(3):
        w = None
        for offset in (0.0, tiny, 64.0 * tiny):
            try:
                w = np.linalg.solve(scaled - (best_val + offset) * eye, best_v)
                break
            except np.linalg.LinAlgError:
                continue
        if w is None:
            break
        norm = float(np.linalg.norm(w))
        if not np.isfinite(norm) or norm == 0.0:
            break
        w = _sign_fix(w / norm)
        val = float(w @ (scaled @ w))
        res = float(np.max(np.abs(scaled @ w - val * w)))
        if res < best_res:
            best_v, best_val, best_res = w, val, res
        else:
            break
    return best_val, best_v


def _certified_pair(scaled, scale, tol):
    vals, vecs = jacobi_eigh(scaled)
    positive = np.nonzero(vals > tol)[0]
    if len(positive) == 0:
        raise NoPositiveEigenvalue(
            f"largest eigenvalue is {vals[-1] * scale:.6g}, not positive"
        )
    if len(positive) > 1:
        raise MultiplePositiveEigenvalues(
            "positive eigenvalues found: "
            + ", ".join(f"{vals[i] * scale:.6g}" for i in positive)
        )
    idx = positive[0]
    value, vector = _polish(scaled, float(vals[idx]), _sign_fix(vecs[:, idx]))
    return EigenPair(value=value * scale, vector=vector)


def unique_positive_eigenpair(matrix, force=False, tol=TOL_EIGEN):
    """Extract the unique positive eigenvalue and its one-sign eigenvector.

    The matrix is scaled by max(c), shifted by 2 max(c) so all entries are
    positive, and iterated from the all-ones direction; the shift makes the
    target eigenvalue dominant, so power iteration converges to it.  When
    the gap stalls the full Jacobi decomposition takes over.

    Without ``force`` the rank-2 solvability condition must hold
    (:class:`ConditionNotSatisfied` otherwise).  With ``force`` the full
    spectrum is computed and uniqueness of the positive eigenvalue is
    certified, raising :class:`NoPositiveEigenvalue` or
    :class:`MultiplePositiveEigenvalues` as found.
    """
    src = matrix.source
    d = matrix.dim
    scale = float(np.max(src.fpc_mass))
    scaled = matrix.entries / scale

    if d == 1:
        value = float(matrix.entries[0, 0])
        if value <= 0:
            raise NoPositiveEigenvalue(f"1x1 matrix entry {value:.6g} is not positive")
        return EigenPair(value=value, vector=np.array([1.0]))

    if force:
        return _certified_pair(scaled, scale, tol)

    if not check_condition_rank2(src.first_stage, src.second_stage, src.fpc_mass):
        raise ConditionNotSatisfied(
            "solvability condition value is not above 1; "
            "pass force=True to certify the spectrum explicitly"
        )

    shift = 2.0  # 2 * max(c) on the scaled matrix; makes every entry positive
    shifted = scaled + shift * np.eye(d)
    v = np.full(d, 1.0 / math.sqrt(d))
    cap = 10 * d * math.ceil(-math.log10(tol))
    pair = None
    for _ in range(cap):
        u = shifted @ v
        v = u / np.linalg.norm(u)
        w = scaled @ v
        rq = float(v @ w)
        residual = float(np.max(np.abs(w - rq * v))) * scale
        if residual <= tol * max(1.0, abs(rq) * scale):
            value, vector = _polish(scaled, rq, _sign_fix(v))
            pair = EigenPair(value=value * scale, vector=vector)
            break
    if pair is None:
        # eigengap too small for power iteration; certified path is exact
        pair = _certified_pair(scaled, scale, tol)
    if pair.value <= 0:
        raise NoPositiveEigenvalue(f"converged to nonpositive value {pair.value:.6g}")
    return pair
