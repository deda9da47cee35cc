"""Optimal equal-precision allocations from derived coefficients.

``allocate`` follows the eigen route: build the load vectors from the
coefficients and the budgets, extract the unique positive eigenpair, and
split the budgets along the eigenvector.  ``solve_T_direct`` is the
independent single-stage route that finds the common squared CV as the
root of the budget equation.  ``evaluate_precision`` recomputes the
per-subpopulation squared CV of any allocation from the variance formula,
and ``round_allocation`` produces frame-feasible integer sample sizes.
"""

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .eigen import (
    LoadVectors,
    build_matrix,
    condition_value_rank2,
    unique_positive_eigenpair,
)
from .errors import (
    BudgetTooLarge,
    InfeasibleCap,
    SchemeMismatch,
    ZeroCell,
)
from .population import SingleStagePopulation, TwoStagePopulation


class SchemeId(enum.Enum):
    SINGLE_STAGE_STRATIFIED = "single_stage_stratified"
    SINGLE_STAGE_SRSWOR = "single_stage_srswor"
    SINGLE_STAGE_NEYMAN_WITHIN = "single_stage_neyman_within"
    TWO_STAGE_SRSWOR = "two_stage_srswor"
    TWO_STAGE_FIXED_SSU = "two_stage_fixed_ssu"
    TWO_STAGE_HR = "two_stage_hr"
    TWO_STAGE_HR_FIXED_SSU = "two_stage_hr_fixed_ssu"

    @property
    def two_stage(self):
        return self.value.startswith("two_stage")


#: coefficient designs accepted per scheme
_SCHEME_DESIGNS = {
    SchemeId.SINGLE_STAGE_STRATIFIED: ("single_stage",),
    SchemeId.SINGLE_STAGE_SRSWOR: ("single_stage",),
    SchemeId.SINGLE_STAGE_NEYMAN_WITHIN: ("single_stage",),
    SchemeId.TWO_STAGE_SRSWOR: ("two_stage_srswor",),
    SchemeId.TWO_STAGE_FIXED_SSU: ("two_stage_fixed_ssu",),
    SchemeId.TWO_STAGE_HR: ("two_stage_hr",),
    SchemeId.TWO_STAGE_HR_FIXED_SSU: ("two_stage_hr_fixed_ssu",),
}


@dataclass(frozen=True)
class Budgets:
    """First-stage budget x (n or m) and, for two-stage schemes, the
    expected second-stage budget z (n)."""

    x: float
    z: float | None = None

    def __post_init__(self):
        if not self.x > 0:
            raise ValueError(f"first-stage budget must be positive, got {self.x}")
        if self.z is not None and not self.z > 0:
            raise ValueError(f"second-stage budget must be positive, got {self.z}")


@dataclass(frozen=True)
class AllocationResult:
    """Real-valued (and optionally rounded) equal-precision allocation.

    ``first_stage[j][h]`` is the stratum sample size; ``second_stage[j][h]``
    holds the per-cell second-stage sizes (empty for single-stage schemes).
    ``value`` is the achieved common squared CV, equal to the solver
    eigenvalue; ``per_subpop_T`` re-evaluates it per subpopulation from the
    variance formula (on the priority-reduced problem, so all entries match
    ``value``).  Rounded fields are filled by :func:`round_allocation`.
    """

    scheme: SchemeId
    budgets: Budgets
    first_stage: tuple
    second_stage: tuple
    value: float
    vector: np.ndarray
    per_subpop_T: np.ndarray
    priority: np.ndarray
    condition_value: float
    rounded_first: tuple | None = None
    rounded_second: tuple | None = None
    per_subpop_T_rounded: np.ndarray | None = None
    rounding_degradation: float | None = None
    capacity_adjusted: bool = False

    def subpop_T_original(self):
        """Achieved squared CVs of the unweighted problem, kappa_j * value."""
        return self.priority * self.per_subpop_T


def load_vectors_from(coeffs, budgets):
    """Assemble the eigenproblem load vectors for given budgets."""
    a = np.array(
        [math.fsum(math.sqrt(v) for v in row) for row in coeffs.first_stage]
    ) / math.sqrt(budgets.x)
    if coeffs.has_second_stage():
        if budgets.z is None:
            raise ValueError("two-stage coefficients need a second-stage budget")
        b = np.array(
            [
                math.fsum(
                    math.sqrt(w * v)
                    for cells, weights in zip(coeffs.second_stage[j], coeffs.size_weights[j])
                    for v, w in zip(cells, weights)
                )
                for j in range(coeffs.n_subpopulations)
            ]
        ) / math.sqrt(budgets.z)
    else:
        b = np.zeros(coeffs.n_subpopulations)
    return LoadVectors(first_stage=a, second_stage=b, fpc_mass=coeffs.fixed_term.copy())


def _check_scheme(coeffs, scheme, budgets):
    if scheme not in _SCHEME_DESIGNS:
        raise SchemeMismatch(f"unknown scheme {scheme!r}")
    if coeffs.design not in _SCHEME_DESIGNS[scheme]:
        raise SchemeMismatch(
            f"coefficients were derived for design {coeffs.design!r}, "
            f"scheme {scheme.name} needs one of {_SCHEME_DESIGNS[scheme]}"
        )
    if scheme is SchemeId.SINGLE_STAGE_SRSWOR and any(
        len(row) != 1 for row in coeffs.first_stage
    ):
        raise SchemeMismatch("SINGLE_STAGE_SRSWOR needs exactly one stratum per subpopulation")
    if scheme.two_stage and budgets.z is None:
        raise SchemeMismatch(f"{scheme.name} needs both budgets")
    if not scheme.two_stage and budgets.z is not None:
        raise SchemeMismatch(f"{scheme.name} takes a single budget")


def allocate(coeffs, scheme, budgets, force=False):
    """Optimal equal-precision allocation via the positive eigenpair.

    The first-stage budget splits as x v_j sqrt(A_jh) over strata; each
    second-stage cell receives (z / x_jh) v_j sqrt(B / w) over the global
    weighted-load denominator.  The achieved common squared CV equals the
    eigenvalue.
    """
    _check_scheme(coeffs, scheme, budgets)
    vectors = load_vectors_from(coeffs, budgets)
    pair = unique_positive_eigenpair(build_matrix(vectors), force=force)
    v = pair.vector
    cond = condition_value_rank2(
        vectors.first_stage, vectors.second_stage, vectors.fpc_mass
    )

    sqrt_first = [np.sqrt(row) for row in coeffs.first_stage]
    denom_first = math.fsum(
        v[j] * math.fsum(row) for j, row in enumerate(sqrt_first)
    )
    first = tuple(
        budgets.x * v[j] * sqrt_first[j] / denom_first
        for j in range(coeffs.n_subpopulations)
    )

    second = tuple(tuple() for _ in range(coeffs.n_subpopulations))
    if coeffs.has_second_stage():
        denom_second = math.fsum(
            v[j] * math.fsum(
                math.sqrt(w * b)
                for cells, weights in zip(coeffs.second_stage[j], coeffs.size_weights[j])
                for b, w in zip(cells, weights)
            )
            for j in range(coeffs.n_subpopulations)
        )
        second = tuple(
            tuple(
                budgets.z
                / first[j][h]
                * v[j]
                * np.sqrt(cells / weights)
                / denom_second
                for h, (cells, weights) in enumerate(
                    zip(coeffs.second_stage[j], coeffs.size_weights[j])
                )
            )
            for j in range(coeffs.n_subpopulations)
        )

    per_t = evaluate_precision(coeffs, scheme, (first, second))
    return AllocationResult(
        scheme=scheme,
        budgets=budgets,
        first_stage=first,
        second_stage=second,
        value=pair.value,
        vector=v,
        per_subpop_T=per_t,
        priority=coeffs.priority.copy(),
        condition_value=cond,
    )


def budget_equation_rhs(coeffs, t_value):
    """Total sample size implied by a common squared CV in single-stage
    sampling: sum over subpopulations of (sum sqrt(A))^2 / (T + c)."""
    return math.fsum(
        math.fsum(math.sqrt(v) for v in coeffs.first_stage[j]) ** 2
        / (t_value + coeffs.fixed_term[j])
        for j in range(coeffs.n_subpopulations)
    )


def solve_T_direct(coeffs, scheme, n):
    """Single-stage allocation by root finding on the budget equation.

    The equation's right side is strictly decreasing in T with supremum
    sum (sum sqrt(A))^2 / c at T -> 0+, so a bracketed bisection (secant
    polish once tight) cannot fail whenever n is below that supremum;
    otherwise no positive solution exists and BudgetTooLarge is raised.

    Returns (T, first_stage allocation) with per-stratum sizes
    n_j sqrt(A_jh) / sum_g sqrt(A_jg).
    """
    if scheme not in (SchemeId.SINGLE_STAGE_SRSWOR, SchemeId.SINGLE_STAGE_NEYMAN_WITHIN):
        raise SchemeMismatch(f"direct solver does not cover {scheme!r}")
    _check_scheme(coeffs, scheme, Budgets(x=n))
    loads = [
        math.fsum(math.sqrt(v) for v in row) ** 2 for row in coeffs.first_stage
    ]
    supremum = math.fsum(
        loads[j] / coeffs.fixed_term[j] for j in range(len(loads))
    )
    if not n < supremum:
        raise BudgetTooLarge(
            f"budget {n} is not below the equation supremum {supremum:.6g}"
        )

    def residual(t):
        return budget_equation_rhs(coeffs, t) - n

    lo, hi = 0.0, math.fsum(loads) / n  # rhs(hi) <= n since every c_j > 0
    f_lo, f_hi = supremum - n, residual(hi)
    while hi - lo > 1e-3 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        f_mid = residual(mid)
        if f_mid > 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    t_value = 0.5 * (lo + hi)
    for _ in range(200):
        if f_hi != f_lo:
            t_value = hi - f_hi * (hi - lo) / (f_hi - f_lo)
        if not lo < t_value < hi:
            t_value = 0.5 * (lo + hi)
        f_t = residual(t_value)
        if f_t > 0:
            lo, f_lo = t_value, f_t
        else:
            hi, f_hi = t_value, f_t
        if abs(f_t) <= 1e-12 * n or hi - lo <= 1e-12 * max(1.0, t_value):
            break

    per_sub = [
        loads[j] / (t_value + coeffs.fixed_term[j]) for j in range(len(loads))
    ]
    first = tuple(
        per_sub[j]
        * np.sqrt(coeffs.first_stage[j])
        / math.fsum(math.sqrt(v) for v in coeffs.first_stage[j])
        for j in range(len(loads))
    )
    return t_value, first


def proportional_allocation(coeffs, pop, scheme, budgets):
    """Size-proportional reference allocation meeting the same budgets.

    First-stage sizes follow the frame sizes (unit counts for single-stage
    strata, PSU counts for two-stage strata); second-stage cells share one
    uniform sampling fraction chosen so the expected second-stage budget is
    met.  Not an equal-precision allocation: ``value`` records the worst
    per-subpopulation squared CV and the vector is a placeholder.
    """
    _check_scheme(coeffs, scheme, budgets)
    if scheme.two_stage:
        counts = [
            [st.psu_count for st in sub.psu_strata] for sub in pop.subpopulations
        ]
    else:
        counts = [
            [st.units for st in sub.strata] for sub in pop.subpopulations
        ]
    total = float(sum(sum(row) for row in counts))
    first = tuple(
        budgets.x * np.asarray(row, dtype=np.float64) / total for row in counts
    )

    second = tuple(tuple() for _ in counts)
    if scheme.two_stage:
        cell_units = []
        for j, sub in enumerate(pop.subpopulations):
            row = []
            for h, st in enumerate(sub.psu_strata):
                units = []
                for label in coeffs.cell_labels[j][h]:
                    if label is None:
                        units.append(
                            float(np.mean([p.ssu_strata[0].units for p in st.psus]))
                        )
                    else:
                        i, g = label
                        units.append(float(st.psus[i].ssu_strata[g].units))
                row.append(np.asarray(units))
            cell_units.append(row)
        denom = math.fsum(
            float(first[j][h])
            * float(np.dot(coeffs.size_weights[j][h], cell_units[j][h]))
            for j in range(len(counts))
            for h in range(len(counts[j]))
        )
        fraction = budgets.z / denom
        second = tuple(
            tuple(fraction * cell_units[j][h] for h in range(len(counts[j])))
            for j in range(len(counts))
        )

    per_t = evaluate_precision(coeffs, scheme, (first, second))
    return AllocationResult(
        scheme=scheme,
        budgets=budgets,
        first_stage=first,
        second_stage=second,
        value=float(np.max(per_t)),
        vector=np.full(len(counts), 1.0 / math.sqrt(len(counts))),
        per_subpop_T=per_t,
        priority=coeffs.priority.copy(),
        condition_value=float("nan"),
    )


def _alloc_arrays(allocation):
    if isinstance(allocation, AllocationResult):
        return allocation.first_stage, allocation.second_stage
    first, second = allocation
    return first, second


def evaluate_precision(coeffs, scheme, allocation):
    """Per-subpopulation squared CV of an allocation.

    Applies the variance formula sum_h (A_jh + sum_i B_jhi / z_jhi) / x_jh
    minus the fixed mass.  Cells with zero sample size are only tolerated
    when their load is zero; otherwise ZeroCell is raised.
    """
    first, second = _alloc_arrays(allocation)
    out = np.empty(coeffs.n_subpopulations)
    for j in range(coeffs.n_subpopulations):
        acc = []
        for h, a_load in enumerate(coeffs.first_stage[j]):
            x_cell = float(first[j][h])
            inner = a_load
            if coeffs.has_second_stage():
                b_cells = coeffs.second_stage[j][h]
                z_cells = np.asarray(second[j][h], dtype=np.float64)
                for b_load, z_val in zip(b_cells, z_cells):
                    if z_val <= 0:
                        if b_load == 0:
                            continue
                        raise ZeroCell(
                            f"subpop {j} / stratum {h}: zero second-stage cell with positive load"
                        )
                    inner = inner + b_load / z_val
            if x_cell <= 0:
                if inner == 0:
                    continue
                raise ZeroCell(f"subpop {j} / stratum {h}: zero sample with positive load")
            acc.append(inner / x_cell)
        out[j] = math.fsum(acc) - coeffs.fixed_term[j]
    return out


def _bounded_largest_remainder(values, target, lower, upper):
    """Integer apportionment: floor, then hand out remainders largest first,
    respecting per-cell bounds.  Deterministic, ties broken by cell index."""
    values = np.asarray(values, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.int64)
    upper = np.asarray(upper, dtype=np.int64)
    if int(lower.sum()) > target or int(upper.sum()) < target:
        raise InfeasibleCap(
            f"target {target} outside feasible range [{lower.sum()}, {upper.sum()}]"
        )
    out = np.clip(np.floor(values).astype(np.int64), lower, upper)
    diff = target - int(out.sum())
    if diff > 0:
        # seats by descending fractional remainder; a cell may take several
        # rounds when others hit their caps
        order = np.argsort(-(values - np.floor(values)), kind="stable")
        while diff > 0:
            progress = False
            for idx in order:
                if diff == 0:
                    break
                if out[idx] < upper[idx]:
                    out[idx] += 1
                    diff -= 1
                    progress = True
            if not progress:
                raise InfeasibleCap("capacity caps below the integer budget")
    elif diff < 0:
        order = np.argsort(values - np.floor(values), kind="stable")
        while diff < 0:
            progress = False
            for idx in order:
                if diff == 0:
                    break
                if out[idx] > lower[idx]:
                    out[idx] -= 1
                    diff += 1
                    progress = True
            if not progress:
                raise InfeasibleCap("lower bounds above the integer budget")
    return out


def _first_stage_caps(frame, result):
    caps = []
    if isinstance(frame, SingleStagePopulation):
        for sub in frame.subpopulations:
            caps.append([st.units for st in sub.strata])
    elif isinstance(frame, TwoStagePopulation):
        for sub in frame.subpopulations:
            caps.append([st.psu_count for st in sub.psu_strata])
    else:
        for row in result.first_stage:
            caps.append([np.iinfo(np.int64).max] * len(row))
    return caps


def _cell_caps(frame, j, h, n_cells, labels):
    if not isinstance(frame, TwoStagePopulation):
        return [np.iinfo(np.int64).max] * n_cells
    stratum = frame.subpopulations[j].psu_strata[h]
    caps = []
    for label in labels:
        if label is None:
            # one shared size per PSU; it must fit the smallest PSU
            caps.append(min(c.units for p in stratum.psus for c in p.ssu_strata))
        else:
            i, g = label
            caps.append(stratum.psus[i].ssu_strata[g].units)
    return caps


def round_allocation(result, frame, coeffs=None, observe_zero_cells=False):
    """Integer sample sizes for a real-valued allocation.

    First-stage values are apportioned to sum exactly to the rounded
    budget, each positive cell at least 1 and at most its frame capacity
    (surplus from capped cells flows to the others, flagged via
    ``capacity_adjusted``).  Second-stage cells are rescaled to the rounded
    first stage so each stratum keeps its expected second-stage budget,
    then apportioned per stratum with a weighted repair pass holding the
    stratum's expected size within one unit.  Cells allocated exactly zero
    stay zero unless ``observe_zero_cells`` forces a minimum of one.

    With ``coeffs`` the rounded allocation is re-evaluated and the worst
    relative precision degradation is reported; without them the repair
    pass falls back to unit weights, so pass coefficients for weighted
    (pps) designs.
    """
    shapes = [len(row) for row in result.first_stage]
    flat_first = np.concatenate([np.asarray(row) for row in result.first_stage])
    caps_nested = _first_stage_caps(frame, result)
    flat_caps = np.concatenate([np.asarray(c, dtype=np.int64) for c in caps_nested])
    lower = np.where(flat_first > 0, 1, 1 if observe_zero_cells else 0).astype(np.int64)
    lower = np.minimum(lower, flat_caps)
    target = int(round(result.budgets.x))
    rounded_flat = _bounded_largest_remainder(flat_first, target, lower, flat_caps)
    capacity_adjusted = bool(np.any(np.ceil(flat_first) > flat_caps))

    rounded_first = []
    pos = 0
    for n_strata in shapes:
        rounded_first.append(rounded_flat[pos : pos + n_strata].copy())
        pos += n_strata
    rounded_first = tuple(rounded_first)

    rounded_second = None
    if result.scheme.two_stage:
        rounded_second = []
        for j in range(len(result.second_stage)):
            row = []
            for h, z_cells in enumerate(result.second_stage[j]):
                z_cells = np.asarray(z_cells, dtype=np.float64)
                x_real = float(result.first_stage[j][h])
                x_int = int(rounded_first[j][h])
                labels = None
                weights = np.ones(len(z_cells))
                if coeffs is not None:
                    labels = coeffs.cell_labels[j][h]
                    weights = np.asarray(coeffs.size_weights[j][h], dtype=np.float64)
                if x_int == 0:
                    row.append(np.zeros(len(z_cells), dtype=np.int64))
                    continue
                # keep this stratum's expected second-stage budget while the
                # first stage moves to an integer
                scaled = z_cells * (x_real / x_int)
                caps = np.asarray(
                    _cell_caps(frame, j, h, len(z_cells), labels or [None] * len(z_cells)),
                    dtype=np.int64,
                )
                lb = np.where(scaled > 0, 1, 1 if observe_zero_cells else 0).astype(np.int64)
                lb = np.minimum(lb, caps)
                if np.any(np.ceil(scaled) > caps):
                    capacity_adjusted = True
                cell_target = int(round(float(scaled.sum())))
                cell_target = min(max(cell_target, int(lb.sum())), int(caps.sum()))
                ints = _bounded_largest_remainder(scaled, cell_target, lb, caps)
                # repair pass: drive the stratum's expected second-stage size
                # toward its target as far as single-cell steps allow (the
                # final residual is below half the smallest step x_int * w,
                # hence within one unit whenever weights permit)
                target_size = x_real * float(np.dot(weights, z_cells))
                for _ in range(len(z_cells) * 8 + 16):
                    resid = x_int * float(np.dot(weights, ints)) - target_size
                    if abs(resid) <= 1e-9:
                        break
                    effects = x_int * weights
                    if resid > 0:
                        scores = np.where(ints > lb, np.abs(resid - effects), np.inf)
                    else:
                        scores = np.where(ints < caps, np.abs(resid + effects), np.inf)
                    idx = int(np.argmin(scores))
                    if not np.isfinite(scores[idx]) or scores[idx] >= abs(resid):
                        break
                    ints[idx] += -1 if resid > 0 else 1
                row.append(ints)
            rounded_second.append(tuple(row))
        rounded_second = tuple(rounded_second)

    per_rounded = None
    degradation = None
    if coeffs is not None:
        per_rounded = evaluate_precision(
            coeffs, result.scheme, (rounded_first, rounded_second or result.second_stage)
        )
        degradation = float(np.max(np.abs(per_rounded - result.value)) / result.value)

    return replace(
        result,
        rounded_first=rounded_first,
        rounded_second=rounded_second,
        per_subpop_T_rounded=per_rounded,
        rounding_degradation=degradation,
        capacity_adjusted=capacity_adjusted,
    )
