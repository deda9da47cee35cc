"""Hierarchical population summaries and derivation of allocation coefficients.

Frames come in two shapes: a single-stage population (subpopulations split
into strata with size and standard deviation) and a two-stage population
(subpopulations split into PSU strata, PSUs, and SSU strata).  The derive_*
functions turn a frame into the coefficient families consumed by the
allocation module: a per-stratum first-stage variance load, per-cell
second-stage loads with expected-size weights, and a per-subpopulation
fixed variance mass.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MissingSizeMeasure,
    MultipleSsuStrata,
    NonpositiveGamma,
    ValidationError,
    ZeroTotal,
)

DESIGNS = (
    "single_stage",
    "two_stage_srswor",
    "two_stage_fixed_ssu",
    "two_stage_hr",
    "two_stage_hr_fixed_ssu",
)


# ---------------------------------------------------------------------------
# single-stage frame


@dataclass(frozen=True)
class Stratum:
    units: int  # stratum size N
    sd: float  # population standard deviation S


@dataclass(frozen=True)
class Subpopulation:
    total: float  # subpopulation total t of the study variable
    strata: tuple


@dataclass(frozen=True)
class SingleStagePopulation:
    subpopulations: tuple

    @property
    def n_subpopulations(self):
        return len(self.subpopulations)

    def validate(self):
        problems = list(_single_stage_violations(self))
        if problems:
            raise ValidationError(problems)
        return self


def _single_stage_violations(pop):
    if not pop.subpopulations:
        yield "no subpopulations"
    for j, sub in enumerate(pop.subpopulations):
        if not sub.strata:
            yield f"subpop {j}: no strata"
        if not sub.total > 0:
            yield f"subpop {j}: total must be positive, got {sub.total}"
        any_var = False
        for h, st in enumerate(sub.strata):
            if st.units < 1:
                yield f"subpop {j} / stratum {h}: units must be >= 1"
            if st.sd < 0:
                yield f"subpop {j} / stratum {h}: sd must be nonnegative"
            if st.sd > 0:
                any_var = True
                if st.units < 2:
                    yield f"subpop {j} / stratum {h}: units must be >= 2 when sd > 0"
        if not any_var:
            yield f"subpop {j}: at least one stratum needs sd > 0"


# ---------------------------------------------------------------------------
# two-stage frame


@dataclass(frozen=True)
class SsuStratum:
    units: int  # SSU count N
    var: float  # population variance S2


@dataclass(frozen=True)
class Psu:
    total: float  # PSU total of the study variable
    ssu_strata: tuple
    size_raw: float | None = None  # raw size measure for pps designs


@dataclass(frozen=True)
class PsuStratum:
    psus: tuple
    between_var: float | None = None  # stored D2; recomputed from totals when absent

    @property
    def psu_count(self):
        return len(self.psus)

    def psu_totals(self):
        return np.array([p.total for p in self.psus], dtype=np.float64)

    def size_shares(self):
        """Normalized size measures, summing to one over the stratum."""
        raw = [p.size_raw for p in self.psus]
        if any(r is None for r in raw):
            raise MissingSizeMeasure("PSU size measures are absent in this stratum")
        raw = np.array(raw, dtype=np.float64)
        return raw / raw.sum()

    def between_var_srswor(self):
        """Variance of PSU totals with the count-minus-one divisor."""
        if self.between_var is not None:
            return self.between_var
        t = self.psu_totals()
        if len(t) < 2:
            return 0.0
        return float(np.sum((t - t.mean()) ** 2) / (len(t) - 1))


@dataclass(frozen=True)
class TwoStageSubpopulation:
    psu_strata: tuple

    @property
    def total(self):
        return float(
            math.fsum(p.total for st in self.psu_strata for p in st.psus)
        )


@dataclass(frozen=True)
class TwoStagePopulation:
    subpopulations: tuple

    @property
    def n_subpopulations(self):
        return len(self.subpopulations)

    def validate(self):
        problems = list(_two_stage_violations(self))
        if problems:
            raise ValidationError(problems)
        return self


def _two_stage_violations(pop):
    if not pop.subpopulations:
        yield "no subpopulations"
    for j, sub in enumerate(pop.subpopulations):
        if not sub.psu_strata:
            yield f"subpop {j}: no PSU strata"
        for h, st in enumerate(sub.psu_strata):
            where = f"subpop {j} / psu_stratum {h}"
            if not st.psus:
                yield f"{where}: no PSUs"
                continue
            sizes = [p.size_raw for p in st.psus]
            have_sizes = [s for s in sizes if s is not None]
            if have_sizes and len(have_sizes) != len(sizes):
                yield f"{where}: size measures present on some PSUs but not all"
            if have_sizes and len(have_sizes) == len(sizes):
                share_sum = math.fsum(s / math.fsum(have_sizes) for s in have_sizes)
                if any(s <= 0 for s in have_sizes):
                    yield f"{where}: size measures must be positive"
                elif abs(share_sum - 1.0) > 1e-10:
                    yield f"{where}: size shares sum to {share_sum!r}, expected 1"
            if st.between_var is not None and st.psu_count >= 2:
                recomputed = PsuStratum(psus=st.psus).between_var_srswor()
                ref = max(abs(recomputed), abs(st.between_var), 1e-300)
                if abs(recomputed - st.between_var) > 1e-8 * ref:
                    yield (
                        f"{where}: stored between-PSU variance {st.between_var!r} "
                        f"differs from value recomputed from totals {recomputed!r}"
                    )
            for i, psu in enumerate(st.psus):
                if not psu.ssu_strata:
                    yield f"{where} / psu {i}: no SSU strata"
                for g, cell in enumerate(psu.ssu_strata):
                    spot = f"{where} / psu {i} / ssu_stratum {g}"
                    if cell.units < 1:
                        yield f"{spot}: units must be >= 1"
                    if cell.var < 0:
                        yield f"{spot}: variance must be nonnegative"
                    if cell.var > 0 and cell.units < 2:
                        yield f"{spot}: units must be >= 2 when variance > 0"


def size_shares_explicit(shares):
    """Validate explicit size shares: positive, summing to one."""
    shares = np.asarray(shares, dtype=np.float64)
    if np.any(shares <= 0):
        raise ValidationError(["size shares must be positive"])
    if abs(math.fsum(shares) - 1.0) > 1e-10:
        raise ValidationError([f"size shares sum to {math.fsum(shares)!r}, expected 1"])
    return shares


# ---------------------------------------------------------------------------
# derived coefficients


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficient families feeding the eigen solver and the allocation rules.

    first_stage[j][h] is the stratum's first-stage variance load;
    second_stage[j][h] and size_weights[j][h] hold per-cell second-stage
    loads and expected-size weights (empty for single-stage designs);
    fixed_term[j] is the allocation-independent variance mass; priority[j]
    is the per-subpopulation precision weight already divided into the
    other families.
    """

    design: str
    first_stage: tuple
    second_stage: tuple
    size_weights: tuple
    fixed_term: np.ndarray
    priority: np.ndarray
    cell_labels: tuple = field(default=())

    @property
    def n_subpopulations(self):
        return len(self.first_stage)

    def strata_counts(self):
        return [len(a) for a in self.first_stage]

    def has_second_stage(self):
        return self.design != "single_stage"


def _as_priority(priority, n):
    if priority is None:
        return np.ones(n)
    kappa = np.asarray(priority, dtype=np.float64)
    if kappa.shape != (n,):
        raise ValidationError([f"priority weights need length {n}, got {kappa.shape}"])
    if np.any(kappa <= 0):
        raise ValidationError(["priority weights must be positive"])
    return kappa


def _pack(first, second, weights, fixed, kappa, design, labels):
    # priority weights divide the variance loads and the fixed mass, never
    # the expected-size weights
    first = tuple(
        np.asarray(row, dtype=np.float64) / kappa[j] for j, row in enumerate(first)
    )
    second = tuple(
        tuple(np.asarray(cells, dtype=np.float64) / kappa[j] for cells in row)
        for j, row in enumerate(second)
    )
    weights = tuple(
        tuple(np.asarray(cells, dtype=np.float64) for cells in row) for row in weights
    )
    return CoefficientSet(
        design=design,
        first_stage=first,
        second_stage=second,
        size_weights=weights,
        fixed_term=np.asarray(fixed, dtype=np.float64) / kappa,
        priority=kappa,
        cell_labels=labels,
    )


def derive_single_stage(pop, priority=None):
    """Coefficients for stratified single-stage simple random sampling.

    Per stratum the first-stage load is (N S / t)^2; the fixed mass per
    subpopulation is the total FPC term sum(N S^2) / t^2.
    """
    pop.validate()
    kappa = _as_priority(priority, pop.n_subpopulations)
    first, fixed = [], []
    for j, sub in enumerate(pop.subpopulations):
        if sub.total == 0:
            raise ZeroTotal(f"subpop {j} has zero total")
        t2 = sub.total * sub.total
        first.append([st.units**2 * st.sd**2 / t2 for st in sub.strata])
        fixed.append(math.fsum(st.units * st.sd**2 / t2 for st in sub.strata))
    empty = tuple(tuple([] for _ in row) for row in first)
    labels = tuple(tuple(() for _ in row) for row in first)
    return _pack(first, empty, empty, fixed, kappa, "single_stage", labels)


def gamma_values(pop, pps=False):
    """Between-PSU net variance coefficient per (subpopulation, stratum).

    For equal-probability designs this is (M D2 - sum N S2) / t^2 with the
    plain variance of PSU totals; for size-proportional designs D2 is the
    share-weighted residual mass sum omega (1 + share) and the within term
    is weighted by inverse shares.
    """
    out = []
    for sub in pop.subpopulations:
        total = sub.total
        if total == 0:
            raise ZeroTotal("subpopulation with zero total")
        t2 = total * total
        row = []
        for st in sub.psu_strata:
            if pps:
                shares = st.size_shares()
                _, d2 = hr_residuals(st)
                within = math.fsum(
                    (1.0 / shares[i]) * math.fsum(c.units * c.var for c in psu.ssu_strata)
                    for i, psu in enumerate(st.psus)
                )
                row.append((d2 - within) / t2)
            else:
                d2 = st.between_var_srswor()
                within = math.fsum(
                    c.units * c.var for psu in st.psus for c in psu.ssu_strata
                )
                row.append((st.psu_count * d2 - within) / t2)
        out.append(row)
    return out


def hr_residuals(stratum):
    """Share-weighted squared residuals and their total variance mass.

    Returns (omega, D2) where omega_i = share_i (t_i / share_i - sum t)^2
    and D2 = sum omega_i (1 + share_i).
    """
    shares = stratum.size_shares()
    totals = stratum.psu_totals()
    stratum_total = math.fsum(totals)
    omega = shares * (totals / shares - stratum_total) ** 2
    d2 = float(math.fsum(omega * (1.0 + shares)))
    return omega, d2


def _raise_on_nonpositive(gammas):
    bad = [
        (j, h)
        for j, row in enumerate(gammas)
        for h, g in enumerate(row)
        if not g > 0
    ]
    if bad:
        raise NonpositiveGamma(bad)


def derive_two_stage_srswor(pop, priority=None):
    """Coefficients for SRSWOR at both stages with stratified SSUs.

    Requires a positive between-PSU coefficient in every stratum; with the
    stratum's PSU count M, the first-stage load is M gamma, each
    (psu, ssu_stratum) cell carries M (N S / t)^2 with expected-size weight
    1/M, and the fixed mass is sum M D2 / t^2.
    """
    pop.validate()
    kappa = _as_priority(priority, pop.n_subpopulations)
    gammas = gamma_values(pop, pps=False)
    _raise_on_nonpositive(gammas)
    first, second, weights, fixed, labels = [], [], [], [], []
    for j, sub in enumerate(pop.subpopulations):
        t2 = sub.total * sub.total
        row_a, row_b, row_w, row_l = [], [], [], []
        mass = 0.0
        for h, st in enumerate(sub.psu_strata):
            m_count = st.psu_count
            row_a.append(m_count * gammas[j][h])
            cells = [
                m_count * (c.units**2 * c.var / t2)
                for psu in st.psus
                for c in psu.ssu_strata
            ]
            names = [
                (i, g)
                for i, psu in enumerate(st.psus)
                for g in range(len(psu.ssu_strata))
            ]
            row_b.append(cells)
            row_w.append([1.0 / m_count] * len(cells))
            row_l.append(tuple(names))
            mass += m_count * st.between_var_srswor() / t2
        first.append(row_a)
        second.append(row_b)
        weights.append(row_w)
        labels.append(tuple(row_l))
        fixed.append(mass)
    return _pack(first, second, weights, fixed, kappa, "two_stage_srswor", tuple(labels))


def _single_cell_per_psu(pop):
    for j, sub in enumerate(pop.subpopulations):
        for h, st in enumerate(sub.psu_strata):
            for i, psu in enumerate(st.psus):
                if len(psu.ssu_strata) != 1:
                    raise MultipleSsuStrata(
                        f"subpop {j} / psu_stratum {h} / psu {i} has "
                        f"{len(psu.ssu_strata)} SSU strata, need exactly 1"
                    )


def derive_two_stage_fixed_ssu(pop, priority=None):
    """Coefficients for SRSWOR at both stages with one shared SSU sample
    size per PSU stratum (no SSU stratification)."""
    pop.validate()
    _single_cell_per_psu(pop)
    kappa = _as_priority(priority, pop.n_subpopulations)
    gammas = gamma_values(pop, pps=False)
    _raise_on_nonpositive(gammas)
    first, second, weights, fixed, labels = [], [], [], [], []
    for j, sub in enumerate(pop.subpopulations):
        t2 = sub.total * sub.total
        row_a, row_b, row_w, row_l = [], [], [], []
        mass = 0.0
        for h, st in enumerate(sub.psu_strata):
            m_count = st.psu_count
            row_a.append(m_count * gammas[j][h])
            within2 = math.fsum(
                psu.ssu_strata[0].units ** 2 * psu.ssu_strata[0].var / t2
                for psu in st.psus
            )
            row_b.append([m_count * within2])
            row_w.append([1.0])
            row_l.append((None,))
            mass += m_count * st.between_var_srswor() / t2
        first.append(row_a)
        second.append(row_b)
        weights.append(row_w)
        labels.append(tuple(row_l))
        fixed.append(mass)
    return _pack(
        first, second, weights, fixed, kappa, "two_stage_fixed_ssu", tuple(labels)
    )


def derive_hr(pop, priority=None, fixed_ssu=False):
    """Coefficients for size-proportional systematic PSU sampling.

    PSU shares must be present and sum to one per stratum.  The first-stage
    load is the net residual coefficient itself; each cell carries its
    within load divided by the PSU share, with the share as expected-size
    weight.  With ``fixed_ssu`` every PSU must hold a single SSU stratum and
    the per-stratum cell aggregates sum(N^2 S2 / share) / t^2 with unit
    weight.
    """
    pop.validate()
    if fixed_ssu:
        _single_cell_per_psu(pop)
    kappa = _as_priority(priority, pop.n_subpopulations)
    gammas = gamma_values(pop, pps=True)
    _raise_on_nonpositive(gammas)
    first, second, weights, fixed, labels = [], [], [], [], []
    for j, sub in enumerate(pop.subpopulations):
        t2 = sub.total * sub.total
        row_a, row_b, row_w, row_l = [], [], [], []
        mass = 0.0
        for h, st in enumerate(sub.psu_strata):
            shares = st.size_shares()
            omega, _ = hr_residuals(st)
            row_a.append(gammas[j][h])
            if fixed_ssu:
                agg = math.fsum(
                    psu.ssu_strata[0].units ** 2
                    * psu.ssu_strata[0].var
                    / (t2 * shares[i])
                    for i, psu in enumerate(st.psus)
                )
                row_b.append([agg])
                row_w.append([1.0])
                row_l.append((None,))
            else:
                cells = [
                    c.units**2 * c.var / (t2 * shares[i])
                    for i, psu in enumerate(st.psus)
                    for c in psu.ssu_strata
                ]
                names = [
                    (i, g)
                    for i, psu in enumerate(st.psus)
                    for g in range(len(psu.ssu_strata))
                ]
                share_cells = [
                    shares[i]
                    for i, psu in enumerate(st.psus)
                    for _ in range(len(psu.ssu_strata))
                ]
                row_b.append(cells)
                row_w.append(share_cells)
                row_l.append(tuple(names))
            mass += float(math.fsum(omega * shares)) / t2
        first.append(row_a)
        second.append(row_b)
        weights.append(row_w)
        labels.append(tuple(row_l))
        fixed.append(mass)
    design = "two_stage_hr_fixed_ssu" if fixed_ssu else "two_stage_hr"
    return _pack(first, second, weights, fixed, kappa, design, tuple(labels))
