"""Shared random-instance builders. Everything is seeded and deterministic."""

import numpy as np
import pytest

from eqalloc import Budgets, SchemeId
from eqalloc.eigen import LoadVectors, check_condition_rank2
from eqalloc.population import (
    Psu,
    PsuStratum,
    SingleStagePopulation,
    SsuStratum,
    Stratum,
    Subpopulation,
    TwoStagePopulation,
    TwoStageSubpopulation,
)


def random_vectors(rng, d=None, rank2=True):
    """Random (a, b, c) load vectors, not necessarily solvable."""
    if d is None:
        d = int(rng.integers(1, 11))
    a = rng.uniform(0.1, 2.0, size=d)
    b = rng.uniform(0.1, 2.0, size=d) if rank2 else np.zeros(d)
    c = rng.uniform(0.05, 3.0, size=d)
    return LoadVectors(first_stage=a, second_stage=b, fpc_mass=c)


def solvable_vectors(rng, d=None, rank2=True, max_tries=200):
    """Random load vectors satisfying the solvability condition."""
    for _ in range(max_tries):
        v = random_vectors(rng, d=d, rank2=rank2)
        if rank2:
            # nearly parallel second-stage load keeps the cross term small
            b = v.first_stage * rng.uniform(0.6, 1.4) + rng.uniform(0.0, 0.05, v.dim)
            v = LoadVectors(first_stage=v.first_stage, second_stage=b, fpc_mass=v.fpc_mass)
        if check_condition_rank2(v.first_stage, v.second_stage, v.fpc_mass):
            return v
    raise AssertionError("no solvable instance found")


def random_single_stage(rng, j_max=8, h_max=5, srswor=False):
    """Random valid single-stage population with a feasible budget.

    Budget is drawn strictly under the root-existence bound
    sum_j (sum_h N S)^2 / sum_h N S^2, so both solution paths apply.
    """
    n_sub = int(rng.integers(1, j_max + 1))
    subs = []
    bound = 0.0
    for _ in range(n_sub):
        n_strata = 1 if srswor else int(rng.integers(1, h_max + 1))
        sizes = rng.integers(20, 200, size=n_strata)
        means = rng.uniform(5.0, 15.0, size=n_strata)
        sds = rng.uniform(0.2, 0.6) * means
        total = float(np.sum(sizes * means))
        subs.append(
            Subpopulation(
                total=total,
                strata=tuple(
                    Stratum(units=int(nn), sd=float(s)) for nn, s in zip(sizes, sds)
                ),
            )
        )
        bound += float(np.sum(sizes * sds)) ** 2 / float(np.sum(sizes * sds**2))
    budget = float(rng.uniform(0.2, 0.7) * bound)
    return SingleStagePopulation(subpopulations=tuple(subs)).validate(), budget


def random_two_stage(rng, scheme, j_max=4, h_max=3, max_tries=100):
    """Random valid two-stage population with budgets satisfying the
    solvability condition for the given scheme; retries until it holds."""
    from eqalloc.allocation import load_vectors_from
    from eqalloc.population import (
        derive_hr,
        derive_two_stage_fixed_ssu,
        derive_two_stage_srswor,
    )

    fixed = scheme in (SchemeId.TWO_STAGE_FIXED_SSU, SchemeId.TWO_STAGE_HR_FIXED_SSU)
    pps = scheme in (SchemeId.TWO_STAGE_HR, SchemeId.TWO_STAGE_HR_FIXED_SSU)
    for _ in range(max_tries):
        n_sub = int(rng.integers(1, j_max + 1))
        subs = []
        total_psus = 0
        unit_scale = 0.0
        cell_count = 0
        for j in range(n_sub):
            n_strata = int(rng.integers(1, h_max + 1))
            strata = []
            base = rng.uniform(50.0, 150.0)
            for _h in range(n_strata):
                m_count = int(rng.integers(3, 8))
                total_psus += m_count
                psus = []
                for _i in range(m_count):
                    n_cells = 1 if fixed else int(rng.integers(1, 3))
                    cells = []
                    for _g in range(n_cells):
                        units = int(rng.integers(10, 41))
                        var = float(rng.uniform(0.2, 2.0))
                        cells.append(SsuStratum(units=units, var=var))
                        unit_scale += units
                        cell_count += 1
                    total = base * float(rng.uniform(0.5, 1.5)) * sum(
                        c.units for c in cells
                    ) / 25.0
                    size = (
                        sum(c.units for c in cells)
                        * float(np.exp(rng.uniform(-0.2, 0.2)))
                        if pps
                        else None
                    )
                    psus.append(Psu(total=total, ssu_strata=tuple(cells), size_raw=size))
                strata.append(PsuStratum(psus=tuple(psus)))
            subs.append(TwoStageSubpopulation(psu_strata=tuple(strata)))
        pop = TwoStagePopulation(subpopulations=tuple(subs))
        try:
            pop.validate()
            if scheme is SchemeId.TWO_STAGE_SRSWOR:
                coeffs = derive_two_stage_srswor(pop)
            elif scheme is SchemeId.TWO_STAGE_FIXED_SSU:
                coeffs = derive_two_stage_fixed_ssu(pop)
            else:
                coeffs = derive_hr(pop, fixed_ssu=fixed)
        except Exception:
            continue
        budgets = Budgets(
            x=float(rng.uniform(0.25, 0.5) * total_psus),
            z=float(rng.uniform(0.2, 0.5) * unit_scale * 0.3),
        )
        v = load_vectors_from(coeffs, budgets)
        if check_condition_rank2(v.first_stage, v.second_stage, v.fpc_mass):
            return pop, coeffs, budgets
    raise AssertionError(f"no solvable two-stage instance found for {scheme}")


@pytest.fixture
def rng():
    return np.random.default_rng(20250809)
