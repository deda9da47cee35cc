"""Sampling simulation: synthetic frames, design draws, estimation, bootstrap.

Replicate streams are derived deterministically: replicate ``r`` of
allocation slot ``ai`` uses ``default_rng(SeedSequence(seed, spawn_key=(ai, r)))``,
so reports are reproducible bit for bit and independent of execution order.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .allocation import SchemeId
from .errors import (
    GammaInfeasible,
    InclusionOverflow,
    SingletonStratum,
    ZeroCell,
)
from .population import (
    Psu,
    PsuStratum,
    SsuStratum,
    TwoStagePopulation,
    TwoStageSubpopulation,
    gamma_values,
)


@dataclass(frozen=True)
class FrameParams:
    """Knobs of the synthetic frame generator.

    ``psu_spread`` is the intra-PSU correlation knob: the standard deviation
    of the common PSU effect as a multiple of the unit-level noise; zero
    makes units independent across PSUs.  ``size_spread`` is the lognormal
    sigma of the PSU size measures around the PSU's unit count.
    """

    subpopulations: int = 3
    psu_strata: int = 2
    psus_per_stratum: int = 12
    ssu_strata_per_psu: int = 1
    units_per_cell: int = 40
    unit_level: float = 10.0
    unit_sd: float = 3.0
    psu_spread: float = 0.5
    size_spread: float = 0.2
    require_positive_gamma: bool = True
    max_retries: int = 20


@dataclass(frozen=True)
class FramePsu:
    y_cells: tuple  # one float array per SSU stratum
    size_raw: float

    @property
    def total(self):
        return float(math.fsum(float(y.sum()) for y in self.y_cells))


@dataclass(frozen=True)
class SyntheticFrame:
    """Unit-level two-stage population: subpopulations > strata > PSUs."""

    subpopulations: tuple
    params: FrameParams | None = None

    def shares(self, j, h):
        raw = np.array([p.size_raw for p in self.subpopulations[j][h]])
        return raw / raw.sum()

    def true_totals(self):
        return np.array(
            [
                math.fsum(p.total for stratum in sub for p in stratum)
                for sub in self.subpopulations
            ]
        )

    def to_population(self):
        """Aggregate to the summary frame used for coefficient derivation."""
        subs = []
        for sub in self.subpopulations:
            strata = []
            for stratum in sub:
                psus = []
                for p in stratum:
                    cells = tuple(
                        SsuStratum(
                            units=len(y),
                            var=float(y.var(ddof=1)) if len(y) > 1 else 0.0,
                        )
                        for y in p.y_cells
                    )
                    psus.append(Psu(total=p.total, ssu_strata=cells, size_raw=p.size_raw))
                strata.append(PsuStratum(psus=tuple(psus)))
            subs.append(TwoStageSubpopulation(psu_strata=tuple(strata)))
        return TwoStagePopulation(subpopulations=tuple(subs)).validate()

    def unit_rows(self):
        for j, sub in enumerate(self.subpopulations):
            for h, stratum in enumerate(sub):
                for i, p in enumerate(stratum):
                    for g, y in enumerate(p.y_cells):
                        for u, value in enumerate(y):
                            yield j, h, i, g, u, value, p.size_raw


def frame_from_unit_tree(tree):
    """Build a SyntheticFrame from the unit-level CSV tree of io.load_unit_rows."""
    subs = {}
    for (j, h, i), info in sorted(tree.items()):
        cells = tuple(
            np.asarray(info["cells"][g], dtype=np.float64) for g in sorted(info["cells"])
        )
        size = info["z_raw"]
        subs.setdefault(j, {}).setdefault(h, {})[i] = FramePsu(
            y_cells=cells, size_raw=float(size) if size is not None else float(
                sum(len(c) for c in cells)
            )
        )
    return SyntheticFrame(
        subpopulations=tuple(
            tuple(
                tuple(subs[j][h][i] for i in sorted(subs[j][h])) for h in sorted(subs[j])
            )
            for j in sorted(subs)
        )
    )


def generate_frame(params, seed):
    """Deterministic synthetic frame; retries until every between-PSU
    coefficient is positive (GammaInfeasible past the retry cap)."""
    for attempt in range(params.max_retries):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(attempt,)))
        frame = _draw_frame(params, rng)
        if not params.require_positive_gamma:
            return frame
        pop = frame.to_population()
        try:
            plain = gamma_values(pop, pps=False)
            pps = gamma_values(pop, pps=True)
        except Exception:
            continue
        lows = [g for row in plain for g in row] + [g for row in pps for g in row]
        if min(lows) > 0:
            return frame
    raise GammaInfeasible(
        f"no frame with positive between-PSU coefficients in {params.max_retries} tries"
    )


def _draw_frame(params, rng):
    subs = []
    lo = max(2, int(params.units_per_cell * 0.6))
    hi = max(lo + 1, int(params.units_per_cell * 1.4))
    for j in range(params.subpopulations):
        level = params.unit_level * (1.0 + 0.25 * j)  # staggered subpopulation levels
        strata = []
        for _h in range(params.psu_strata):
            psus = []
            for _i in range(params.psus_per_stratum):
                effect = params.psu_spread * params.unit_sd * rng.standard_normal()
                cells = []
                n_units_total = 0
                for _g in range(params.ssu_strata_per_psu):
                    n_units = int(rng.integers(lo, hi + 1))
                    n_units_total += n_units
                    cells.append(
                        level + effect + params.unit_sd * rng.standard_normal(n_units)
                    )
                size = n_units_total * float(
                    np.exp(params.size_spread * rng.standard_normal())
                )
                psus.append(FramePsu(y_cells=tuple(cells), size_raw=size))
            strata.append(tuple(psus))
        subs.append(tuple(strata))
    return SyntheticFrame(subpopulations=tuple(subs), params=params)


# ---------------------------------------------------------------------------
# design draws


def draw_srswor(universe_size, sample_size, rng):
    """Uniform without-replacement sample of indices, sorted."""
    if not 1 <= sample_size <= universe_size:
        raise ValueError(
            f"sample size must be in [1, {universe_size}], got {sample_size}"
        )
    uniforms = rng.random(sample_size)
    return np.sort(kernels.srswor_indices(universe_size, sample_size, uniforms))


def draw_hartley_rao(shares, m, rng):
    """Systematic size-proportional PSU sample from a randomly ordered list.

    Selects exactly m distinct PSUs; the first-order inclusion probability
    of PSU i is m * shares[i], which must not exceed one.
    """
    shares = np.asarray(shares, dtype=np.float64)
    m = int(m)
    if m < 1 or m > len(shares):
        raise ValueError(f"PSU sample size must be in [1, {len(shares)}], got {m}")
    overflow = m * shares.max()
    if overflow > 1.0 + 1e-12:
        raise InclusionOverflow(
            f"inclusion probability {overflow:.6g} exceeds 1 for the largest PSU"
        )
    perm = rng.permutation(len(shares))
    cum = np.cumsum(shares[perm]) * m
    cum[-1] = float(m)  # exact upper end despite summation roundoff
    start = rng.random()
    positions = kernels.systematic_positions(cum, start)
    return np.sort(perm[positions])


# ---------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class StratumDraw:
    subpop: int
    psu_indices: np.ndarray
    contributions: np.ndarray  # per sampled PSU: weight / pi * estimated PSU total
    ssu_count: int


@dataclass(frozen=True)
class DesignSample:
    strata: tuple
    n_subpopulations: int

    @property
    def psu_count(self):
        return sum(len(s.psu_indices) for s in self.strata)

    @property
    def ssu_count(self):
        return sum(s.ssu_count for s in self.strata)


def ht_total(sample):
    """Design-weighted estimates of the subpopulation totals."""
    out = np.zeros(sample.n_subpopulations)
    for s in sample.strata:
        out[s.subpop] += math.fsum(s.contributions)
    return out


def srswor_total_estimate(y, indices):
    """Single-stage expansion estimator N/n * sample sum."""
    y = np.asarray(y, dtype=np.float64)
    return len(y) / len(indices) * float(y[indices].sum())


def _psu_estimate(psu, cell_sizes, pick):
    """HT estimate of one PSU's total; ``pick(universe, size)`` supplies the
    SSU index sets (random draw or explicit enumeration)."""
    est = 0.0
    drawn = 0
    for g, y in enumerate(psu.y_cells):
        n_units = int(cell_sizes[g])
        n_pop = len(y)
        if n_pop == 0:
            continue
        if n_units < 1:
            raise ZeroCell("a sampled PSU has an unobserved SSU stratum")
        n_units = min(n_units, n_pop)
        idx = pick(n_pop, n_units, g)
        est += n_pop / n_units * float(y[idx].sum())
        drawn += n_units
    return est, drawn


def _cell_sizes_for(stratum, cells, fixed, cell_offsets, i):
    psu = stratum[i]
    if fixed:
        return [int(cells[0])] * len(psu.y_cells)
    return cells[cell_offsets[i] : cell_offsets[i + 1]]


def _assemble_sample(frame, scheme, first, second, stratum_picker):
    """Shared sample builder; ``stratum_picker`` supplies PSU index sets,
    first-stage weights and a per-PSU SSU picker."""
    fixed = scheme in (SchemeId.TWO_STAGE_FIXED_SSU, SchemeId.TWO_STAGE_HR_FIXED_SSU)
    strata = []
    for j, sub in enumerate(frame.subpopulations):
        for h, stratum in enumerate(sub):
            m_int = int(first[j][h])
            if m_int < 1:
                raise ZeroCell(f"subpop {j} / stratum {h}: no PSUs allocated")
            cells = np.asarray(second[j][h])
            cell_offsets = np.cumsum([0] + [len(p.y_cells) for p in stratum])
            chosen, weights, ssu_pick = stratum_picker(j, h, stratum, m_int)
            contribs = np.empty(len(chosen))
            ssu_total = 0
            for k, i in enumerate(chosen):
                sizes = _cell_sizes_for(stratum, cells, fixed, cell_offsets, i)
                est, drawn = _psu_estimate(
                    stratum[i], sizes, lambda n, s, g, i=i: ssu_pick(i, g, n, s)
                )
                contribs[k] = weights[k] * est
                ssu_total += drawn
            strata.append(
                StratumDraw(
                    subpop=j,
                    psu_indices=np.asarray(chosen, dtype=np.int64),
                    contributions=contribs,
                    ssu_count=ssu_total,
                )
            )
    return DesignSample(strata=tuple(strata), n_subpopulations=len(frame.subpopulations))


def sample_two_stage(frame, scheme, first, second, rng):
    """Draw one full two-stage sample and package weighted PSU contributions.

    ``first[j][h]`` holds integer PSU sample sizes; ``second[j][h]`` holds
    the integer SSU sizes per (psu, ssu_stratum) cell in PSU-major order,
    or a single shared size for the fixed-SSU schemes.
    """
    pps = scheme in (SchemeId.TWO_STAGE_HR, SchemeId.TWO_STAGE_HR_FIXED_SSU)

    def picker(j, h, stratum, m_int):
        if pps:
            shares = frame.shares(j, h)
            chosen = draw_hartley_rao(shares, m_int, rng)
            weights = 1.0 / (m_int * shares[chosen])
        else:
            chosen = draw_srswor(len(stratum), m_int, rng)
            weights = np.full(m_int, len(stratum) / m_int)
        return chosen, weights, lambda i, g, n, s: draw_srswor(n, s, rng)

    return _assemble_sample(frame, scheme, first, second, picker)


def sample_from_plan(frame, scheme, first, second, plan, weights_by_stratum):
    """Build the weighted sample for explicitly given index sets.

    ``plan[(j, h)]`` is (psu_indices, {(psu, cell): ssu index list});
    ``weights_by_stratum[(j, h)]`` holds the first-stage weights aligned
    with the PSU indices.  Used by exhaustive-enumeration checks.
    """

    def picker(j, h, stratum, m_int):
        chosen, picks = plan[(j, h)]
        weights = np.asarray(weights_by_stratum[(j, h)], dtype=np.float64)
        return (
            np.asarray(chosen, dtype=np.int64),
            weights,
            lambda i, g, n, s: np.asarray(picks[(i, g)], dtype=np.int64),
        )

    return _assemble_sample(frame, scheme, first, second, picker)


def bootstrap_cv(sample, n_boot, rng):
    """Rescaled PSU-level bootstrap CV per subpopulation.

    In each stratum with n_h sampled PSUs, n_h - 1 contributions are redrawn
    with replacement and rescaled by n_h / (n_h - 1); the CV is the standard
    deviation of the resampled totals over the point estimate.  With a
    single replicate the variance is undefined and NaN is returned.
    """
    if n_boot < 1:
        raise ValueError("bootstrap replicate count must be >= 1")
    totals = np.zeros((sample.n_subpopulations, n_boot))
    for s in sample.strata:
        n_h = len(s.contributions)
        if n_h < 2:
            raise SingletonStratum(
                f"subpop {s.subpop}: a stratum holds {n_h} sampled PSU(s); "
                "bootstrap needs >= 2, raise the first-stage budget"
            )
        draws = rng.integers(0, n_h, size=(n_boot, n_h - 1))
        totals[s.subpop] += kernels.replicate_sums(
            s.contributions, draws, n_h / (n_h - 1.0)
        )
    est = ht_total(sample)
    if n_boot == 1:
        return np.full(sample.n_subpopulations, np.nan)
    sd = totals.std(axis=1, ddof=1)
    return sd / np.abs(est)


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class SimulationReport:
    """Monte-Carlo and bootstrap precision summary for one allocation."""

    label: str
    scheme: SchemeId
    replicates: int
    bootstrap_replicates: int
    seed: int
    theoretical_cv: np.ndarray
    true_totals: np.ndarray
    estimate_mean: np.ndarray
    mc_cv: np.ndarray
    mc_cv_se: np.ndarray
    boot_cv_mean: np.ndarray
    boot_cv_se: np.ndarray
    avg_psu_count: float
    psu_count_se: float
    avg_ssu_count: float
    ssu_count_se: float
    bootstrap_se_defined: bool


def _rounded_arrays(allocation):
    if allocation.rounded_first is None:
        raise ValueError("round the allocation before simulating it")
    second = allocation.rounded_second
    if second is None:
        second = allocation.second_stage
    return allocation.rounded_first, second


def _one_replicate(frame, scheme, first, second, n_boot, seed, slot, rep):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(slot, rep)))
    sample = sample_two_stage(frame, scheme, first, second, rng)
    est = ht_total(sample)
    boot = bootstrap_cv(sample, n_boot, rng)
    return est, boot, sample.psu_count, sample.ssu_count


def simulate_allocation(frame, allocation, replicates, n_boot, seed, slot=0,
                        label="allocation", threads=1):
    """Monte-Carlo precision of one rounded allocation on a unit frame."""
    if replicates < 1:
        raise ValueError("replicate count must be >= 1")
    first, second = _rounded_arrays(allocation)
    scheme = allocation.scheme
    args = [
        (frame, scheme, first, second, n_boot, seed, slot, rep)
        for rep in range(replicates)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda a: _one_replicate(*a), args))
    else:
        rows = [_one_replicate(*a) for a in args]

    n_sub = len(frame.subpopulations)
    estimates = np.array([r[0] for r in rows])
    boots = np.array([r[1] for r in rows])
    psu_counts = np.array([r[2] for r in rows], dtype=np.float64)
    ssu_counts = np.array([r[3] for r in rows], dtype=np.float64)

    est_mean = estimates.mean(axis=0)
    if replicates > 1:
        sd = estimates.std(axis=0, ddof=1)
        mc_cv = sd / np.abs(est_mean)
        # delta-method spread of a CV estimated from R replicates
        mc_cv_se = mc_cv * np.sqrt(1.0 / (2.0 * (replicates - 1)) + mc_cv**2 / replicates)
        count_se = (
            psu_counts.std(ddof=1) / math.sqrt(replicates),
            ssu_counts.std(ddof=1) / math.sqrt(replicates),
        )
        boot_se = boots.std(axis=0, ddof=1) / math.sqrt(replicates)
    else:
        mc_cv = np.full(n_sub, np.nan)
        mc_cv_se = np.full(n_sub, np.nan)
        count_se = (np.nan, np.nan)
        boot_se = np.full(n_sub, np.nan)

    se_defined = n_boot > 1 and replicates > 1
    return SimulationReport(
        label=label,
        scheme=scheme,
        replicates=replicates,
        bootstrap_replicates=n_boot,
        seed=seed,
        theoretical_cv=np.sqrt(allocation.priority * allocation.value),
        true_totals=frame.true_totals(),
        estimate_mean=est_mean,
        mc_cv=mc_cv,
        mc_cv_se=mc_cv_se,
        boot_cv_mean=boots.mean(axis=0),
        boot_cv_se=boot_se,
        avg_psu_count=float(psu_counts.mean()),
        psu_count_se=float(count_se[0]),
        avg_ssu_count=float(ssu_counts.mean()),
        ssu_count_se=float(count_se[1]),
        bootstrap_se_defined=se_defined,
    )


def run_experiment(frame, alloc_a, alloc_b, replicates, n_boot, seed,
                   labels=("optimal", "baseline"), threads=1):
    """Paired Monte-Carlo comparison of two allocations on one frame.

    Replicate streams depend on (seed, slot, replicate) only, so each
    allocation slot sees the same stream regardless of the other.
    """
    report_a = simulate_allocation(
        frame, alloc_a, replicates, n_boot, seed, slot=0, label=labels[0], threads=threads
    )
    report_b = simulate_allocation(
        frame, alloc_b, replicates, n_boot, seed, slot=1, label=labels[1], threads=threads
    )
    return report_a, report_b
