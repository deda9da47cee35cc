"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import random_single_stage, random_two_stage, random_vectors
from eqalloc import (
    Budgets,
    SchemeId,
    allocate,
    draw_hartley_rao,
    evaluate_precision,
    ht_total,
    round_allocation,
    solve_T_direct,
)
from eqalloc.eigen import (
    LoadVectors,
    build_matrix,
    check_condition_rank2,
    unique_positive_eigenpair,
)
from eqalloc.io import save_unit_rows
from eqalloc.population import (
    Psu,
    PsuStratum,
    SingleStagePopulation,
    SsuStratum,
    Stratum,
    Subpopulation,
    TwoStagePopulation,
    TwoStageSubpopulation,
    derive_hr,
    derive_single_stage,
    derive_two_stage_srswor,
)
from eqalloc.simulate import (
    FrameParams,
    generate_frame,
    sample_from_plan,
    simulate_allocation,
    srswor_total_estimate,
)
from oracles import minimax_bruteforce


def announce(num, message):
    print(f"[criterion {num:02d}] PASS {message}")


def vectors(a, b, c):
    return LoadVectors(
        first_stage=np.asarray(a, float),
        second_stage=np.asarray(b, float),
        fpc_mass=np.asarray(c, float),
    )


def test_criterion_01_analytic_eigen_cases():
    cases = [
        (vectors([2.0], [0.0], [1.0]), 3.0, np.array([1.0])),
        (vectors([1.0, 1.0], [0.0, 0.0], [1.0, 1.0]), 1.0, np.full(2, 1 / np.sqrt(2))),
        (
            vectors([np.sqrt(0.05)] * 2, [0.0] * 2, [0.01] * 2),
            0.09,
            np.full(2, 1 / np.sqrt(2)),
        ),
    ]
    # expected matrices, asserted before timing
    np.testing.assert_allclose(build_matrix(cases[1][0]).entries, [[0, 1], [1, 0]])
    np.testing.assert_allclose(
        build_matrix(cases[2][0]).entries, [[0.04, 0.05], [0.05, 0.04]], atol=1e-15
    )
    for vec, lam, v_ref in cases:  # warmup
        unique_positive_eigenpair(build_matrix(vec))
    worst = 0.0
    for vec, lam, v_ref in cases:
        matrix = build_matrix(vec)
        t0 = time.perf_counter()
        pair = unique_positive_eigenpair(matrix)
        elapsed = time.perf_counter() - t0
        worst = max(worst, elapsed)
        assert abs(pair.value - lam) <= 1e-12
        np.testing.assert_allclose(pair.vector, v_ref, atol=1e-12)
        assert elapsed < 1e-3
    announce(1, f"analytic eigen cases (worst solve {worst * 1e6:.0f} us)")


def test_criterion_02_condition_soundness():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    accepted = 0
    total = 0
    while total < 1000:
        vec = random_vectors(rng, d=int(rng.integers(1, 11)))
        total += 1
        if check_condition_rank2(vec.first_stage, vec.second_stage, vec.fpc_mass):
            spectrum = np.linalg.eigh(build_matrix(vec).entries)[0]
            assert int(np.sum(spectrum > 0)) == 1
            accepted += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    assert accepted >= 100
    announce(2, f"condition soundness ({total} instances, {accepted} accepted, {elapsed:.2f} s)")


def test_criterion_03_cross_method_equivalence():
    rng = np.random.default_rng(33)
    t0 = time.perf_counter()
    for k in range(50):
        srswor = k % 2 == 0
        pop, budget = random_single_stage(rng, srswor=srswor)
        coeffs = derive_single_stage(pop)
        eig_scheme = (
            SchemeId.SINGLE_STAGE_SRSWOR if srswor else SchemeId.SINGLE_STAGE_STRATIFIED
        )
        root_scheme = (
            SchemeId.SINGLE_STAGE_SRSWOR if srswor else SchemeId.SINGLE_STAGE_NEYMAN_WITHIN
        )
        res = allocate(coeffs, eig_scheme, Budgets(x=budget))
        t_val, first = solve_T_direct(coeffs, root_scheme, budget)
        assert abs(t_val - res.value) <= 1e-8 * res.value
        for j in range(coeffs.n_subpopulations):
            np.testing.assert_allclose(first[j], res.first_stage[j], rtol=1e-8)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    announce(3, f"cross-method equivalence on 50 instances ({elapsed:.2f} s)")


def test_criterion_04_equal_precision_every_scheme():
    rng = np.random.default_rng(44)
    t0 = time.perf_counter()
    for scheme in SchemeId:
        for _ in range(20):
            if scheme.two_stage:
                pop, coeffs, budgets = random_two_stage(rng, scheme)
            else:
                pop, budget = random_single_stage(
                    rng, srswor=scheme is SchemeId.SINGLE_STAGE_SRSWOR
                )
                coeffs = derive_single_stage(pop)
                budgets = Budgets(x=budget)
            res = allocate(coeffs, scheme, budgets)
            assert np.max(np.abs(res.per_subpop_T - res.value)) <= 1e-9 * res.value
            x_sum = math.fsum(float(v) for row in res.first_stage for v in row)
            assert abs(x_sum - budgets.x) <= 1e-10 * budgets.x
            if scheme.two_stage:
                z_sum = math.fsum(
                    float(res.first_stage[j][h])
                    * float(
                        np.dot(coeffs.size_weights[j][h], res.second_stage[j][h])
                    )
                    for j in range(coeffs.n_subpopulations)
                    for h in range(len(coeffs.first_stage[j]))
                )
                assert abs(z_sum - budgets.z) <= 1e-10 * budgets.z
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    announce(4, f"equal precision, 7 schemes x 20 instances ({elapsed:.2f} s)")


def test_criterion_05_bruteforce_optimality():
    t0 = time.perf_counter()
    checked = 0

    def check(coeffs, scheme, budgets):
        nonlocal checked
        res = allocate(coeffs, scheme, budgets)
        value, xs, zs = minimax_bruteforce(coeffs, budgets)
        assert value >= res.value - 1e-6
        for (j, h), x_val in xs.items():
            assert x_val == pytest.approx(float(res.first_stage[j][h]), rel=1e-4)
        for (j, h, k), z_val in zs.items():
            assert z_val == pytest.approx(float(res.second_stage[j][h][k]), rel=1e-4)
        checked += 1

    # 2 cells: two one-stratum subpopulations
    pop = SingleStagePopulation(
        subpopulations=(
            Subpopulation(total=800.0, strata=(Stratum(units=100, sd=10.0),)),
            Subpopulation(total=900.0, strata=(Stratum(units=200, sd=5.0),)),
        )
    )
    check(derive_single_stage(pop), SchemeId.SINGLE_STAGE_SRSWOR, Budgets(x=30.0))

    # 3 cells: one stratified subpopulation
    pop = SingleStagePopulation(
        subpopulations=(
            Subpopulation(
                total=1500.0,
                strata=(
                    Stratum(units=50, sd=8.0),
                    Stratum(units=80, sd=4.0),
                    Stratum(units=120, sd=2.0),
                ),
            ),
        )
    )
    check(derive_single_stage(pop), SchemeId.SINGLE_STAGE_STRATIFIED, Budgets(x=40.0))

    # 5 cells: one subpopulation, four PSUs, second stage included
    psus = tuple(
        Psu(total=t, ssu_strata=(SsuStratum(units=10, var=1.0),))
        for t in (10.0, 20.0, 30.0, 40.0)
    )
    pop = TwoStagePopulation(
        subpopulations=(TwoStageSubpopulation(psu_strata=(PsuStratum(psus=psus),)),)
    )
    check(derive_two_stage_srswor(pop), SchemeId.TWO_STAGE_SRSWOR, Budgets(x=2.0, z=8.0))

    # 6 cells: two subpopulations, two PSUs each
    def two_psu_sub(t1, t2, units, var):
        return TwoStageSubpopulation(
            psu_strata=(
                PsuStratum(
                    psus=tuple(
                        Psu(total=t, ssu_strata=(SsuStratum(units=units, var=var),))
                        for t in (t1, t2)
                    )
                ),
            )
        )

    pop = TwoStagePopulation(
        subpopulations=(two_psu_sub(10.0, 30.0, 12, 1.5), two_psu_sub(20.0, 50.0, 9, 0.8))
    )
    check(derive_two_stage_srswor(pop), SchemeId.TWO_STAGE_SRSWOR, Budgets(x=2.5, z=10.0))

    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    announce(5, f"brute-force optimality on {checked} instances ({elapsed:.2f} s)")


def test_criterion_06_neyman_reduction():
    pop = SingleStagePopulation(
        subpopulations=(
            Subpopulation(
                total=2000.0,
                strata=(
                    Stratum(units=30, sd=2.0),
                    Stratum(units=70, sd=1.0),
                    Stratum(units=45, sd=3.5),
                ),
            ),
        )
    )
    coeffs = derive_single_stage(pop)
    res = allocate(coeffs, SchemeId.SINGLE_STAGE_STRATIFIED, Budgets(x=25.0))
    loads = np.array([30 * 2.0, 70 * 1.0, 45 * 3.5])
    expected = 25.0 * loads / loads.sum()
    np.testing.assert_allclose(res.first_stage[0], expected, rtol=1e-12)
    announce(6, "Neyman reduction at J=1")


def test_criterion_07_priority_weights():
    rng = np.random.default_rng(77)
    pop = None
    while pop is None or len(pop.subpopulations) != 3:
        candidate, _, budgets = random_two_stage(rng, SchemeId.TWO_STAGE_SRSWOR, j_max=3)
        pop = candidate if len(candidate.subpopulations) == 3 else None
    kappa = np.array([1.0, 2.0, 4.0])
    weighted = derive_two_stage_srswor(pop, priority=kappa)
    plain = derive_two_stage_srswor(pop)
    res = allocate(weighted, SchemeId.TWO_STAGE_SRSWOR, budgets)
    achieved = evaluate_precision(plain, SchemeId.TWO_STAGE_SRSWOR, res)
    ratios = achieved / kappa
    spread = (ratios.max() - ratios.min()) / ratios.min()
    assert spread <= 1e-9
    announce(7, f"priority weights kappa=(1,2,4) (ratio spread {spread:.2e})")


def test_criterion_08_hr_inclusion_probabilities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(88)
    raw = rng.uniform(0.5, 2.0, size=10)
    shares = raw / raw.sum()
    m = 3
    assert m * shares.max() <= 1.0
    draws = 100_000
    counts = np.zeros(10)
    for _ in range(draws):
        sel = draw_hartley_rao(shares, m, rng)
        counts[sel] += 1
    pi = m * shares
    emp = counts / draws
    se = np.sqrt(pi * (1 - pi) / draws)
    assert np.all(np.abs(emp - pi) <= 4 * se)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    announce(8, f"HR inclusion probabilities over {draws} draws ({elapsed:.2f} s)")


def test_criterion_09_ht_unbiasedness_exhaustive():
    t0 = time.perf_counter()
    # single stage: N=6, n=3, all 20 subsets
    rng = np.random.default_rng(9)
    y = rng.uniform(1.0, 9.0, size=6)
    estimates = [
        srswor_total_estimate(y, list(combo))
        for combo in itertools.combinations(range(6), 3)
    ]
    assert len(estimates) == 20
    mean = math.fsum(estimates) / len(estimates)
    assert abs(mean - y.sum()) <= 1e-10 * abs(y.sum())

    # two stage: M=3 PSUs choose 2 (3 combos), each PSU <= 6 units choose 2
    # (<= 15 combos per stage)
    frame = generate_frame(
        FrameParams(
            subpopulations=1,
            psu_strata=1,
            psus_per_stratum=3,
            units_per_cell=6,
            require_positive_gamma=False,
        ),
        seed=91,
    )
    stratum = frame.subpopulations[0][0]
    sizes = [len(p.y_cells[0]) for p in stratum]
    assert all(math.comb(s, 2) <= 20 for s in sizes)
    first = (np.array([2]),)
    second = ((np.array([2, 2, 2]),),)
    outer = []
    for psu_set in itertools.combinations(range(3), 2):
        inner_values = []
        spaces = [list(itertools.combinations(range(sizes[i]), 2)) for i in psu_set]
        for inner in itertools.product(*spaces):
            plan = {
                (0, 0): (
                    np.array(psu_set),
                    {(i, 0): np.array(sel) for i, sel in zip(psu_set, inner)},
                )
            }
            weights = {(0, 0): np.full(2, 3 / 2)}
            sample = sample_from_plan(
                frame, SchemeId.TWO_STAGE_SRSWOR, first, second, plan, weights
            )
            inner_values.append(float(ht_total(sample)[0]))
        outer.append(math.fsum(inner_values) / len(inner_values))
    mean = math.fsum(outer) / len(outer)
    truth = float(frame.true_totals()[0])
    assert abs(mean - truth) <= 1e-10 * abs(truth)
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    announce(9, f"HT unbiasedness by exhaustive enumeration ({elapsed:.2f} s)")


def test_criterion_10_end_to_end_hr_experiment():
    t0 = time.perf_counter()
    params = FrameParams(
        subpopulations=3,
        psu_strata=2,
        psus_per_stratum=25,
        units_per_cell=70,
        psu_spread=0.6,
        size_spread=0.15,
    )
    frame = generate_frame(params, seed=101)
    n_units = sum(
        len(y) for sub in frame.subpopulations for st in sub for p in st for y in p.y_cells
    )
    assert n_units >= 9_000
    pop = frame.to_population()
    coeffs = derive_hr(pop)
    budgets = Budgets(x=30.0, z=450.0)
    res = allocate(coeffs, SchemeId.TWO_STAGE_HR, budgets)
    rounded = round_allocation(res, pop, coeffs=coeffs, observe_zero_cells=True)
    report = simulate_allocation(frame, rounded, replicates=1000, n_boot=200, seed=42)

    cv_ref = math.sqrt(res.value)
    rel = np.abs(report.mc_cv - cv_ref) / cv_ref
    assert np.all(rel <= 0.10)
    for a, b in itertools.combinations(range(3), 2):
        diff = abs(report.mc_cv[a] - report.mc_cv[b])
        band = 3.0 * math.hypot(report.mc_cv_se[a], report.mc_cv_se[b])
        assert diff <= band
    assert abs(report.avg_psu_count - budgets.x) <= max(
        3.0 * report.psu_count_se, 1e-9
    )
    assert abs(report.avg_ssu_count - budgets.z) <= 3.0 * report.ssu_count_se
    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0
    announce(
        10,
        f"end-to-end HR experiment: mc cv within {rel.max() * 100:.1f}% of sqrt(lambda), "
        f"budgets ({report.avg_psu_count:.1f}, {report.avg_ssu_count:.1f}) vs (30, 450) "
        f"({elapsed:.1f} s)",
    )


def test_criterion_11_cli_determinism(tmp_path):
    frame = generate_frame(
        FrameParams(subpopulations=2, psu_strata=1, psus_per_stratum=10, units_per_cell=20),
        seed=7,
    )
    frame_path = tmp_path / "frame.csv"
    save_unit_rows(frame_path, frame.unit_rows())

    def run_cli(args, out_name):
        out = tmp_path / out_name
        cmd = [
            sys.executable,
            "-m",
            "eqalloc.cli",
            *args,
            "--out",
            str(out),
        ]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        return out.read_bytes()

    alloc_args = [
        "allocate", "--frame", str(frame_path), "--scheme", "TWO_STAGE_HR",
        "--m", "6", "--n", "60",
    ]
    assert run_cli(alloc_args, "a1.txt") == run_cli(alloc_args, "a2.txt")

    sim_args = [
        "simulate", "--frame", str(frame_path), "--scheme", "TWO_STAGE_HR",
        "--m", "6", "--n", "60", "--replicates", "30", "--bootstrap", "20",
        "--seed", "12345",
    ]
    assert run_cli(sim_args, "s1.txt") == run_cli(sim_args, "s2.txt")
    announce(11, "CLI byte-identical reports for allocate and simulate")
