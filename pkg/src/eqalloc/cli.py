"""Command-line front end.

Subcommands: check (frame validation and solvability diagnostics),
allocate (equal-precision allocation report), simulate (Monte-Carlo
verification), generate (synthetic unit frames), show-config (effective
defaults).  Reports go to --out or stdout; diagnostics go to stderr.

Exit codes: 0 success, 2 frame or coefficient validation failure,
3 solvability condition failure, 1 other errors.
"""

import argparse
import json
import sys

import numpy as np

from . import io, report
from .allocation import (
    Budgets,
    SchemeId,
    allocate,
    load_vectors_from,
    proportional_allocation,
    round_allocation,
)
from .eigen import build_matrix, condition_value_rank2, jacobi_eigh
from .errors import (
    ConditionNotSatisfied,
    EqallocError,
    MissingSizeMeasure,
    MultiplePositiveEigenvalues,
    MultipleSsuStrata,
    NonpositiveGamma,
    NoPositiveEigenvalue,
    ParseError,
    ValidationError,
    ZeroTotal,
)
from .population import (
    derive_hr,
    derive_single_stage,
    derive_two_stage_fixed_ssu,
    derive_two_stage_srswor,
    gamma_values,
)
from .simulate import (
    FrameParams,
    frame_from_unit_tree,
    generate_frame,
    run_experiment,
    simulate_allocation,
)

_VALIDATION_ERRORS = (
    ParseError,
    ValidationError,
    NonpositiveGamma,
    MultipleSsuStrata,
    MissingSizeMeasure,
    ZeroTotal,
)
_CONDITION_ERRORS = (
    ConditionNotSatisfied,
    NoPositiveEigenvalue,
    MultiplePositiveEigenvalues,
)

DEFAULTS = {
    "scheme": "TWO_STAGE_HR",
    "m": None,
    "n": None,
    "kappa": None,
    "seed": 0,
    "replicates": 100,
    "bootstrap": 500,
    "round": True,
    "force": False,
    "format": "table",
    "threads": 1,
    "baseline": "proportional",
    "verify": False,
    "subpops": 3,
    "psu_strata": 2,
    "psus": 12,
    "ssu_strata": 1,
    "units": 40,
    "psu_spread": 0.5,
    "size_spread": 0.2,
}


def _derive(scheme, pop, kappa):
    if not scheme.two_stage:
        return derive_single_stage(pop, priority=kappa)
    if scheme is SchemeId.TWO_STAGE_SRSWOR:
        return derive_two_stage_srswor(pop, priority=kappa)
    if scheme is SchemeId.TWO_STAGE_FIXED_SSU:
        return derive_two_stage_fixed_ssu(pop, priority=kappa)
    if scheme is SchemeId.TWO_STAGE_HR:
        return derive_hr(pop, priority=kappa)
    return derive_hr(pop, priority=kappa, fixed_ssu=True)


def _budgets(scheme, cfg):
    if scheme.two_stage:
        if cfg["m"] is None or cfg["n"] is None:
            raise EqallocError(f"{scheme.name} needs --m and --n")
        return Budgets(x=float(cfg["m"]), z=float(cfg["n"]))
    if cfg["n"] is None:
        raise EqallocError(f"{scheme.name} needs --n")
    return Budgets(x=float(cfg["n"]))


def _emit(text, out_path):
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_summary_frame(cfg):
    path = cfg["frame"]
    if path is None:
        raise EqallocError("--frame is required")
    kind = io.sniff_format(path)
    if kind == "units":
        return frame_from_unit_tree(io.load_unit_rows(path)).to_population()
    return io.load_population(path, format=kind, verify=cfg["verify"])


def cmd_check(cfg):
    pop = _load_summary_frame(cfg)
    scheme = SchemeId[cfg["scheme"]]
    entries = [("report", "check"), ("frame", cfg["frame"]), ("scheme", scheme.name)]
    entries.append(("frame_valid", "true"))
    if scheme.two_stage:
        gammas = gamma_values(
            pop, pps=scheme in (SchemeId.TWO_STAGE_HR, SchemeId.TWO_STAGE_HR_FIXED_SSU)
        )
        bad = []
        for j, row in enumerate(gammas):
            for h, g in enumerate(row):
                entries.append((f"gamma[{j},{h}]", g))
                if not g > 0:
                    bad.append((j, h))
        if bad:
            entries.append(("gamma_positive", "false"))
            _emit(report.check_table(entries), cfg.get("out"))
            raise NonpositiveGamma(bad)
        entries.append(("gamma_positive", "true"))
    kappa = cfg["kappa"]
    coeffs = _derive(scheme, pop, kappa)
    needs_z = scheme.two_stage
    if cfg["n"] is None or (needs_z and cfg["m"] is None):
        entries.append(("condition", "skipped: budgets not given"))
        _emit(report.check_table(entries), cfg.get("out"))
        return 0
    budgets = _budgets(scheme, cfg)
    vectors = load_vectors_from(coeffs, budgets)
    value = condition_value_rank2(
        vectors.first_stage, vectors.second_stage, vectors.fpc_mass
    )
    entries.append(("condition_value", value))
    entries.append(("condition_margin", value - 1.0))
    entries.append(("condition_satisfied", str(value > 1.0).lower()))
    if cfg["force"]:
        matrix = build_matrix(vectors)
        scale = float(np.max(vectors.fpc_mass))
        vals, _ = jacobi_eigh(matrix.entries / scale)
        vals = vals * scale
        pattern = "".join("+" if v > 0 else "-" for v in vals)
        entries.append(("spectrum_signs", pattern))
        entries.append(("eigenvalues", " ".join(format(v, ".12g") for v in vals)))
    _emit(report.check_table(entries), cfg.get("out"))
    if value <= 1.0 and not cfg["force"]:
        raise ConditionNotSatisfied(f"condition value {value:.6g} is not above 1")
    return 0


def cmd_allocate(cfg):
    pop = _load_summary_frame(cfg)
    scheme = SchemeId[cfg["scheme"]]
    coeffs = _derive(scheme, pop, cfg["kappa"])
    budgets = _budgets(scheme, cfg)
    result = allocate(coeffs, scheme, budgets, force=cfg["force"])
    if cfg["round"]:
        result = round_allocation(result, pop, coeffs=coeffs)
    if cfg["format"] == "tree":
        text = report.allocation_tree(result, coeffs=coeffs)
    else:
        text = report.allocation_table(result, coeffs=coeffs)
    _emit(text, cfg.get("out"))
    return 0


def cmd_simulate(cfg):
    path = cfg["frame"]
    if path is None:
        raise EqallocError("--frame is required")
    frame = frame_from_unit_tree(io.load_unit_rows(path))
    pop = frame.to_population()
    scheme = SchemeId[cfg["scheme"]]
    coeffs = _derive(scheme, pop, cfg["kappa"])
    budgets = _budgets(scheme, cfg)
    optimal = allocate(coeffs, scheme, budgets, force=cfg["force"])
    optimal = round_allocation(optimal, pop, coeffs=coeffs, observe_zero_cells=True)
    reports = []
    if cfg["baseline"] == "proportional":
        base = proportional_allocation(coeffs, pop, scheme, budgets)
        base = round_allocation(base, pop, coeffs=coeffs, observe_zero_cells=True)
        reports = list(
            run_experiment(
                frame,
                optimal,
                base,
                cfg["replicates"],
                cfg["bootstrap"],
                cfg["seed"],
                labels=("optimal", "proportional"),
                threads=cfg["threads"],
            )
        )
    else:
        reports = [
            simulate_allocation(
                frame,
                optimal,
                cfg["replicates"],
                cfg["bootstrap"],
                cfg["seed"],
                label="optimal",
                threads=cfg["threads"],
            )
        ]
    if cfg["format"] == "tree":
        text = report.simulation_tree(reports)
    else:
        text = report.simulation_table(reports)
    _emit(text, cfg.get("out"))
    return 0


def cmd_generate(cfg):
    if cfg.get("out") is None:
        raise EqallocError("--out is required for generate")
    params = FrameParams(
        subpopulations=cfg["subpops"],
        psu_strata=cfg["psu_strata"],
        psus_per_stratum=cfg["psus"],
        ssu_strata_per_psu=cfg["ssu_strata"],
        units_per_cell=cfg["units"],
        psu_spread=cfg["psu_spread"],
        size_spread=cfg["size_spread"],
    )
    frame = generate_frame(params, cfg["seed"])
    io.save_unit_rows(cfg["out"], frame.unit_rows())
    print(f"wrote unit frame to {cfg['out']}", file=sys.stderr)
    return 0


def cmd_show_config(cfg):
    merged = dict(DEFAULTS)
    merged.update({k: v for k, v in cfg.items() if k in DEFAULTS and v is not None})
    sys.stdout.write(json.dumps(merged, indent=1, sort_keys=True) + "\n")
    return 0


def _parse_kappa(text):
    if text is None:
        return None
    return [float(v) for v in text.split(",")]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="eqalloc",
        description="Equal-precision sample allocation for stratified survey designs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    scheme_names = [s.name for s in SchemeId]

    def common(p, frame=True):
        if frame:
            p.add_argument("--frame", help="population or unit frame file")
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--scheme", choices=scheme_names)
        p.add_argument("--m", type=float, help="first-stage (PSU) budget")
        p.add_argument("--n", type=float, help="sample budget (SSU budget for two-stage)")
        p.add_argument("--kappa", type=_parse_kappa, help="comma list of priority weights")
        p.add_argument("--force", action="store_true", default=None,
                       help="certify the spectrum instead of requiring the condition")
        p.add_argument("--out", help="report path (stdout when absent)")
        p.add_argument("--format", choices=["table", "tree"])
        p.add_argument("--verify", action="store_true", default=None,
                       help="cross-check stored summaries against raw values")

    p_check = sub.add_parser("check", help="validate a frame and test solvability")
    common(p_check)

    p_alloc = sub.add_parser("allocate", help="compute the equal-precision allocation")
    common(p_alloc)
    group = p_alloc.add_mutually_exclusive_group()
    group.add_argument("--round", dest="round", action="store_true", default=None)
    group.add_argument("--no-round", dest="round", action="store_false", default=None)

    p_sim = sub.add_parser("simulate", help="Monte-Carlo verification on a unit frame")
    common(p_sim)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--replicates", type=int)
    p_sim.add_argument("--bootstrap", type=int)
    p_sim.add_argument("--threads", type=int)
    p_sim.add_argument("--baseline", choices=["proportional", "none"])

    p_gen = sub.add_parser("generate", help="write a synthetic unit frame")
    common(p_gen, frame=False)
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--subpops", type=int)
    p_gen.add_argument("--psu-strata", dest="psu_strata", type=int)
    p_gen.add_argument("--psus", type=int)
    p_gen.add_argument("--ssu-strata", dest="ssu_strata", type=int)
    p_gen.add_argument("--units", type=int)
    p_gen.add_argument("--psu-spread", dest="psu_spread", type=float)
    p_gen.add_argument("--size-spread", dest="size_spread", type=float)

    p_show = sub.add_parser("show-config", help="print effective defaults as JSON")
    p_show.add_argument("--config", help="JSON config file merged over the defaults")

    return parser


def _merge_config(args):
    cfg = dict(DEFAULTS)
    cfg["frame"] = None
    cfg["out"] = None
    file_cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
    cfg.update(file_cfg)
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            cfg[key] = value
    return cfg


_COMMANDS = {
    "check": cmd_check,
    "allocate": cmd_allocate,
    "simulate": cmd_simulate,
    "generate": cmd_generate,
    "show-config": cmd_show_config,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    cfg = _merge_config(args)
    try:
        return _COMMANDS[args.command](cfg)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _CONDITION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except EqallocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
