"""Deterministic text and JSON renderings of allocation and simulation results.

The table format opens with a ``#``-prefixed header block followed by one
CSV-ish row per cell; floats are formatted with %.12g so identical inputs
produce identical bytes.
"""

import json
import math

import numpy as np


def constraint_residuals(result, coeffs=None):
    """Relative budget residuals of the real-valued allocation."""
    x_sum = math.fsum(float(v) for row in result.first_stage for v in row)
    res_x = abs(x_sum - result.budgets.x) / result.budgets.x
    res_z = None
    if result.scheme.two_stage and coeffs is not None:
        z_sum = math.fsum(
            float(result.first_stage[j][h])
            * float(np.dot(coeffs.size_weights[j][h], result.second_stage[j][h]))
            for j in range(coeffs.n_subpopulations)
            for h in range(len(coeffs.first_stage[j]))
        )
        res_z = abs(z_sum - result.budgets.z) / result.budgets.z
    return res_x, res_z


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        if np.isnan(value):
            return "nan"
        return format(float(value), ".12g")
    return str(value)


def _header_lines(pairs):
    return [f"# {key}: {_fmt(value)}" for key, value in pairs]


def allocation_table(result, coeffs=None):
    """Render an AllocationResult as the diffable table format."""
    res_x, res_z = constraint_residuals(result, coeffs)
    lines = _header_lines(
        [
            ("report", "allocation"),
            ("schema_version", 1),
            ("scheme", result.scheme.name),
            ("budget_first_stage", result.budgets.x),
            ("budget_second_stage", result.budgets.z),
            ("lambda", result.value),
            ("cv", np.sqrt(result.value)),
            ("condition_value", result.condition_value),
            ("condition_margin", result.condition_value - 1.0),
            ("first_stage_residual", res_x),
            ("second_stage_residual", res_z),
            ("capacity_adjusted", str(result.capacity_adjusted).lower()),
            ("rounding_degradation", result.rounding_degradation),
        ]
    )
    lines.append("subpop,kappa,T_reduced,T_original,cv_original")
    original = result.subpop_T_original()
    for j in range(len(result.per_subpop_T)):
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    j,
                    result.priority[j],
                    result.per_subpop_T[j],
                    original[j],
                    np.sqrt(original[j]),
                )
            )
        )
    lines.append("stage,subpop,stratum,psu,ssu_stratum,real,rounded")
    for j, row in enumerate(result.first_stage):
        for h in range(len(row)):
            rounded = (
                result.rounded_first[j][h] if result.rounded_first is not None else None
            )
            lines.append(
                ",".join(_fmt(v) for v in ("first", j, h, "", "", row[h], rounded))
            )
    for j, strata in enumerate(result.second_stage):
        for h, cells in enumerate(strata):
            labels = None
            if coeffs is not None:
                labels = coeffs.cell_labels[j][h]
            for k in range(len(cells)):
                label = labels[k] if labels is not None else k
                psu, ssu = (label if isinstance(label, tuple) else ("", ""))
                rounded = (
                    result.rounded_second[j][h][k]
                    if result.rounded_second is not None
                    else None
                )
                lines.append(
                    ",".join(
                        _fmt(v)
                        for v in (
                            "second",
                            j,
                            h,
                            "" if psu is None else psu,
                            "" if ssu is None else ssu,
                            cells[k],
                            rounded,
                        )
                    )
                )
    return "\n".join(lines) + "\n"


def allocation_tree(result, coeffs=None):
    """Render an AllocationResult as a JSON document."""
    res_x, res_z = constraint_residuals(result, coeffs)
    doc = {
        "report": "allocation",
        "schema_version": 1,
        "scheme": result.scheme.name,
        "budgets": {"first_stage": result.budgets.x, "second_stage": result.budgets.z},
        "lambda": result.value,
        "cv": float(np.sqrt(result.value)),
        "condition_value": result.condition_value,
        "first_stage_residual": res_x,
        "second_stage_residual": res_z,
        "capacity_adjusted": result.capacity_adjusted,
        "rounding_degradation": result.rounding_degradation,
        "vector": [float(v) for v in result.vector],
        "subpopulations": [],
    }
    original = result.subpop_T_original()
    for j, row in enumerate(result.first_stage):
        sub = {
            "kappa": float(result.priority[j]),
            "T_reduced": float(result.per_subpop_T[j]),
            "T_original": float(original[j]),
            "strata": [],
        }
        for h in range(len(row)):
            stratum = {"first_stage": float(row[h])}
            if result.rounded_first is not None:
                stratum["first_stage_rounded"] = int(result.rounded_first[j][h])
            if result.second_stage and len(result.second_stage[j]) > 0:
                cells = result.second_stage[j][h]
                labels = coeffs.cell_labels[j][h] if coeffs is not None else None
                stratum["cells"] = []
                for k in range(len(cells)):
                    cell = {"second_stage": float(cells[k])}
                    if labels is not None and labels[k] is not None:
                        cell["psu"], cell["ssu_stratum"] = labels[k]
                    if result.rounded_second is not None:
                        cell["second_stage_rounded"] = int(result.rounded_second[j][h][k])
                    stratum["cells"].append(cell)
            sub["strata"].append(stratum)
        doc["subpopulations"].append(sub)
    return json.dumps(doc, indent=1) + "\n"


def simulation_table(reports):
    """Render one or more SimulationReports as the table format."""
    lines = []
    for rep in reports:
        lines += _header_lines(
            [
                ("report", "simulation"),
                ("schema_version", 1),
                ("label", rep.label),
                ("scheme", rep.scheme.name),
                ("replicates", rep.replicates),
                ("bootstrap_replicates", rep.bootstrap_replicates),
                ("seed", rep.seed),
                ("avg_psu_count", rep.avg_psu_count),
                ("psu_count_se", rep.psu_count_se),
                ("avg_ssu_count", rep.avg_ssu_count),
                ("ssu_count_se", rep.ssu_count_se),
                ("bootstrap_se_defined", str(rep.bootstrap_se_defined).lower()),
            ]
        )
        lines.append(
            "subpop,true_total,estimate_mean,theoretical_cv,mc_cv,mc_cv_se,"
            "boot_cv_mean,boot_cv_se"
        )
        for j in range(len(rep.mc_cv)):
            lines.append(
                ",".join(
                    _fmt(v)
                    for v in (
                        j,
                        rep.true_totals[j],
                        rep.estimate_mean[j],
                        rep.theoretical_cv[j],
                        rep.mc_cv[j],
                        rep.mc_cv_se[j],
                        rep.boot_cv_mean[j],
                        rep.boot_cv_se[j],
                    )
                )
            )
    return "\n".join(lines) + "\n"


def simulation_tree(reports):
    docs = []
    for rep in reports:
        docs.append(
            {
                "report": "simulation",
                "schema_version": 1,
                "label": rep.label,
                "scheme": rep.scheme.name,
                "replicates": rep.replicates,
                "bootstrap_replicates": rep.bootstrap_replicates,
                "seed": rep.seed,
                "avg_psu_count": rep.avg_psu_count,
                "psu_count_se": rep.psu_count_se,
                "avg_ssu_count": rep.avg_ssu_count,
                "ssu_count_se": rep.ssu_count_se,
                "bootstrap_se_defined": rep.bootstrap_se_defined,
                "subpopulations": [
                    {
                        "true_total": float(rep.true_totals[j]),
                        "estimate_mean": float(rep.estimate_mean[j]),
                        "theoretical_cv": float(rep.theoretical_cv[j]),
                        "mc_cv": float(rep.mc_cv[j]),
                        "mc_cv_se": float(rep.mc_cv_se[j]),
                        "boot_cv_mean": float(rep.boot_cv_mean[j]),
                        "boot_cv_se": float(rep.boot_cv_se[j]),
                    }
                    for j in range(len(rep.mc_cv))
                ],
            }
        )
    return json.dumps(docs, indent=1) + "\n"


def check_table(entries):
    """Render cmd_check diagnostics: a list of (key, value) pairs."""
    return "\n".join(_header_lines(entries)) + "\n"
