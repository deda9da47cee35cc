"""Reading and writing population frames.

Three formats are supported, all versioned with ``schema_version`` 1:

* tree: one JSON document mirroring the population dataclasses; SSU strata
  may carry either summary fields (``N``, ``S2``) or raw unit values
  (``y``), raw values are aggregated on load and summaries win when both
  are present (``verify=True`` cross-checks them).
* flat: CSV, one row per SSU stratum with columns
  subpop, psu_stratum, psu_id, ssu_stratum, N, S2, t_psu, z_raw
  (two-stage summaries only).
* units: CSV, one row per unit with columns
  subpop, psu_stratum, psu_id, ssu_stratum, unit, y, z_raw
  (full frames for simulation).

CSV files open with a ``# schema_version=1`` comment line.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .population import (
    Psu,
    PsuStratum,
    SingleStagePopulation,
    SsuStratum,
    Stratum,
    Subpopulation,
    TwoStagePopulation,
    TwoStageSubpopulation,
)

SCHEMA_VERSION = 1


def _fail(msg):
    raise ParseError(msg)


def _agg_cell(node, path, verify):
    has_summary = "N" in node and "S2" in node
    has_units = "y" in node
    if not has_summary and not has_units:
        _fail(f"{path}: SSU stratum needs either N and S2 or y")
    if has_units:
        y = np.asarray(node["y"], dtype=np.float64)
        units = len(y)
        var = float(y.var(ddof=1)) if units > 1 else 0.0
        if has_summary:
            if verify:
                ref = max(abs(var), abs(float(node["S2"])), 1e-300)
                if int(node["N"]) != units or abs(float(node["S2"]) - var) > 1e-8 * ref:
                    raise ValidationError(
                        [f"{path}: summaries disagree with raw unit values"]
                    )
            return SsuStratum(units=int(node["N"]), var=float(node["S2"])), float(y.sum())
        return SsuStratum(units=units, var=var), float(y.sum())
    return SsuStratum(units=int(node["N"]), var=float(node["S2"])), None


def _tree_to_population(doc, verify=False):
    design = doc.get("design")
    subs = doc.get("subpopulations")
    if design not in ("single_stage", "two_stage") or not isinstance(subs, list):
        _fail("document needs design single_stage|two_stage and a subpopulations list")
    if design == "single_stage":
        out = []
        for j, sub in enumerate(subs):
            try:
                strata = tuple(
                    Stratum(units=int(s["N"]), sd=float(s["S"])) for s in sub["strata"]
                )
                out.append(Subpopulation(total=float(sub["total"]), strata=strata))
            except (KeyError, TypeError, ValueError) as exc:
                _fail(f"subpop {j}: {exc!r}")
        return SingleStagePopulation(subpopulations=tuple(out)).validate()
    out = []
    for j, sub in enumerate(subs):
        strata = []
        for h, st in enumerate(sub.get("psu_strata", [])):
            psus = []
            for i, p in enumerate(st.get("psus", [])):
                path = f"subpop {j} / psu_stratum {h} / psu {i}"
                cells, totals = [], []
                for g, cell in enumerate(p.get("ssu_strata", [])):
                    parsed, raw_total = _agg_cell(cell, f"{path} / ssu_stratum {g}", verify)
                    cells.append(parsed)
                    totals.append(raw_total)
                if "t_psu" in p:
                    total = float(p["t_psu"])
                    if verify and all(t is not None for t in totals) and totals:
                        raw = math.fsum(totals)
                        if abs(raw - total) > 1e-8 * max(abs(raw), abs(total), 1e-300):
                            raise ValidationError(
                                [f"{path}: stored total {total!r} differs from raw sum {raw!r}"]
                            )
                elif all(t is not None for t in totals) and totals:
                    total = math.fsum(totals)
                else:
                    _fail(f"{path}: needs t_psu or raw unit values in every SSU stratum")
                psus.append(
                    Psu(
                        total=total,
                        ssu_strata=tuple(cells),
                        size_raw=float(p["z_raw"]) if p.get("z_raw") is not None else None,
                    )
                )
            d2 = st.get("D2")
            expected_m = st.get("M")
            if expected_m is not None and int(expected_m) != len(psus):
                raise ValidationError(
                    [f"subpop {j} / psu_stratum {h}: M={expected_m} but {len(psus)} PSUs listed"]
                )
            strata.append(
                PsuStratum(psus=tuple(psus), between_var=float(d2) if d2 is not None else None)
            )
        out.append(TwoStageSubpopulation(psu_strata=tuple(strata)))
    return TwoStagePopulation(subpopulations=tuple(out)).validate()


def _population_to_tree(pop):
    if isinstance(pop, SingleStagePopulation):
        return {
            "schema_version": SCHEMA_VERSION,
            "design": "single_stage",
            "subpopulations": [
                {
                    "total": sub.total,
                    "strata": [{"N": st.units, "S": st.sd} for st in sub.strata],
                }
                for sub in pop.subpopulations
            ],
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "design": "two_stage",
        "subpopulations": [
            {
                "psu_strata": [
                    {
                        "M": st.psu_count,
                        "D2": st.between_var,
                        "psus": [
                            {
                                "t_psu": p.total,
                                "z_raw": p.size_raw,
                                "ssu_strata": [
                                    {"N": c.units, "S2": c.var} for c in p.ssu_strata
                                ],
                            }
                            for p in st.psus
                        ],
                    }
                    for st in sub.psu_strata
                ]
            }
            for sub in pop.subpopulations
        ],
    }


FLAT_COLUMNS = ["subpop", "psu_stratum", "psu_id", "ssu_stratum", "N", "S2", "t_psu", "z_raw"]
UNIT_COLUMNS = ["subpop", "psu_stratum", "psu_id", "ssu_stratum", "unit", "y", "z_raw"]


def _read_csv_rows(path, columns):
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#") or "schema_version=" not in first:
            _fail(f"{path}: missing '# schema_version=...' header line")
        version = first.split("schema_version=")[1].strip()
        if version != str(SCHEMA_VERSION):
            _fail(f"{path}: unsupported schema_version {version}")
        reader = csv.DictReader(fh)
        if reader.fieldnames != columns:
            _fail(f"{path}: expected columns {columns}, got {reader.fieldnames}")
        return list(reader)


def _flat_to_population(path):
    rows = _read_csv_rows(path, FLAT_COLUMNS)
    tree = {}
    try:
        for row in rows:
            key = (int(row["subpop"]), int(row["psu_stratum"]), int(row["psu_id"]))
            psu = tree.setdefault(key, {"cells": {}, "t_psu": None, "z_raw": None})
            psu["cells"][int(row["ssu_stratum"])] = SsuStratum(
                units=int(row["N"]), var=float(row["S2"])
            )
            psu["t_psu"] = float(row["t_psu"])
            psu["z_raw"] = float(row["z_raw"]) if row["z_raw"] != "" else None
    except (KeyError, TypeError, ValueError) as exc:
        _fail(f"{path}: {exc!r}")
    return _assemble_two_stage(tree, lambda info: Psu(
        total=info["t_psu"],
        size_raw=info["z_raw"],
        ssu_strata=tuple(info["cells"][g] for g in sorted(info["cells"])),
    ))


def _assemble_two_stage(tree, make_psu):
    subs = {}
    for (j, h, i), info in sorted(tree.items()):
        subs.setdefault(j, {}).setdefault(h, {})[i] = make_psu(info)
    out = []
    for j in sorted(subs):
        strata = tuple(
            PsuStratum(psus=tuple(subs[j][h][i] for i in sorted(subs[j][h])))
            for h in sorted(subs[j])
        )
        out.append(TwoStageSubpopulation(psu_strata=strata))
    return TwoStagePopulation(subpopulations=tuple(out)).validate()


def sniff_format(path):
    """Best-effort format detection: tree, flat, or units."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        return "tree"
    try:
        with open(path) as fh:
            first = fh.readline()
            header = fh.readline()
    except OSError as exc:
        _fail(f"{path}: {exc}")
    if first.lstrip().startswith("{"):
        return "tree"
    if header.strip() == ",".join(UNIT_COLUMNS):
        return "units"
    return "flat"


def load_population(path, format=None, verify=False):
    """Load a population frame, validating invariants on the way in.

    ``format`` is tree|flat, inferred from the extension when omitted
    (.json reads as tree, .csv as flat).
    """
    path = Path(path)
    if format is None:
        format = "tree" if path.suffix.lower() == ".json" else "flat"
    if format == "tree":
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            _fail(f"{path}: {exc}")
        if doc.get("schema_version") != SCHEMA_VERSION:
            _fail(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
        return _tree_to_population(doc, verify=verify)
    if format == "flat":
        return _flat_to_population(path)
    raise ValueError(f"unknown population format: {format!r}")


def save_population(pop, path, format=None):
    """Write a population frame in the tree or flat format."""
    path = Path(path)
    if format is None:
        format = "tree" if path.suffix.lower() == ".json" else "flat"
    if format == "tree":
        path.write_text(json.dumps(_population_to_tree(pop), indent=1) + "\n")
        return
    if format != "flat":
        raise ValueError(f"unknown population format: {format!r}")
    if not isinstance(pop, TwoStagePopulation):
        raise ValueError("the flat format only describes two-stage populations")
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(FLAT_COLUMNS)
        for j, sub in enumerate(pop.subpopulations):
            for h, st in enumerate(sub.psu_strata):
                for i, p in enumerate(st.psus):
                    for g, c in enumerate(p.ssu_strata):
                        writer.writerow(
                            [
                                j,
                                h,
                                i,
                                g,
                                c.units,
                                repr(c.var),
                                repr(p.total),
                                "" if p.size_raw is None else repr(p.size_raw),
                            ]
                        )


def load_unit_rows(path):
    """Read the unit-level CSV into nested {(j,h,i): {g: [y...], z_raw}}."""
    rows = _read_csv_rows(path, UNIT_COLUMNS)
    tree = {}
    try:
        for row in rows:
            key = (int(row["subpop"]), int(row["psu_stratum"]), int(row["psu_id"]))
            psu = tree.setdefault(key, {"cells": {}, "z_raw": None})
            psu["cells"].setdefault(int(row["ssu_stratum"]), []).append(float(row["y"]))
            psu["z_raw"] = float(row["z_raw"]) if row["z_raw"] != "" else None
    except (KeyError, TypeError, ValueError) as exc:
        _fail(f"{path}: {exc!r}")
    return tree


def save_unit_rows(path, iter_rows):
    """Write unit rows (j, h, i, g, unit, y, z_raw) to the unit-level CSV."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(UNIT_COLUMNS)
        for j, h, i, g, unit, y, z_raw in iter_rows:
            writer.writerow(
                [j, h, i, g, unit, repr(float(y)), "" if z_raw is None else repr(float(z_raw))]
            )
