"""Population and frame file formats."""

import json

import pytest

from eqalloc.errors import ParseError, ValidationError
from eqalloc.io import (
    load_population,
    load_unit_rows,
    save_population,
    save_unit_rows,
    sniff_format,
)
from eqalloc.population import (
    SingleStagePopulation,
    Stratum,
    Subpopulation,
    TwoStagePopulation,
)
from eqalloc.simulate import FrameParams, frame_from_unit_tree, generate_frame


@pytest.fixture
def two_stage_pop():
    frame = generate_frame(
        FrameParams(subpopulations=2, psu_strata=2, psus_per_stratum=4, units_per_cell=10),
        seed=77,
    )
    return frame.to_population(), frame


def test_minimal_single_stage_tree(tmp_path):
    doc = {
        "schema_version": 1,
        "design": "single_stage",
        "subpopulations": [
            {"total": 1000.0, "strata": [{"N": 100, "S": 10.0}]}
        ],
    }
    path = tmp_path / "pop.json"
    path.write_text(json.dumps(doc))
    pop = load_population(path)
    assert isinstance(pop, SingleStagePopulation)
    assert pop.subpopulations[0].strata[0].units == 100


def test_tree_round_trip(tmp_path, two_stage_pop):
    pop, _ = two_stage_pop
    path = tmp_path / "pop.json"
    save_population(pop, path)
    assert load_population(path) == pop


def test_flat_round_trip(tmp_path, two_stage_pop):
    pop, _ = two_stage_pop
    path = tmp_path / "pop.csv"
    save_population(pop, path, format="flat")
    assert load_population(path) == pop


def test_unit_round_trip(tmp_path, two_stage_pop):
    pop, frame = two_stage_pop
    path = tmp_path / "units.csv"
    save_unit_rows(path, frame.unit_rows())
    rebuilt = frame_from_unit_tree(load_unit_rows(path))
    assert rebuilt.to_population() == pop


def test_single_stage_round_trip(tmp_path):
    pop = SingleStagePopulation(
        subpopulations=(
            Subpopulation(
                total=512.5,
                strata=(Stratum(units=30, sd=2.25), Stratum(units=70, sd=1.125)),
            ),
        )
    )
    path = tmp_path / "single.json"
    save_population(pop, path)
    assert load_population(path) == pop


def test_bad_share_sum_named(tmp_path):
    doc = {
        "schema_version": 1,
        "design": "two_stage",
        "subpopulations": [
            {
                "psu_strata": [
                    {
                        "psus": [
                            {
                                "t_psu": 10.0,
                                "z_raw": 1.0,
                                "ssu_strata": [{"N": 5, "S2": 1.0}],
                            },
                            {
                                "t_psu": 12.0,
                                "z_raw": None,
                                "ssu_strata": [{"N": 5, "S2": 1.0}],
                            },
                        ]
                    }
                ]
            }
        ],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValidationError) as err:
        load_population(path)
    assert "psu_stratum 0" in str(err.value)


def test_raw_units_aggregate(tmp_path):
    doc = {
        "schema_version": 1,
        "design": "two_stage",
        "subpopulations": [
            {
                "psu_strata": [
                    {
                        "psus": [
                            {"ssu_strata": [{"y": [1.0, 2.0, 3.0]}]},
                            {"ssu_strata": [{"y": [4.0, 6.0, 8.0]}]},
                        ]
                    }
                ]
            }
        ],
    }
    path = tmp_path / "raw.json"
    path.write_text(json.dumps(doc))
    pop = load_population(path)
    st = pop.subpopulations[0].psu_strata[0]
    assert st.psus[0].total == 6.0
    assert st.psus[0].ssu_strata[0].units == 3
    assert st.psus[0].ssu_strata[0].var == pytest.approx(1.0)
    assert st.psus[1].ssu_strata[0].var == pytest.approx(4.0)


def test_summaries_win_and_verify_flags_conflicts(tmp_path):
    doc = {
        "schema_version": 1,
        "design": "two_stage",
        "subpopulations": [
            {
                "psu_strata": [
                    {
                        "psus": [
                            {
                                "t_psu": 6.0,
                                "ssu_strata": [{"N": 3, "S2": 99.0, "y": [1.0, 2.0, 3.0]}],
                            },
                            {
                                "t_psu": 18.0,
                                "ssu_strata": [{"N": 3, "S2": 4.0, "y": [4.0, 6.0, 8.0]}],
                            },
                        ]
                    }
                ]
            }
        ],
    }
    path = tmp_path / "mixed.json"
    path.write_text(json.dumps(doc))
    pop = load_population(path)  # summaries take precedence silently
    assert pop.subpopulations[0].psu_strata[0].psus[0].ssu_strata[0].var == 99.0
    with pytest.raises(ValidationError):
        load_population(path, verify=True)


def test_schema_version_checked(tmp_path):
    path = tmp_path / "pop.json"
    path.write_text(json.dumps({"schema_version": 99, "design": "single_stage"}))
    with pytest.raises(ParseError):
        load_population(path)
    csv_path = tmp_path / "pop.csv"
    csv_path.write_text("subpop,psu_stratum\n")
    with pytest.raises(ParseError):
        load_population(csv_path)


def test_sniff(tmp_path, two_stage_pop):
    pop, frame = two_stage_pop
    tree = tmp_path / "a.json"
    flat = tmp_path / "b.csv"
    units = tmp_path / "c.csv"
    save_population(pop, tree)
    save_population(pop, flat, format="flat")
    save_unit_rows(units, frame.unit_rows())
    assert sniff_format(tree) == "tree"
    assert sniff_format(flat) == "flat"
    assert sniff_format(units) == "units"
