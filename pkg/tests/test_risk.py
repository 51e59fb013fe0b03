"""Difficulty scoring, heat maps, taxonomy data, and chain validation."""

import json

import pytest

from amtamper import risk
from amtamper.errors import TaxonomyError


# ---------------------------------------------------------------------------
# scoring


def test_equal_weight_trio():
    assert risk.score((2, 1, 2)) == pytest.approx(5.0 / 3.0)
    assert risk.display_score(risk.score((2, 1, 2))) == "1.7"


def test_display_rounds_half_up():
    assert risk.display_score(1.65) == "1.7"
    assert risk.display_score(1.25) == "1.3"
    assert risk.display_score(2.0) == "2.0"
    assert risk.display_score(2.25) == "2.3"


def test_score_bounds():
    assert risk.score((1, 1, 1)) == 1.0
    assert risk.score((3, 3, 3)) == 3.0


def test_score_with_custom_weights():
    w = risk.Weights((0.5, 0.25, 0.25))
    assert risk.score((2, 1, 2), w) == pytest.approx(1.75)


def test_factor_values_validated():
    with pytest.raises(TaxonomyError):
        risk.score((0, 1, 2))
    with pytest.raises(TaxonomyError):
        risk.score((1, 2, 4))
    with pytest.raises(TaxonomyError):
        risk.score(())


def test_weights_validated():
    with pytest.raises(TaxonomyError):
        risk.Weights((0.5, 0.6))
    with pytest.raises(TaxonomyError):
        risk.Weights((-0.5, 1.5))
    with pytest.raises(TaxonomyError):
        risk.score((1, 2), risk.Weights((0.5, 0.25, 0.25)))


def test_weights_equal_constructor():
    w = risk.Weights.equal(4)
    assert sum(w.values) == pytest.approx(1.0)
    assert len(w.values) == 4


def test_vector_and_manipulation_assessments():
    v = risk.VectorAssessment(
        hacking_skill=2, access_level=1, tool_availability=2
    )
    assert risk.score_vector(v) == pytest.approx(5.0 / 3.0)
    m = risk.ManipulationAssessment(am_proficiency=2, engineering_knowledge=3)
    assert risk.score_manipulation(m) == pytest.approx(2.5)


# ---------------------------------------------------------------------------
# buckets and heat map


def test_bucket_boundaries():
    assert risk.bucket_of(1.0) == "low"
    assert risk.bucket_of(5.0 / 3.0) == "medium"
    assert risk.bucket_of(2.0) == "medium"
    assert risk.bucket_of(7.0 / 3.0) == "high"
    assert risk.bucket_of(3.0) == "high"


def test_heat_map_cells():
    vectors = [("a", 1.0), ("b", 3.0)]
    manipulations = [("x", 2.0), ("y", 1.0)]
    hm = risk.heat_map(vectors, manipulations)
    assert hm.rows == ("a", "b")
    assert hm.columns == ("x", "y")
    assert hm.scores[0][0] == pytest.approx(1.5)
    assert hm.scores[1][1] == pytest.approx(2.0)
    assert hm.combiner == "mean"


def test_heat_map_max_min_combiners():
    vectors = [("a", 1.0)]
    manipulations = [("x", 3.0)]
    assert risk.heat_map(vectors, manipulations, combiner="max").scores[0][0] == 3.0
    assert risk.heat_map(vectors, manipulations, combiner="min").scores[0][0] == 1.0


def test_heat_map_rejects_unknown_combiner():
    with pytest.raises(TaxonomyError):
        risk.heat_map([("a", 1.0)], [("x", 1.0)], combiner="median")


def test_heat_map_rejects_empty_axes():
    with pytest.raises(TaxonomyError):
        risk.heat_map([], [("x", 1.0)])
    with pytest.raises(TaxonomyError):
        risk.heat_map([("a", 1.0)], [])


def test_heat_map_csv_and_json():
    hm = risk.heat_map([("a", 1.0)], [("x", 2.0)])
    csv = hm.to_csv()
    assert csv.splitlines()[0] == "vector,x"
    assert csv.splitlines()[1] == "a,1.5000"
    payload = hm.to_json_dict()
    cell = payload["cells"][0][0]
    assert cell["display"] == "1.5"
    assert cell["bucket"] == "low"


# ---------------------------------------------------------------------------
# bundled catalog


def test_builtin_catalog_scores():
    catalog = risk.builtin_catalog()
    assert set(catalog.vector_assessments) == {
        "code_injection",
        "general_infiltration",
        "compromised_software",
        "software_updates",
        "open_source_backdoor",
        "hardware_trojans",
        "firmware_updates",
        "general_network_attacks",
        "protocol_vulnerabilities",
    }
    a = catalog.vector_assessments["code_injection"]
    assert a.factors == (2, 1, 2)
    assert risk.display_score(risk.score_vector(a)) == "1.7"
    assert catalog.vector_assessments["hardware_trojans"].factors == (3, 2, 2)
    assert catalog.manipulation_assessments == {}


def test_catalog_check_flags_inconsistent_rows():
    findings = {f["vector"]: f for f in risk.catalog_check(risk.builtin_catalog())}

    consistent = ("code_injection", "general_infiltration", "open_source_backdoor")
    for vector in consistent:
        f = findings[vector]
        assert f["matches_equal_weights"]
        assert f["reachable_under_any_weights"]
        assert f["listed_score"] == "1.7"

    # published rows scoring (2,2,2) as 2.3 or 2.65: every normalized weight
    # vector yields exactly 2.0, so those scores are unreachable
    unreachable = (
        "compromised_software",
        "software_updates",
        "general_network_attacks",
        "protocol_vulnerabilities",
        "firmware_updates",
    )
    for vector in unreachable:
        f = findings[vector]
        assert not f["matches_equal_weights"]
        assert not f["reachable_under_any_weights"]

    # (3,2,2) listed as 2.65: not the equal-weight value (2.3) but reachable
    # with weights (0.65, 0.35/2, 0.35/2)
    trojans = findings["hardware_trojans"]
    assert not trojans["matches_equal_weights"]
    assert trojans["reachable_under_any_weights"]


def test_catalog_check_equal_weight_displays():
    findings = {f["vector"]: f for f in risk.catalog_check(risk.builtin_catalog())}
    assert findings["compromised_software"]["equal_weight_display"] == "2.0"
    assert findings["hardware_trojans"]["equal_weight_display"] == "2.3"


# ---------------------------------------------------------------------------
# taxonomy and chains


def test_load_taxonomy():
    taxonomy = risk.load_taxonomy()
    assert "part_sabotage" in taxonomy.goals
    assert "controller_pc" in taxonomy.compromised_elements
    assert "general_infiltration" in taxonomy.attack_vectors


def test_taxonomy_rejects_unknown_references():
    with pytest.raises(TaxonomyError):
        risk.Taxonomy(
            goals={"g": {"name": "G"}},
            influences={"i": {"name": "I", "goals": ["missing"]}},
            influenced_elements={},
            compromised_elements={},
            attack_vectors={},
        )


def test_taxonomy_schema_version_checked():
    with pytest.raises(TaxonomyError):
        risk.Taxonomy.from_json_dict({"schema_version": 99})


def test_case_study_chain_valid():
    taxonomy = risk.load_taxonomy()
    chain = risk.AttackChain(
        goal="part_sabotage",
        influence="defects",
        influenced_element="am_files",
        compromised_element="controller_pc",
        attack_vector="general_infiltration",
    )
    assert risk.validate_chain(chain, taxonomy) == []


def test_designer_configuration_chain_rejected():
    taxonomy = risk.load_taxonomy()
    chain = risk.AttackChain(
        goal="part_sabotage",
        influence="process_parameters",
        influenced_element="configuration",
        compromised_element="external_designer",
        attack_vector="general_infiltration",
    )
    violations = risk.validate_chain(chain, taxonomy)
    assert violations
    assert any("cannot reach 'configuration'" in v for v in violations)


def test_chain_with_unknown_id_raises():
    taxonomy = risk.load_taxonomy()
    chain = risk.AttackChain(
        goal="world_domination",
        influence="defects",
        influenced_element="am_files",
        compromised_element="controller_pc",
        attack_vector="general_infiltration",
    )
    with pytest.raises(TaxonomyError):
        risk.validate_chain(chain, taxonomy)


def test_chain_missing_part_raises():
    taxonomy = risk.load_taxonomy()
    chain = risk.AttackChain(
        goal="part_sabotage",
        influence=None,
        influenced_element="am_files",
        compromised_element="controller_pc",
        attack_vector="general_infiltration",
    )
    with pytest.raises(TaxonomyError):
        risk.validate_chain(chain, taxonomy)


def test_every_vector_compromises_something():
    taxonomy = risk.load_taxonomy()
    for vector_id, vector in taxonomy.attack_vectors.items():
        assert vector["compromises"], vector_id
        for element in vector["compromises"]:
            assert element in taxonomy.compromised_elements


def test_influence_goal_closure():
    taxonomy = risk.load_taxonomy()
    for influence in taxonomy.influences.values():
        for goal in influence["goals"]:
            assert goal in taxonomy.goals


def test_all_valid_chains_enumerable():
    # every path the data admits validates; spot-check by brute force
    taxonomy = risk.load_taxonomy()
    valid = 0
    for goal in taxonomy.goals:
        for influence_id, influence in taxonomy.influences.items():
            if goal not in influence["goals"]:
                continue
            for element_id, element in taxonomy.influenced_elements.items():
                if influence_id not in element["influences"]:
                    continue
                for comp_id, comp in taxonomy.compromised_elements.items():
                    if element_id not in comp["reaches"]:
                        continue
                    for vec_id, vec in taxonomy.attack_vectors.items():
                        if comp_id not in vec["compromises"]:
                            continue
                        chain = risk.AttackChain(
                            goal=goal,
                            influence=influence_id,
                            influenced_element=element_id,
                            compromised_element=comp_id,
                            attack_vector=vec_id,
                        )
                        assert risk.validate_chain(chain, taxonomy) == []
                        valid += 1
    assert valid > 50


def test_taxonomy_json_file_is_schema_one():
    from importlib import resources

    data = json.loads(
        resources.files("amtamper.data").joinpath("taxonomy.json").read_text()
    )
    assert data["schema_version"] == 1
