"""Attack-flow taxonomy, difficulty scoring, and the vector/manipulation
heat map.

The taxonomy (goals, influences, influenced elements, compromised elements,
attack vectors) ships as an editable JSON data file. Scores are weighted
sums of discrete 1..3 factors; display rounding is decimal half-up to one
place. The built-in catalog stores each vector's published score verbatim
as a string next to the factor triple, because several published values
cannot be reproduced by any normalized weight vector (a row of identical
factors scores exactly that factor value no matter the weights);
``catalog_check`` reports those discrepancies instead of glossing over
them. Manipulation assessments have no usable published source and must be
supplied by the user.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources

from .errors import TaxonomyError

FACTOR_VALUES = (1, 2, 3)
WEIGHT_SUM_TOL = 1e-9

VECTOR_FACTOR_NAMES = ("hacking_skill", "access_level", "tool_availability")
MANIPULATION_FACTOR_NAMES = ("am_proficiency", "engineering_knowledge")

BUCKET_LOW = "low"
BUCKET_MEDIUM = "medium"
BUCKET_HIGH = "high"
DEFAULT_BUCKET_BOUNDS = (5.0 / 3.0, 7.0 / 3.0)  # [1, 1.67) [1.67, 2.33) [2.33, 3]

COMBINERS = {
    "mean": lambda a, b: (a + b) / 2.0,
    "max": max,
    "min": min,
}


def _check_factor(value, name: str) -> int:
    if value not in FACTOR_VALUES:
        raise TaxonomyError(f"{name} must be one of {FACTOR_VALUES}, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class Weights:
    """Non-negative per-factor weights summing to 1 (within 1e-9)."""

    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if not values:
            raise TaxonomyError("weights must not be empty")
        if any(v < 0.0 for v in values):
            raise TaxonomyError("weights must be non-negative")
        if abs(sum(values) - 1.0) > WEIGHT_SUM_TOL:
            raise TaxonomyError(f"weights must sum to 1, got {sum(values)!r}")

    @classmethod
    def equal(cls, n: int) -> "Weights":
        if n < 1:
            raise TaxonomyError("need at least one factor")
        return cls(tuple(1.0 / n for _ in range(n)))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class VectorAssessment:
    """Technological difficulty of an attack vector, three 1..3 factors."""

    hacking_skill: int
    access_level: int
    tool_availability: int

    def __post_init__(self):
        for name in VECTOR_FACTOR_NAMES:
            _check_factor(getattr(self, name), name)

    @property
    def factors(self) -> tuple[int, int, int]:
        return (self.hacking_skill, self.access_level, self.tool_availability)


@dataclass(frozen=True)
class ManipulationAssessment:
    """Domain mastery needed for a manipulation, two 1..3 factors."""

    am_proficiency: int
    engineering_knowledge: int

    def __post_init__(self):
        for name in MANIPULATION_FACTOR_NAMES:
            _check_factor(getattr(self, name), name)

    @property
    def factors(self) -> tuple[int, int]:
        return (self.am_proficiency, self.engineering_knowledge)


def score(factors, weights: Weights | None = None) -> float:
    """Weighted sum of 1..3 factors; lies in [1, 3] by construction."""
    factors = tuple(factors)
    if not factors:
        raise TaxonomyError("no factors to score")
    checked = tuple(_check_factor(f, "factor") for f in factors)
    if weights is None:
        weights = Weights.equal(len(checked))
    if len(weights) != len(checked):
        raise TaxonomyError(
            f"{len(checked)} factors but {len(weights)} weights"
        )
    return float(sum(f * w for f, w in zip(checked, weights.values)))


def display_score(value: float) -> str:
    """One-decimal display rounding, half-up (1.6667 -> '1.7')."""
    return str(Decimal(repr(float(value))).quantize(Decimal("0.1"), ROUND_HALF_UP))


def score_vector(assessment: VectorAssessment, weights: Weights | None = None) -> float:
    return score(assessment.factors, weights)


def score_manipulation(
    assessment: ManipulationAssessment, weights: Weights | None = None
) -> float:
    return score(assessment.factors, weights)


# ---------------------------------------------------------------------------
# heat map


def bucket_of(value: float, bounds=DEFAULT_BUCKET_BOUNDS) -> str:
    low_edge, high_edge = bounds
    if value < low_edge:
        return BUCKET_LOW
    if value < high_edge:
        return BUCKET_MEDIUM
    return BUCKET_HIGH


@dataclass(frozen=True)
class HeatMap:
    rows: tuple[str, ...]         # vector names
    columns: tuple[str, ...]      # manipulation names
    scores: tuple[tuple[float, ...], ...]
    buckets: tuple[tuple[str, ...], ...]
    combiner: str

    def to_csv(self) -> str:
        lines = ["vector," + ",".join(self.columns)]
        for name, row in zip(self.rows, self.scores):
            lines.append(name + "," + ",".join(f"{v:.4f}" for v in row))
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "combiner": self.combiner,
            "rows": list(self.rows),
            "columns": list(self.columns),
            "cells": [
                [
                    {"score": s, "display": display_score(s), "bucket": b}
                    for s, b in zip(srow, brow)
                ]
                for srow, brow in zip(self.scores, self.buckets)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        width = max([len(r) for r in self.rows] + [6])
        cols = [max(len(c), 11) for c in self.columns]
        out = [" " * width + "  " + "  ".join(
            c.rjust(w) for c, w in zip(self.columns, cols)
        )]
        for name, srow, brow in zip(self.rows, self.scores, self.buckets):
            cells = [
                f"{display_score(s)} ({b})".rjust(w)
                for s, b, w in zip(srow, brow, cols)
            ]
            out.append(name.ljust(width) + "  " + "  ".join(cells))
        return "\n".join(out) + "\n"


def heat_map(
    vectors,
    manipulations,
    combiner: str = "mean",
    bounds=DEFAULT_BUCKET_BOUNDS,
) -> HeatMap:
    """Cross every (vector, manipulation) score pair through the combiner.

    ``vectors`` and ``manipulations`` are (name, score) sequences. Buckets
    split [1, 3] at the given bounds, low/medium/high.
    """
    vectors = list(vectors)
    manipulations = list(manipulations)
    if not vectors or not manipulations:
        raise TaxonomyError("heat map needs at least one vector and one manipulation")
    if combiner not in COMBINERS:
        raise TaxonomyError(
            f"unknown combiner {combiner!r}; choose from {sorted(COMBINERS)}"
        )
    fn = COMBINERS[combiner]
    scores = tuple(
        tuple(float(fn(vs, ms)) for _, ms in manipulations) for _, vs in vectors
    )
    buckets = tuple(
        tuple(bucket_of(v, bounds) for v in row) for row in scores
    )
    return HeatMap(
        rows=tuple(name for name, _ in vectors),
        columns=tuple(name for name, _ in manipulations),
        scores=scores,
        buckets=buckets,
        combiner=combiner,
    )


# ---------------------------------------------------------------------------
# taxonomy


@dataclass(frozen=True)
class Taxonomy:
    """Validated attack-flow graph: vectors compromise elements, elements
    reach influenced elements, influenced elements support influences,
    influences serve goals."""

    goals: dict
    influences: dict
    influenced_elements: dict
    compromised_elements: dict
    attack_vectors: dict

    def __post_init__(self):
        ids: list[str] = []
        for group in (
            self.goals,
            self.influences,
            self.influenced_elements,
            self.compromised_elements,
            self.attack_vectors,
        ):
            ids.extend(group.keys())
        duplicates = {i for i in ids if ids.count(i) > 1}
        if duplicates:
            raise TaxonomyError(f"duplicate taxonomy identifiers: {sorted(duplicates)}")
        for influence_id, influence in self.influences.items():
            for goal in influence.get("goals", ()):
                if goal not in self.goals:
                    raise TaxonomyError(
                        f"influence {influence_id!r} names unknown goal {goal!r}"
                    )
        for element_id, element in self.influenced_elements.items():
            for influence in element.get("influences", ()):
                if influence not in self.influences:
                    raise TaxonomyError(
                        f"influenced element {element_id!r} names unknown "
                        f"influence {influence!r}"
                    )
        for element_id, element in self.compromised_elements.items():
            for reached in element.get("reaches", ()):
                if reached not in self.influenced_elements:
                    raise TaxonomyError(
                        f"compromised element {element_id!r} reaches unknown "
                        f"influenced element {reached!r}"
                    )
        for vector_id, vector in self.attack_vectors.items():
            for element in vector.get("compromises", ()):
                if element not in self.compromised_elements:
                    raise TaxonomyError(
                        f"attack vector {vector_id!r} compromises unknown "
                        f"element {element!r}"
                    )

    @classmethod
    def from_json_dict(cls, data: dict) -> "Taxonomy":
        version = data.get("schema_version")
        if version != 1:
            raise TaxonomyError(f"unsupported taxonomy schema version {version!r}")
        try:
            return cls(
                goals=dict(data["goals"]),
                influences=dict(data["influences"]),
                influenced_elements=dict(data["influenced_elements"]),
                compromised_elements=dict(data["compromised_elements"]),
                attack_vectors=dict(data["attack_vectors"]),
            )
        except KeyError as exc:
            raise TaxonomyError(f"taxonomy data missing section {exc}") from exc

    @classmethod
    def from_json(cls, text: str | bytes) -> "Taxonomy":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class AttackChain:
    """One path through the flow: goal <- influence <- influenced element
    <- compromised element <- attack vector."""

    goal: str
    influence: str
    influenced_element: str
    compromised_element: str
    attack_vector: str
    vector_assessment: VectorAssessment | None = None
    manipulation_assessment: ManipulationAssessment | None = None


def validate_chain(chain: AttackChain, taxonomy: Taxonomy) -> list[str]:
    """Return the list of constraint violations (empty = valid chain).

    Unknown identifiers raise TaxonomyError; a structurally complete chain
    that links unreachable stages comes back with one violation per broken
    link.
    """
    for label, value, table in (
        ("goal", chain.goal, taxonomy.goals),
        ("influence", chain.influence, taxonomy.influences),
        ("influenced element", chain.influenced_element, taxonomy.influenced_elements),
        ("compromised element", chain.compromised_element, taxonomy.compromised_elements),
        ("attack vector", chain.attack_vector, taxonomy.attack_vectors),
    ):
        if not value:
            raise TaxonomyError(f"chain is missing its {label}")
        if value not in table:
            raise TaxonomyError(f"unknown {label} {value!r}")

    violations = []
    vector = taxonomy.attack_vectors[chain.attack_vector]
    if chain.compromised_element not in vector.get("compromises", ()):
        violations.append(
            f"vector {chain.attack_vector!r} cannot compromise "
            f"{chain.compromised_element!r}"
        )
    element = taxonomy.compromised_elements[chain.compromised_element]
    if chain.influenced_element not in element.get("reaches", ()):
        violations.append(
            f"element {chain.compromised_element!r} cannot reach "
            f"{chain.influenced_element!r}"
        )
    influenced = taxonomy.influenced_elements[chain.influenced_element]
    if chain.influence not in influenced.get("influences", ()):
        violations.append(
            f"influenced element {chain.influenced_element!r} does not "
            f"support influence {chain.influence!r}"
        )
    influence = taxonomy.influences[chain.influence]
    if chain.goal not in influence.get("goals", ()):
        violations.append(
            f"influence {chain.influence!r} does not serve goal {chain.goal!r}"
        )
    return violations


# ---------------------------------------------------------------------------
# built-in catalog


@dataclass(frozen=True)
class Catalog:
    """The shipped taxonomy plus published per-vector assessments.

    ``listed_scores`` are the published display values, stored verbatim as
    strings; ``manipulation_assessments`` is empty because no legible
    source exists for those numbers.
    """

    taxonomy: Taxonomy
    vector_assessments: dict[str, VectorAssessment]
    listed_scores: dict[str, str]
    manipulation_assessments: dict[str, ManipulationAssessment] = field(
        default_factory=dict
    )


def load_taxonomy() -> Taxonomy:
    data = resources.files("amtamper.data").joinpath("taxonomy.json").read_text()
    return Taxonomy.from_json(data)


def builtin_catalog() -> Catalog:
    taxonomy = load_taxonomy()
    assessments = {}
    listed = {}
    for vector_id, vector in taxonomy.attack_vectors.items():
        raw = vector.get("assessment")
        if raw:
            assessments[vector_id] = VectorAssessment(
                hacking_skill=raw["hacking_skill"],
                access_level=raw["access_level"],
                tool_availability=raw["tool_availability"],
            )
        if "listed_score" in vector:
            listed[vector_id] = str(vector["listed_score"])
    return Catalog(taxonomy, assessments, listed)


def catalog_check(catalog: Catalog | None = None) -> list[dict]:
    """Compare published scores against recomputation.

    For each vector: the equal-weight score, whether its display matches
    the published value, and whether the published value is reachable under
    *any* non-negative weights summing to 1 (the achievable range is
    [min factor, max factor]).
    """
    catalog = catalog or builtin_catalog()
    findings = []
    for vector_id, assessment in sorted(catalog.vector_assessments.items()):
        listed = catalog.listed_scores.get(vector_id)
        if listed is None:
            continue
        recomputed = score_vector(assessment)
        shown = display_score(recomputed)
        listed_value = float(listed)
        reachable = (
            min(assessment.factors) <= listed_value <= max(assessment.factors)
        )
        findings.append(
            {
                "vector": vector_id,
                "factors": list(assessment.factors),
                "listed_score": listed,
                "equal_weight_score": recomputed,
                "equal_weight_display": shown,
                "matches_equal_weights": shown == listed,
                "reachable_under_any_weights": reachable,
            }
        )
    return findings
