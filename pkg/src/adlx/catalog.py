"""Sensor catalog: entity ids, human labels, and complementary status pairs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Union

from .errors import SchemaViolation, UnknownEntity, UnknownStatus


@dataclass(frozen=True)
class EntitySpec:
    """One sensed entity: display label plus its (opening, closing) pairs."""

    entity: str
    label: str
    statuses: tuple[str, ...]
    complements: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        if not self.entity:
            raise SchemaViolation("entity id must be non-empty")
        if not self.label:
            raise SchemaViolation(f"entity {self.entity!r}: label must be non-empty")
        if len(set(self.statuses)) != len(self.statuses):
            raise SchemaViolation(f"entity {self.entity!r}: duplicate statuses")
        paired: set[str] = set()
        for opening, closing in self.complements:
            if opening == closing:
                raise SchemaViolation(
                    f"entity {self.entity!r}: pair ({opening!r}, {closing!r}) "
                    "must use two distinct statuses"
                )
            for status in (opening, closing):
                if status not in self.statuses:
                    raise SchemaViolation(
                        f"entity {self.entity!r}: paired status {status!r} "
                        "is not a declared status"
                    )
                if status in paired:
                    raise SchemaViolation(
                        f"entity {self.entity!r}: status {status!r} appears "
                        "in more than one pair"
                    )
                paired.add(status)


class SensorCatalog:
    """Validated lookup table from entity ids to their specs."""

    def __init__(self, entities) -> None:
        specs = tuple(entities)
        by_id: dict[str, EntitySpec] = {}
        labels: dict[str, str] = {}
        for spec in specs:
            if spec.entity in by_id:
                raise SchemaViolation(f"duplicate entity id {spec.entity!r}")
            if spec.label in labels:
                raise SchemaViolation(
                    f"label {spec.label!r} is shared by entities "
                    f"{labels[spec.label]!r} and {spec.entity!r}"
                )
            by_id[spec.entity] = spec
            labels[spec.label] = spec.entity
        self._by_id = by_id
        self._by_label = labels

    def __contains__(self, entity: str) -> bool:
        return entity in self._by_id

    def __iter__(self):
        return iter(self._by_id.values())

    def __len__(self) -> int:
        return len(self._by_id)

    def spec(self, entity: str) -> EntitySpec:
        try:
            return self._by_id[entity]
        except KeyError:
            raise UnknownEntity(f"entity {entity!r} is not in the catalog") from None

    def label_for(self, entity: str) -> str:
        return self.spec(entity).label

    def property_for_label(self, label: str) -> str:
        """Entity id carrying the given display label."""
        try:
            return self._by_label[label]
        except KeyError:
            raise UnknownEntity(f"no entity is labelled {label!r}") from None

    def is_opening(self, entity: str, status: str) -> bool:
        spec = self.spec(entity)
        if status not in spec.statuses:
            raise UnknownStatus(
                f"entity {entity!r} has no status {status!r}"
            )
        return any(status == opening for opening, _ in spec.complements)

    def closing_partner(self, entity: str, status: str) -> str | None:
        """Closing status paired with an opening one, None when unpaired."""
        spec = self.spec(entity)
        if status not in spec.statuses:
            raise UnknownStatus(
                f"entity {entity!r} has no status {status!r}"
            )
        for opening, closing in spec.complements:
            if status == opening:
                return closing
        return None

    @classmethod
    def from_json(cls, doc: dict) -> "SensorCatalog":
        if not isinstance(doc, dict) or "entities" not in doc:
            raise SchemaViolation('catalog document must have an "entities" map')
        entities = doc["entities"]
        if not isinstance(entities, dict):
            raise SchemaViolation('"entities" must be a map of id to spec')
        specs = []
        for entity, body in entities.items():
            if not isinstance(body, dict):
                raise SchemaViolation(f"entity {entity!r}: spec must be a map")
            try:
                label = body["label"]
                statuses = body["statuses"]
                complements = body.get("complements", [])
            except KeyError as exc:
                raise SchemaViolation(
                    f"entity {entity!r}: missing field {exc.args[0]!r}"
                ) from None
            if not isinstance(statuses, list) or not all(
                isinstance(s, str) for s in statuses
            ):
                raise SchemaViolation(
                    f"entity {entity!r}: statuses must be a list of strings"
                )
            pairs = []
            for pair in complements:
                if not (
                    isinstance(pair, (list, tuple))
                    and len(pair) == 2
                    and all(isinstance(s, str) for s in pair)
                ):
                    raise SchemaViolation(
                        f"entity {entity!r}: each complement must be a "
                        "two-element [opening, closing] list"
                    )
                pairs.append((pair[0], pair[1]))
            specs.append(
                EntitySpec(
                    entity=entity,
                    label=label,
                    statuses=tuple(statuses),
                    complements=tuple(pairs),
                )
            )
        return cls(specs)

    @classmethod
    def load(cls, source: Union[str, Path, IO[str]]) -> "SensorCatalog":
        if hasattr(source, "read"):
            text = source.read()
        else:
            text = Path(source).read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"catalog is not valid JSON: {exc}") from None
        return cls.from_json(doc)

    def to_json(self) -> dict:
        return {
            "entities": {
                spec.entity: {
                    "label": spec.label,
                    "statuses": list(spec.statuses),
                    "complements": [list(pair) for pair in spec.complements],
                }
                for spec in self
            }
        }
