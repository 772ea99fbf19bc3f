"""Object class catalog and per-class classifier accuracy."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

# Per-class accuracy of the simulated classifier, in catalog order.
CLASS_ACCURACY: dict[str, float] = {
    "bin": 0.819,
    "cabinet": 0.844,
    "chair": 0.926,
    "desk": 0.773,
    "display": 0.804,
    "door": 0.924,
    "shelf": 0.805,
    "table": 0.741,
    "bed": 0.727,
    "pillow": 0.781,
    "sink": 0.792,
    "sofa": 0.910,
    "toilet": 0.797,
}
OVERALL_ACCURACY = 0.757


@dataclass(frozen=True)
class ClassModel:
    """Class names with the accuracy of the simulated classifier on each.

    Class ids are 1-based positions in ``names``.
    """

    names: tuple[str, ...]
    accuracy: tuple[float, ...]

    def __post_init__(self):
        if len(self.names) != len(self.accuracy):
            raise ValueError("names and accuracy must have the same length")
        if len(self.names) < 2:
            raise ValueError("a class model needs at least two classes")
        if len(set(self.names)) != len(self.names):
            raise ValueError("class names must be unique")
        for name, p in zip(self.names, self.accuracy):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"accuracy of {name!r} outside [0, 1]: {p}")

    @property
    def c(self) -> int:
        return len(self.names)

    @property
    def ids(self) -> range:
        return range(1, self.c + 1)

    def p(self, class_id: int) -> float:
        return self.accuracy[self.index(class_id)]

    def name(self, class_id: int) -> str:
        return self.names[self.index(class_id)]

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name) + 1
        except ValueError:
            raise KeyError(f"unknown class {name!r}") from None

    def index(self, class_id: int) -> int:
        if not 1 <= class_id <= self.c:
            raise KeyError(f"unknown class id {class_id}")
        return class_id - 1

    @classmethod
    def from_mapping(cls, table: dict[str, float]) -> "ClassModel":
        return cls(tuple(table), tuple(float(v) for v in table.values()))

    @classmethod
    def from_csv(cls, path: str | Path) -> "ClassModel":
        """Read ``class,p`` rows (header optional)."""
        names, acc = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#"):
                    continue
                try:
                    value = float(row[1])
                except ValueError:
                    continue  # header line
                names.append(row[0].strip())
                acc.append(value)
        return cls(tuple(names), tuple(acc))


def default_classes() -> ClassModel:
    return ClassModel.from_mapping(CLASS_ACCURACY)
