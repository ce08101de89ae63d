"""Run configuration: defaults, JSON loading, validation, stable hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from datetime import date

from .labeler import COMPLICATION_ORDER, Complication
from .learners import FAMILY_ORDER

DEFAULT_SPLIT_CUTOFF = "2020-04-25"


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = 0
    k_folds: int = 3
    n_search: int = 20
    n_bootstrap: int = 1000
    families: tuple[str, ...] = FAMILY_ORDER
    complications: tuple[str, ...] = tuple(c.value for c in COMPLICATION_ORDER)
    split_cutoff: str = DEFAULT_SPLIT_CUTOFF
    region: str | None = None
    jobs: int = 1
    lexicon_path: str | None = None

    def __post_init__(self):
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if self.n_search < 2:
            raise ValueError("n_search must be >= 2")
        if self.n_bootstrap < 1:
            raise ValueError("n_bootstrap must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if not self.families:
            raise ValueError("families must not be empty")
        for fam in self.families:
            if fam not in FAMILY_ORDER:
                raise ValueError(f"unknown model family '{fam}'")
        if len(set(self.families)) != len(self.families):
            raise ValueError("families contains duplicates")
        if not self.complications:
            raise ValueError("complications must not be empty")
        valid = {c.value for c in Complication}
        for comp in self.complications:
            if comp not in valid:
                raise ValueError(f"unknown complication '{comp}'")
        if len(set(self.complications)) != len(self.complications):
            raise ValueError("complications contains duplicates")
        self.cutoff_date()  # validates format

    def cutoff_date(self) -> date:
        try:
            return date.fromisoformat(self.split_cutoff)
        except ValueError as exc:
            raise ValueError(f"split_cutoff is not an ISO date: {self.split_cutoff!r}") from exc

    def complication_enums(self) -> list[Complication]:
        by_value = {c.value: c for c in Complication}
        return [by_value[v] for v in self.complications]

    def to_dict(self) -> dict:
        data = asdict(self)
        data["families"] = list(self.families)
        data["complications"] = list(self.complications)
        return data

    def stable_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "families" in kwargs:
            kwargs["families"] = tuple(kwargs["families"])
        if "complications" in kwargs:
            kwargs["complications"] = tuple(kwargs["complications"])
        return cls(**kwargs)

    @classmethod
    def from_path(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        if not isinstance(data, dict):
            raise ValueError("config file must contain a JSON object")
        return cls.from_dict(data)
