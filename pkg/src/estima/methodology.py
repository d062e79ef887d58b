"""Methodology names such as ``DD-OW+MI-DC``.

A name starts with ``DD`` (direct deposits) followed by expansions
prefixed with ``+`` (MI, CA) and filters prefixed with ``-`` (OW, VF, TF,
DC), in any order, each at most once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import MethodologyError

EXPANSIONS = ("MI", "CA")
FILTERS = ("OW", "VF", "TF", "DC")

# the 15 methodologies a sweep runs by default
SELECTED_METHODOLOGIES = (
    "DD",
    "DD-VF",
    "DD-TF",
    "DD-VF-TF",
    "DD-DC",
    "DD+MI",
    "DD+MI-VF-TF",
    "DD-OW+MI",
    "DD-OW+MI-VF-TF",
    "DD-OW+MI-DC",
    "DD-OW+MI-VF-TF-DC",
    "DD+MI+CA",
    "DD-OW+MI+CA",
    "DD+MI+CA-VF-TF",
    "DD-OW+MI+CA-VF-TF",
)

_TOKEN = re.compile(r"([+-])([A-Za-z]*)")


@dataclass(frozen=True)
class MethodologySpec:
    expansions: frozenset[str] = frozenset()
    filters: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.expansions <= set(EXPANSIONS) or not self.filters <= set(FILTERS):
            raise MethodologyError("unknown expansion or filter")
        if "CA" in self.expansions and "MI" not in self.expansions:
            raise MethodologyError("CA requires MI")
        if "OW" in self.filters and "MI" not in self.expansions:
            raise MethodologyError("OW requires MI")

    @property
    def canonical_name(self) -> str:
        parts = ["DD"]
        if "OW" in self.filters:
            parts.append("-OW")
        parts += [f"+{e}" for e in EXPANSIONS if e in self.expansions]
        parts += [f"-{f}" for f in ("VF", "TF", "DC") if f in self.filters]
        return "".join(parts)

    @property
    def clustering(self) -> str | None:
        """Which partition the expansion needs: None, 'MI' or 'MI+CA'."""
        if "CA" in self.expansions:
            return "MI+CA"
        if "MI" in self.expansions:
            return "MI"
        return None

    def has(self, part: str) -> bool:
        return part in self.expansions or part in self.filters

    def __str__(self) -> str:
        return self.canonical_name


def parse_methodology(text: str) -> MethodologySpec:
    text = text.strip().replace("−", "-").replace("–", "-")
    if not text.startswith("DD"):
        raise MethodologyError(f"methodology must start with DD: {text!r}")
    rest = text[2:]
    expansions: set[str] = set()
    filters: set[str] = set()
    pos = 0
    while pos < len(rest):
        m = _TOKEN.match(rest, pos)
        if m is None or not m.group(2):
            raise MethodologyError(f"malformed methodology near {rest[pos:]!r}")
        sign, name = m.groups()
        token = sign + name
        if sign == "+" and name in EXPANSIONS:
            target = expansions
        elif sign == "-" and name in FILTERS:
            target = filters
        else:
            raise MethodologyError(f"unknown token {token!r}")
        if name in target:
            raise MethodologyError(f"duplicate token {token!r}")
        target.add(name)
        pos = m.end()
    return MethodologySpec(frozenset(expansions), frozenset(filters))
