"""
Conclique covers: basic sublattice concliques a_j + Delta Z^d, greedy merging
into larger concliques, brute-force verification, and site labelling.
"""
import itertools
from typing import Dict, Iterable, List, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .lattice import (
    LatticePoint,
    NeighborhoodTemplate,
    SamplingWindow,
    interior_mask,
    neighbors,
)


class BasicConcliqueFamily(BaseModel):
    """The q* = prod(m_i + 1) sublattices a_j + Delta Z^d, offsets in lexicographic order."""

    model_config = ConfigDict(frozen=True)

    template: NeighborhoodTemplate
    delta: Tuple[int, ...]
    offsets: Tuple[Tuple[int, ...], ...]

    @model_validator(mode="after")
    def _check(self):
        if len(set(self.offsets)) != len(self.offsets):
            raise ValueError("basic conclique offsets must be distinct")
        if len(self.offsets) != int(np.prod(self.delta)):
            raise ValueError("basic conclique offsets must enumerate the full box")
        return self

    @property
    def q_star(self) -> int:
        return len(self.offsets)

    @property
    def det_delta(self) -> int:
        return int(np.prod(self.delta))

    def offset_index(self, coords: List[np.ndarray]) -> np.ndarray:
        """Index of the basic conclique containing each cell, given absolute coordinates."""
        # Lexicographic order of the box makes the index a mixed-radix number.
        index = np.zeros(coords[0].shape, dtype=int)
        for axis, c in enumerate(coords):
            index = index * self.delta[axis] + np.mod(c, self.delta[axis])
        return index


class ConcliqueCover(BaseModel):
    """Partition of the basic concliques into q groups, each group a conclique."""

    model_config = ConfigDict(frozen=True)

    family: BasicConcliqueFamily
    groups: Tuple[Tuple[int, ...], ...]

    @model_validator(mode="after")
    def _check(self):
        flat = [i for group in self.groups for i in group]
        if any(not group for group in self.groups):
            raise ValueError("conclique groups must be nonempty")
        if sorted(flat) != list(range(self.family.q_star)):
            raise ValueError("conclique groups must partition the basic concliques")
        return self

    @property
    def template(self) -> NeighborhoodTemplate:
        return self.family.template

    @property
    def q(self) -> int:
        return len(self.groups)

    @property
    def q_star(self) -> int:
        return self.family.q_star

    @property
    def group_sizes(self) -> Tuple[int, ...]:
        return tuple(len(group) for group in self.groups)

    def group_offsets(self) -> List[List[LatticePoint]]:
        return [[self.family.offsets[i] for i in group] for group in self.groups]

    def group_lookup(self) -> np.ndarray:
        """Map from basic-conclique index to group index."""
        lookup = np.empty(self.q_star, dtype=int)
        for j, group in enumerate(self.groups):
            lookup[list(group)] = j
        return lookup

    def summary(self) -> Dict:
        return {"q": self.q, "q_star": self.q_star, "groups": self.group_offsets()}


def basic_concliques(template: NeighborhoodTemplate) -> BasicConcliqueFamily:
    delta = template.delta
    offsets = tuple(itertools.product(*(range(d) for d in delta)))
    return BasicConcliqueFamily(template=template, delta=delta, offsets=offsets)


def can_merge(
    current: Iterable[LatticePoint],
    candidate: LatticePoint,
    template: NeighborhoodTemplate,
) -> bool:
    """Whether adding the sublattice at ``candidate`` keeps the union a conclique.

    True iff a_j - candidate + Delta s is outside +-M for every current a_j
    and every s with ||s||_inf <= 1.
    """
    forbidden = template.symmetric_offsets
    delta = template.delta
    shifts = list(itertools.product((-1, 0, 1), repeat=template.dim))
    for a in current:
        for s in shifts:
            lag = tuple(ai - ci + di * si for ai, ci, di, si in zip(a, candidate, delta, s))
            if lag in forbidden:
                return False
    return True


def build_cover(template: NeighborhoodTemplate) -> ConcliqueCover:
    """Greedy merge in lexicographic order; each offset joins the first compatible group."""
    family = basic_concliques(template)
    groups: List[List[int]] = []
    for index, offset in enumerate(family.offsets):
        for group in groups:
            if can_merge([family.offsets[i] for i in group], offset, template):
                group.append(index)
                break
        else:
            groups.append([index])
    return ConcliqueCover(family=family, groups=tuple(tuple(g) for g in groups))


def verify_conclique(points: Iterable[LatticePoint], template: NeighborhoodTemplate) -> bool:
    """Brute-force check that no point of the set is a neighbor of another."""
    point_set: Set[LatticePoint] = set(points)
    for p in point_set:
        if (neighbors(p, template) - {p}) & point_set:
            return False
    return True


def label_grid(
    window: SamplingWindow,
    cover: ConcliqueCover,
    interior_only: bool = False,
) -> np.ndarray:
    """Conclique index (0..q-1) of every window cell; -1 for masked or excluded cells."""
    if window.dim != cover.template.dim:
        raise ValueError(f"window dimension {window.dim} does not match template dimension {cover.template.dim}")
    basic = cover.family.offset_index(window.coordinates())
    labels = cover.group_lookup()[basic]
    eligible = interior_mask(window, cover.template) if interior_only else window.observed
    return np.where(eligible, labels, -1)


def assign_labels(
    window: SamplingWindow,
    template: NeighborhoodTemplate,
    cover: ConcliqueCover,
    interior_only: bool = True,
) -> Dict[LatticePoint, int]:
    """Map each labelled site to its conclique index."""
    if cover.template != template:
        raise ValueError("cover was built from a different template")
    labels = label_grid(window, cover, interior_only=interior_only)
    return {window.to_point(index): int(labels[index]) for index in zip(*np.nonzero(labels >= 0))}
