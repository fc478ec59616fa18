"""Planar electrode layouts in the gapless-plane approximation."""

import json
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Tuple

from models.electrode import Electrode, ElectrodeLayout, Rectangle
from utils.io import atomic_write, load_json
from utils.units import UM

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DcParameters:
    """Sizes of the nine dc electrodes (meters).

    The dc pads fill the cross-shaped gap between the four rf squares
    (one center pad, four arms) plus four corner pads diagonally outside
    the rf squares. Dimensions are estimates, refine them against the chip.
    """

    corner_size: float = 290 * UM
    corner_offset: float = 0.0


@dataclass(frozen=True)
class PaperGeometry:
    rf_side: float = 290 * UM
    rf_pitch: float = 560 * UM
    dc: DcParameters = field(default_factory=DcParameters)

    @property
    def inner_edge(self) -> float:
        return 0.5 * (self.rf_pitch - self.rf_side)

    @property
    def outer_edge(self) -> float:
        return 0.5 * (self.rf_pitch + self.rf_side)


def paper_layout(params: PaperGeometry = PaperGeometry()) -> ElectrodeLayout:
    """Four rf squares on the corners of a square, nine dc pads, rest grounded."""
    c = 0.5 * params.rf_pitch
    a = params.inner_edge
    b = params.outer_edge
    rf = [
        Electrode("rf_p1", "rf_plus", (Rectangle.square(+c, +c, params.rf_side),)),
        Electrode("rf_p2", "rf_plus", (Rectangle.square(-c, -c, params.rf_side),)),
        Electrode("rf_m1", "rf_minus", (Rectangle.square(+c, -c, params.rf_side),)),
        Electrode("rf_m2", "rf_minus", (Rectangle.square(-c, +c, params.rf_side),)),
    ]
    o = b + params.dc.corner_offset
    s = params.dc.corner_size
    dc = [
        Electrode("dc_c", "dc", (Rectangle(-a, a, -a, a),)),
        Electrode("dc_n", "dc", (Rectangle(-a, a, a, b),)),
        Electrode("dc_s", "dc", (Rectangle(-a, a, -b, -a),)),
        Electrode("dc_e", "dc", (Rectangle(a, b, -a, a),)),
        Electrode("dc_w", "dc", (Rectangle(-b, -a, -a, a),)),
        Electrode("dc_ne", "dc", (Rectangle(o, o + s, o, o + s),)),
        Electrode("dc_nw", "dc", (Rectangle(-o - s, -o, o, o + s),)),
        Electrode("dc_se", "dc", (Rectangle(o, o + s, -o - s, -o),)),
        Electrode("dc_sw", "dc", (Rectangle(-o - s, -o, -o - s, -o),)),
    ]
    return ElectrodeLayout(tuple(rf + dc), (0.0, 0.0))


@dataclass(frozen=True)
class Violation:
    kind: str
    electrodes: Tuple[str, ...]
    message: str


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def of_kind(self, kind: str) -> List[Violation]:
        return [v for v in self.violations if v.kind == kind]

    def __str__(self) -> str:
        if self.ok:
            return "layout valid"
        return "\n".join(f"{v.kind}: {v.message}" for v in self.violations)


def validate(layout: ElectrodeLayout, vertical_linear: bool = True) -> ValidationReport:
    """Report degenerate rectangles, overlaps between electrodes and missing rf roles."""
    report = ValidationReport()
    seen = set()
    for e in layout.electrodes:
        if e.name in seen:
            report.violations.append(Violation("duplicate", (e.name,), f"electrode name '{e.name}' repeated"))
        seen.add(e.name)
        if not e.rectangles:
            report.violations.append(Violation("empty", (e.name,), f"'{e.name}' has no rectangles"))
        for r in e.rectangles:
            if r.is_degenerate():
                report.violations.append(
                    Violation("degenerate", (e.name,), f"'{e.name}' rectangle {r.to_um()} um has zero extent")
                )
    for e1, e2 in combinations(layout.electrodes, 2):
        if any(r1.overlaps(r2) for r1 in e1.rectangles for r2 in e2.rectangles):
            report.violations.append(
                Violation("overlap", (e1.name, e2.name), f"'{e1.name}' and '{e2.name}' share interior area")
            )
    if vertical_linear:
        for role in ("rf_plus", "rf_minus"):
            if not layout.by_role(role):
                report.violations.append(Violation("missing_role", (), f"no electrode with role {role}"))
    if not report.ok:
        logger.warning("layout validation failed: %d violation(s)", len(report.violations))
    return report


def load_layout(path: str) -> ElectrodeLayout:
    return ElectrodeLayout.from_dict(load_json(path))


def save_layout(layout: ElectrodeLayout, path: str) -> None:
    with atomic_write(path) as f:
        json.dump(layout.to_dict(), f, indent=4)
