from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from utils.units import UM

from .exceptions import LayoutError, UnknownElectrodeError

ROLES = ("rf_plus", "rf_minus", "dc", "ground")


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle in the z=0 plane, bounds in meters."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)

    @property
    def center(self) -> Tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def is_degenerate(self) -> bool:
        return not (self.x_min < self.x_max and self.y_min < self.y_max)

    def overlaps(self, other: "Rectangle") -> bool:
        """True when the interiors intersect; shared edges do not count."""
        return (
            min(self.x_max, other.x_max) > max(self.x_min, other.x_min)
            and min(self.y_max, other.y_max) > max(self.y_min, other.y_min)
        )

    def rotated90(self) -> "Rectangle":
        # (x, y) -> (-y, x)
        return Rectangle(-self.y_max, -self.y_min, self.x_min, self.x_max)

    def to_um(self) -> List[float]:
        return [v / UM for v in self.bounds]

    @classmethod
    def from_um(cls, values) -> "Rectangle":
        if len(values) != 4:
            raise LayoutError(f"rectangle needs 4 values (x_min, x_max, y_min, y_max), got {values!r}")
        return cls(*(float(v) * UM for v in values))

    @classmethod
    def square(cls, cx: float, cy: float, side: float) -> "Rectangle":
        h = 0.5 * side
        return cls(cx - h, cx + h, cy - h, cy + h)


@dataclass(frozen=True)
class Electrode:
    name: str
    role: str
    rectangles: Tuple[Rectangle, ...]

    def __post_init__(self):
        if self.role not in ROLES:
            raise LayoutError(f"electrode '{self.name}': unknown role '{self.role}'")
        object.__setattr__(self, "rectangles", tuple(self.rectangles))

    @property
    def area(self) -> float:
        return sum(r.area for r in self.rectangles)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "role": self.role, "rectangles_um": [r.to_um() for r in self.rectangles]}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Electrode":
        try:
            return cls(d["name"], d["role"], tuple(Rectangle.from_um(r) for r in d["rectangles_um"]))
        except KeyError as exc:
            raise LayoutError(f"electrode record missing field {exc}") from None


@dataclass(frozen=True)
class ElectrodeLayout:
    """Named planar electrodes tiling a grounded plane (gaps ignored)."""

    electrodes: Tuple[Electrode, ...]
    symmetry_point: Tuple[float, float] = (0.0, 0.0)
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "electrodes", tuple(self.electrodes))
        object.__setattr__(self, "_index", {e.name: i for i, e in enumerate(self.electrodes)})

    @property
    def names(self) -> List[str]:
        return [e.name for e in self.electrodes]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownElectrodeError(f"unknown electrode '{name}'") from None

    def get(self, name: str) -> Electrode:
        return self.electrodes[self.index(name)]

    def by_role(self, role: str) -> List[Electrode]:
        return [e for e in self.electrodes if e.role == role]

    def names_by_role(self, role: str) -> List[str]:
        return [e.name for e in self.by_role(role)]

    def find(self, name: str) -> Optional[Electrode]:
        i = self._index.get(name)
        return None if i is None else self.electrodes[i]

    def rotated90(self, swap_rf: bool = True) -> "ElectrodeLayout":
        """Rotate by 90 degrees about the origin, optionally swapping rf_plus/rf_minus."""
        swap = {"rf_plus": "rf_minus", "rf_minus": "rf_plus"} if swap_rf else {}
        return ElectrodeLayout(
            tuple(
                Electrode(e.name, swap.get(e.role, e.role), tuple(r.rotated90() for r in e.rectangles))
                for e in self.electrodes
            ),
            (-self.symmetry_point[1], self.symmetry_point[0]),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "symmetry_point_um": [v / UM for v in self.symmetry_point],
            "electrodes": [e.to_dict() for e in self.electrodes],
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ElectrodeLayout":
        if "electrodes" not in d:
            raise LayoutError("layout file has no 'electrodes' list")
        electrodes = tuple(Electrode.from_dict(e) for e in d["electrodes"])
        names = [e.name for e in electrodes]
        if len(set(names)) != len(names):
            raise LayoutError("electrode names must be unique")
        point = d.get("symmetry_point_um", [0.0, 0.0])
        return cls(electrodes, (float(point[0]) * UM, float(point[1]) * UM))

    def __repr__(self) -> str:
        return f"ElectrodeLayout({len(self.electrodes)} electrodes: {', '.join(self.names)})"
