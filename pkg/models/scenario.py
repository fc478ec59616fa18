import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from .exceptions import ConfigError

COMMANDS = (
    "potential-map",
    "null-scan",
    "modes",
    "rf-power-curve",
    "dc-solve",
    "circuit-sweep",
    "beta",
    "trajectory",
    "thermometry",
)

# dimensionless parameters that carry no unit suffix
UNITLESS = frozenset(
    {
        "points",
        "samples",
        "shots",
        "splitting",
        "coupling",
        "target_beta",
        "nbars",
        "nbar",
        "entries",
        "mode_axis",
        "ratios",
        "betas",
        "factor",
        "exact",
        "probe_direction",
        "eta",
    }
)

LAYOUT_ENV = "TRAPSIM_LAYOUT"
DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")
DEFAULT_LAYOUT = os.path.join(DATA_DIR, "paper_layout.json")
FIGURES = {
    "1b": "fig_1b.json",
    "1c": "fig_1c.json",
    "2": "fig_2.json",
    "3b": "fig_3b.json",
    "4": "fig_4.json",
}


def default_layout_path() -> str:
    return os.environ.get(LAYOUT_ENV) or DEFAULT_LAYOUT


def figure_scenario_path(figure: str) -> str:
    try:
        name = FIGURES[figure]
    except KeyError:
        raise ConfigError(f"unknown figure '{figure}' (known: {', '.join(FIGURES)})") from None
    return os.path.join(DATA_DIR, "scenarios", name)


@dataclass
class Scenario:
    """One command run: inputs as written in the scenario file plus resolved paths.

    ``drive`` and ``params`` keep the unit-suffixed keys of the file; the
    runner converts them to SI.
    """

    command: str
    layout_path: str
    drive: Dict[str, Any] = field(default_factory=dict)
    params: Dict[str, Any] = field(default_factory=dict)
    netlist_path: Optional[str] = None
    output_dir: str = "results"
    seed: int = 0
    source: Optional[str] = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command '{self.command}' (known: {', '.join(COMMANDS)})")
        for path in (self.layout_path, self.netlist_path):
            if path is not None and not os.path.exists(path):
                raise ConfigError(f"referenced file not found: {path}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: str = ".", source: Optional[str] = None) -> "Scenario":
        if "command" not in data:
            raise ConfigError("scenario needs a 'command'")

        def resolve(path):
            if path is None:
                return None
            return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))

        layout = resolve(data.get("layout")) or default_layout_path()
        netlist = resolve(data.get("netlist"))
        return cls(
            command=data["command"],
            layout_path=layout,
            drive=dict(data.get("drive", {})),
            params=dict(data.get("params", {})),
            netlist_path=netlist,
            output_dir=data.get("output", "results"),
            seed=data.get("seed", 0),
            source=source,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Everything needed to rerun the command; paths as given after resolution."""
        return {
            "command": self.command,
            "layout": self.layout_path,
            "netlist": self.netlist_path,
            "drive": self.drive,
            "params": self.params,
            "seed": self.seed,
        }
