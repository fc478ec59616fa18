"""Shared objects for the test modules."""

import numpy as np

from efield import FieldBasis
from geometry import paper_layout
from models.drive import DriveConfig
from utils.units import UM

LAYOUT = paper_layout()
BASIS = FieldBasis(LAYOUT, cache=True)
RF_FREQUENCY = 2 * np.pi * 18.1e6
MHZ = 2 * np.pi * 1e6


def matched_drive(amplitude: float = 100.0, frequency: float = RF_FREQUENCY) -> DriveConfig:
    return DriveConfig.vertical_linear(LAYOUT, amplitude, frequency)


def axis_point(height_um: float) -> np.ndarray:
    return np.array([0.0, 0.0, height_um * UM])
