"""Rotation intervals, mode-locking certificates and periodic structure of torus twist maps."""

from .expr import ParseError, TrigPoly
from .maps import (
    AnnulusMap,
    GeneratingPair,
    LiftSpec,
    Order,
    TwistConstants,
    apply_lift,
    compare_order,
    compose_fiber_translation,
    deck_audit,
    generating_pair,
    integrable,
    load_lift,
    parse_lift,
    power_minus,
    standard_map,
    twist_constants,
)

__version__ = "0.1.0"
