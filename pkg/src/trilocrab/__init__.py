"""Trilobite-and-crab aperiodic tiling engine."""

from .atlas import Atlas, AtlasError, load_atlas, load_atlas_file, load_bundled_atlas, validate_atlas
from .engine import (
    Patch,
    Placement,
    PlacementError,
    TorusSpec,
    Window,
    classify_trilobite,
    legal_completions,
    place,
    propagate,
    search_region,
    torus_search,
    validate,
)
from .hierarchy import compose, detect_chains, inflate, shift_halfplane, verify_super_axioms
from .lemmas import load_suite, run_all, run_lemma

__version__ = "0.1.0"

__all__ = [
    "Atlas", "AtlasError", "load_atlas", "load_atlas_file", "load_bundled_atlas", "validate_atlas",
    "Patch", "Placement", "PlacementError", "TorusSpec", "Window", "classify_trilobite", "legal_completions",
    "place", "propagate", "search_region", "torus_search", "validate",
    "compose", "detect_chains", "inflate", "shift_halfplane", "verify_super_axioms",
    "load_suite", "run_all", "run_lemma",
]
