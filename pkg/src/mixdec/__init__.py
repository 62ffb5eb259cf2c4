"""Mixtures of sequence decoders trained with assignment-constrained EM.

The package provides:

* exact minimum-cost assignment solvers, including a balanced variant that
  hands each decoder an equal share of every batch (``mixdec.assignment``),
* small tabular and neural decoder banks with per-decoder adapter layers
  (``mixdec.decoders``),
* EM-style training loops with soft, hard, balanced, and random
  responsibility rules (``mixdec.em_trainer``),
* diversity and quality metrics for sets of generated sequences
  (``mixdec.metrics``),
* a synthetic one-to-many corpus generator with known mode structure
  (``mixdec.synthdata``),
* a concentration-bound checker for balanced responsibilities
  (``mixdec.theory``),
* config-driven experiment drivers and a small CLI (``mixdec.experiments``,
  ``mixdec.cli``).
"""

from __future__ import annotations

__version__ = "0.1.0"

__all__ = [
    "assignment",
    "decoders",
    "em_trainer",
    "metrics",
    "synthdata",
    "theory",
    "experiments",
    "cli",
]
