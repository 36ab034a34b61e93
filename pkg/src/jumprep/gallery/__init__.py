"""Worked representation cases: hedging, stochastic exponential, reflected process, running supremum."""
from . import doleans, kella_whitt, kw, presets, supremum
from .doleans import DoleansPath, doleans_dade, doleans_functional
from .kella_whitt import KellaWhittCase, calibrate_psi, kella_whitt_path, truncation_ladder
from .kw import KwCase, kw_hedge_ratio
from .supremum import SupremumCase, TailTable, build_tail_table, reflection_tail, softsup

__all__ = ["doleans", "kella_whitt", "kw", "presets", "supremum", "DoleansPath", "doleans_dade",
           "doleans_functional", "KellaWhittCase", "calibrate_psi", "kella_whitt_path", "truncation_ladder",
           "KwCase", "kw_hedge_ratio", "SupremumCase", "TailTable", "build_tail_table", "reflection_tail",
           "softsup"]
