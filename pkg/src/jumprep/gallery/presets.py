"""Default parameter sets for the worked cases, and builders from JSON configs.

Every builder takes an optional dict whose keys override the defaults, so a
CLI config only needs to state what differs.
"""
from __future__ import annotations

import numpy as np

from ..compensator import CompensatorModel, Constant, mark_law_from_dict
from ..errors import ConfigurationError
from ..simulate import LevyParams
from ..verifier import RepresentationCase, brownian_identity_case, brownian_quadratic_case
from . import doleans, kella_whitt, kw, supremum

KW_DEFAULT = {"sigma": 0.2, "mark_law": {"kind": "point_masses", "marks": [[-0.3], [0.2]], "weights": [0.5, 0.8]},
              "horizon": 1.0, "scale": 1.0}
DOLEANS_DEFAULT = {"mark_law": {"kind": "point_masses", "marks": [[-0.5], [0.8]], "weights": [0.7, 0.5]},
                   "n": None, "horizon": 1.0}
KELLA_WHITT_DEFAULT = {"gamma": 0.3, "alpha": 1.0, "horizon": 1.0,
                       "mark_law": {"kind": "density_table",
                                    "edges": [-1.5, -0.5, -0.25, -0.125, -0.0625, -0.03125],
                                    "density": [0.6, 0.8, 1.2, 1.6, 2.0]}}
LEVY_SUP_DEFAULT = {"drift": 0.0, "sigma": 0.3, "horizon": 1.0, "du": 0.005, "u_max": 6.0, "reading": "running",
                    "mark_law": {"kind": "point_masses", "marks": [[-0.2], [0.15]], "weights": [1.0, 1.0]}}


def _merged(default: dict, cfg: dict | None) -> dict:
    out = dict(default)
    out.update(cfg or {})
    return out


def _law(d):
    return None if d is None else mark_law_from_dict(d)


def kw_case(cfg: dict | None = None) -> kw.KwCase:
    c = _merged(KW_DEFAULT, cfg)
    return kw.KwCase(float(c["sigma"]), _law(c["mark_law"]), float(c["horizon"]), float(c["scale"]))


def doleans_model(cfg: dict | None = None) -> tuple:
    """``(model, n)`` for the stochastic exponential case (unit-rate Poisson clock)."""
    c = _merged(DOLEANS_DEFAULT, cfg)
    n = np.inf if c.get("n") is None else float(c["n"])
    return CompensatorModel(_law(c["mark_law"]), Constant(1.0)), n


def kella_whitt_case(cfg: dict | None = None) -> kella_whitt.KellaWhittCase:
    c = _merged(KELLA_WHITT_DEFAULT, cfg)
    n = np.inf if c.get("n") is None else float(c["n"])
    psi = None if c.get("psi") is None else float(c["psi"])
    return kella_whitt.KellaWhittCase(float(c["gamma"]), _law(c["mark_law"]), float(c["alpha"]), psi, n,
                                      float(c["horizon"]))


def levy_sup_case(cfg: dict | None = None, n_steps: int = 2000) -> supremum.SupremumCase:
    c = _merged(LEVY_SUP_DEFAULT, cfg)
    params = LevyParams(float(c["drift"]), float(c["sigma"]), _law(c["mark_law"]))
    return supremum.SupremumCase(params, float(c["horizon"]), n_steps, float(c["du"]), float(c["u_max"]),
                                 c["reading"])


def representation_case(name: str, cfg: dict | None = None, n_steps: int = 2000, seed: int = 0,
                        n_pilot: int = 100_000, workers=None) -> RepresentationCase:
    """Residual callback for ``name``; the supremum case first builds its pilot tail table."""
    cfg = cfg or {}
    if name == "brownian_identity":
        return brownian_identity_case(float(cfg.get("sigma", 1.0)), float(cfg.get("horizon", 1.0)))
    if name == "brownian_quadratic":
        return brownian_quadratic_case(float(cfg.get("sigma", 1.0)), float(cfg.get("horizon", 1.0)))
    if name == "kw":
        c = kw_case(cfg)
        return RepresentationCase("kw", c.levy, c.horizon, kw.batch_residual(c), c.functional())
    if name == "doleans":
        model, n = doleans_model(cfg)
        T = float(_merged(DOLEANS_DEFAULT, cfg)["horizon"])
        return RepresentationCase("doleans", LevyParams(0.0, 0.0, model.mark_law), T,
                                  doleans.batch_residual(model, n), doleans.doleans_functional(model, n), model)
    if name == "kella-whitt":
        c = kella_whitt_case(cfg)
        return RepresentationCase("kella-whitt", c.levy, c.horizon, kella_whitt.batch_residual(c))
    if name == "levy-sup":
        c = levy_sup_case(cfg, n_steps)
        # pilot paths use a stream disjoint from the residual run
        table = supremum.build_tail_table(c, n_pilot, seed + 1, workers)
        return RepresentationCase("levy-sup", c.params, c.horizon, supremum.batch_residual(c, table))
    raise ConfigurationError(f"unknown case {name!r}")


GALLERY_CASES = ("kw", "doleans", "kella-whitt", "levy-sup")
MRT_CASES = ("brownian_identity", "brownian_quadratic") + GALLERY_CASES

__all__ = ["kw_case", "doleans_model", "kella_whitt_case", "levy_sup_case", "representation_case",
           "GALLERY_CASES", "MRT_CASES"]
