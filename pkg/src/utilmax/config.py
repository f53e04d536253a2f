"""Solver configuration."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional


@dataclass(frozen=True)
class Config:
    n_grid: int = 513
    # half-width of the wealth grid around the capital; None derives it from
    # the optimal wealth path
    wealth_halfwidth: Optional[float] = None
    phimax: float = 1e3
    value_tol: float = 1e-6
    fo_tol: float = 1e-6
    price_tol: float = 1e-9
    strategy_tol: float = 1e-6
    rank_tol: float = 1e-9
    sphere_tol: float = 1e-4
    divergence_tol: float = 1e-3
    refine_rounds: int = 0
    strict_grid: bool = False
    require_ae: str = "warn"
    max_nodes: int = 10**6
    threads: int = 1
    seed: int = 42
    force: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        tols = ("value_tol", "fo_tol", "price_tol", "strategy_tol", "rank_tol",
                "sphere_tol", "divergence_tol", "phimax")
        for name in tols:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_grid < 3:
            raise ValueError("n_grid must be at least 3")
        if self.require_ae not in ("strict", "warn", "off"):
            raise ValueError("require_ae must be one of strict|warn|off")
        if self.refine_rounds < 0:
            raise ValueError("refine_rounds must be nonnegative")

    def with_(self, **kw) -> "Config":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def default_config(**kw) -> Config:
    env = os.environ.get("UTILMAX_THREADS")
    if env and "threads" not in kw:
        kw["threads"] = max(1, int(env))
    return Config(**kw)
