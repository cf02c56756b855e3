"""Runtime settings and numerical tolerances shared by the RBM toolkit."""

from __future__ import annotations

from dataclasses import dataclass
import os
from pathlib import Path

from dotenv import find_dotenv, load_dotenv


VERSION = "0.1.0"

TOL_EXACT = 1e-12
TOL_OPTIMIZATION = 1e-6
GENERICITY_MARGIN = 1e-9
RANK_RELATIVE_THRESHOLD = 1e-9
RANK_GAP = 1e3
SURROGATE_MAGNITUDE = 40.0

DEFAULT_EXACT_CAP = 2 ** 24


def load_env(path: str | Path | None = None) -> bool:
    """Load a .env file without overriding variables already exported."""
    if path is None:
        path = find_dotenv(usecwd=True)
    if not path:
        return False
    return load_dotenv(path, override=False)


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from exc


@dataclass(frozen=True)
class Settings:
    exact_cap: int = DEFAULT_EXACT_CAP
    certificate_restarts: int = 200
    jacobian_samples: int = 5
    optimizer_restarts: int = 20
    optimizer_max_iter: int = 5000
    search_budget: int = 2000
    code_search_nodes: int = 2_000_000

    def __post_init__(self):
        if self.exact_cap < 1:
            raise ValueError("exact_cap must be positive")
        for name in (
            "certificate_restarts",
            "jacobian_samples",
            "optimizer_restarts",
            "optimizer_max_iter",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.search_budget < 0:
            raise ValueError("search_budget must be non-negative")
        if self.code_search_nodes < 1:
            raise ValueError("code_search_nodes must be at least 1")

    @classmethod
    def from_env(cls) -> "Settings":
        return cls(
            exact_cap=_env_int("RBM_EXACT_CAP", DEFAULT_EXACT_CAP),
            certificate_restarts=_env_int("RBM_CERTIFICATE_RESTARTS", 200),
            jacobian_samples=_env_int("RBM_JACOBIAN_SAMPLES", 5),
            optimizer_restarts=_env_int("RBM_OPTIMIZER_RESTARTS", 20),
            optimizer_max_iter=_env_int("RBM_OPTIMIZER_MAX_ITER", 5000),
            search_budget=_env_int("RBM_SEARCH_BUDGET", 2000),
            code_search_nodes=_env_int("RBM_CODE_SEARCH_NODES", 2_000_000),
        )


DEFAULT_SETTINGS = Settings()
