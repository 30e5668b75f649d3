# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

import os
from dataclasses import dataclass, fields

from dynaconf import Dynaconf

from ctbn_ep import DATA_DIR, engine_settings


@dataclass(frozen=True)
class EngineConfig:
    """Tolerances and limits shared by every inference module."""

    VALIDATION_TOL: float = 1e-9
    ROUND_TRIP_TOL: float = 1e-12
    STOCHASTIC_TOL: float = 1e-9
    IMPOSSIBLE_MASS: float = 1e-300
    JOINT_SIZE_CAP: int = 4096
    RK_RTOL: float = 1e-6
    RK_ATOL: float = 1e-10
    RK_INITIAL_STEP_FACTOR: float = 0.1
    EP_TOL: float = 1e-6
    EP_MAX_ITERS: int = 100
    REPORT_DIGITS: int = 6
    STORAGE_BACKEND: str = "LocalStorage"
    LOCAL_STORAGE_BACKEND_PATH: str = os.path.join(DATA_DIR, "storage")

    @classmethod
    def from_settings(cls, settings: Dynaconf) -> "EngineConfig":
        """Build the record from Dynaconf settings, keeping defaults."""
        values = {}
        for item in fields(cls):
            default = getattr(cls, item.name)
            value = settings.get(item.name, default)
            values[item.name] = type(default)(value)

        return cls(**values)


config = EngineConfig.from_settings(engine_settings)
