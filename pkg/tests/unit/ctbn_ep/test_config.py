# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

import dataclasses

import pretend
import pytest

from ctbn_ep import config


class TestEngineConfig:
    def test_defaults(self):
        settings = pretend.stub(get=lambda name, default: default)

        result = config.EngineConfig.from_settings(settings)

        assert result == config.EngineConfig()
        assert result.EP_MAX_ITERS == 100
        assert result.JOINT_SIZE_CAP == 4096

    def test_overrides_are_coerced(self):
        values = {"EP_TOL": "1e-4", "JOINT_SIZE_CAP": "128"}
        settings = pretend.stub(
            get=pretend.call_recorder(
                lambda name, default: values.get(name, default)
            )
        )

        result = config.EngineConfig.from_settings(settings)

        assert result.EP_TOL == 1e-4
        assert result.JOINT_SIZE_CAP == 128
        assert result.RK_RTOL == 1e-6
        assert pretend.call("EP_TOL", 1e-6) in settings.get.calls

    def test_frozen(self):
        with pytest.raises(dataclasses.FrozenInstanceError):
            config.config.EP_TOL = 1.0
