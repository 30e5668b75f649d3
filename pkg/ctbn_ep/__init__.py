# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

import os

from dynaconf import Dynaconf

DATA_DIR = os.getenv("DATA_DIR", "/data")
SETTINGS_FILE = os.path.join(DATA_DIR, "settings.ini")

engine_settings = Dynaconf(
    settings_files=[SETTINGS_FILE],
    envvar_prefix="CTBN",
)
