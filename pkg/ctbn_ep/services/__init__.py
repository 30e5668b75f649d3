# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

from ctbn_ep.interfaces import IStorage, ServiceSettings  # noqa
from ctbn_ep.services.storage.local import LocalStorage  # noqa
