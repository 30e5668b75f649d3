# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

version = "0.1.0-dev"
copyright = "Copyright (c) 2022 VMware Inc"
author = "Kairo de Araujo"
