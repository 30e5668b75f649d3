#!/usr/bin/env python3

# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

from setuptools import find_packages, setup

setup(
    name="ctbn-ep",
    version="0.0.1",
    url="https://github.com/vmware/ctbn-ep",
    author="Kairo de Araujo",
    author_email="kairo@dearaujo.nl",
    description="Exact and expectation propagation inference for CTBNs",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "celery",
        "click",
        "dynaconf[ini]",
        "networkx",
        "numpy",
        "redis",
        "scipy",
    ],
    entry_points={"console_scripts": ["ctbn-ep=ctbn_ep.cli:cli"]},
)
