# Sphinx configuration for the CTBN inference engine documentation.
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys

sys.path.insert(0, os.path.abspath("../../"))

from ctbn_ep.__version__ import (  # noqa: E402
    author,
    copyright,
    version,
)

project = "CTBN inference engine"
copyright = copyright
author = author
release = version

extensions = [
    "myst_parser",
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
    "sphinxcontrib.plantuml",
    "sphinx.ext.autosectionlabel",
]

autosectionlabel_prefix_document = True
autodoc_member_order = "bysource"

templates_path = ["_templates"]

# only pulled in through ``.. include::`` from devel/index.rst
exclude_patterns = ["devel/design.rst", "devel/known_issues.rst"]

source_suffix = {
    ".rst": "restructuredtext",
    ".md": "markdown",
}

html_theme = "sphinx_rtd_theme"
html_static_path = []
