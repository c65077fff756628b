# Configuration file for the Sphinx documentation builder.
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys

sys.path.insert(0, os.path.abspath('../../src'))

# -- Project information -----------------------------------------------------

project = 'robustlogit'

from robustlogit import __version__ as package_version
release = package_version

# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',  # docstrings
    'sphinx.ext.autosummary',  # per-module summary tables
]
autosummary_generate = True

exclude_patterns = []

# -- Options for HTML output -------------------------------------------------

html_theme = 'alabaster'
