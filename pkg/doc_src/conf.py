import sys
import os
from datetime import datetime

sys.path.extend([os.path.abspath(".."), os.path.abspath("../eblc")])

from eblc.utils.conditions import CONDITIONS, DEFAULT_SEVERITIES

project = 'eblc'
copyright = str(datetime.now().year) + ', eblc developers'
author = 'eblc developers'
release = '1.0'

pygments_style = 'sphinx'

extensions = [
    'myst_parser',
    'sphinx.ext.autodoc',
    'sphinx.ext.intersphinx',
    'sphinx.ext.ifconfig',
    'sphinx.ext.viewcode',
    'sphinx.ext.githubpages'
]

# one substitution per condition, e.g. |heavy_rain| -> "darkness_factor 1.0, streak_density 300, ..."
severity_summary = {
    condition.value: "\n" + f".. |{condition.value}| replace:: " + ", ".join(
        f"{key} {value}" for key, value in DEFAULT_SEVERITIES[condition].to_dict().items()
        if key not in ('condition', 'seed', 'streak_color')
    )
    for condition in CONDITIONS
}

language = 'en'
exclude_patterns = []
templates_path = ['_templates']

autoclass_content = "init"

autodoc_default_options = {
    "member-order": "bysource",
    "undoc-members": False,
}

source_suffix = {
    '.rst': 'restructuredtext',
    '.txt': 'markdown',
    '.md': 'markdown',
}

rst_epilog = f"""
.. role:: raw-html(raw)
   :format: html

{''.join(severity_summary.values())}
"""

html_theme = "sphinx_rtd_theme"
html_static_path = ['_static']
