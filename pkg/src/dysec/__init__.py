"""Install-time behavioral trace analysis for flagging malicious packages.

Pipeline: capture (or replay/synthesize) per-package install traces, parse
them into bundles, extract candidate features, select the engineered subset,
train tree-ensemble and linear classifiers, and scan individual packages
within a sub-second budget.
"""

__version__ = "0.1.0"
