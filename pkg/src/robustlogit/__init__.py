"""
Robust sparse logistic regression.

Elastic-net penalized logistic regression, its trimmed robust counterpart (enet-LTS) with a
reweighting step, repeated cross-validation over (alpha, lambda), cellwise outlier detection
and the clinical labelling, network and simulation tooling around them.
"""
__version__ = "0.1.0"
