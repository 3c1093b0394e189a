"""Serial biomarker classification toolkit.

Ingests per-patient observation series, screens markers with two-sample
tests, trains six base classifiers plus a two-level stacking ensemble and
benchmarks them under grouped cross-validation.
"""

__version__ = "0.1.0"
