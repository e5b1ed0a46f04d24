"""
Experiments and reports
=======================

A declarative config drives a grid of (instance, seed) cells; each cell
writes one result row per method. The report aggregates rows into mean
full-information gaps per instance family. The same flow is available as
``csvrptw experiment`` and ``csvrptw report``.
"""

import tempfile
from pathlib import Path

from csvrptw.harness import ExperimentConfig, read_rows, report_csv, run_experiment

cfg = ExperimentConfig(instances=["R101", "RC101"], n_customers=10, seeds=[0, 1], n=20, p=3, n_x=2, n_t=10,
                       methods=["D-avg", "SAA", "SAA-kNN", "CSAA", "RSAA", "Full"], csaa_count=20, time_limit=60)
with tempfile.TemporaryDirectory() as d:
    rows = run_experiment(cfg, d, progress=print)
    print((Path(d) / "results.csv").read_text().splitlines()[0])
    print(report_csv(read_rows(Path(d) / "results.csv")))
