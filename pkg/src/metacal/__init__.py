"""Few-shot calibration of low-cost PM2.5 sensors.

Meta-learned initializations adapt to a new sensor site from two days of
co-location; fine-tuning baselines and a synthetic multi-site benchmark
make the comparison reproducible end to end.
"""

__version__ = "0.1.0"
