"""Mortality-risk prediction from heart-ultrasound videos and tabular records.

Small video CNNs built from scratch (with gradient verification), the full
preprocessing/training/evaluation protocol, reader-study statistics, and a
blinded survey service, all exercised at desk scale on synthetic phantoms.
"""

__version__ = "0.1.0"
