from . import schema
from .pipeline import (
    EXCLUDED, HORIZONS_DAYS, chained_impute, clean_outliers, derive_label,
    encode_diastolic, filter_missingness, horizon_days, impute_diastolic,
    nearest_join, prune_and_holdout, time_interpolate,
)
from .dataset import (
    EhrTable, complete_table, limited_matrix, read_ehr_csv, write_ehr_csv, write_sidecar,
)

__all__ = [
    "schema", "EXCLUDED", "HORIZONS_DAYS",
    "chained_impute", "clean_outliers", "derive_label", "encode_diastolic",
    "filter_missingness", "horizon_days", "impute_diastolic", "nearest_join",
    "prune_and_holdout", "time_interpolate",
    "EhrTable", "complete_table", "limited_matrix", "read_ehr_csv",
    "write_ehr_csv", "write_sidecar",
]
