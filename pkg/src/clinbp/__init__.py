"""Blood-pressure regression toolkit: cohort handling, leakage control,
imputation, feature engineering, blended tree ensembles with quantile
intervals, and clinical evaluation."""

__version__ = "0.1.0"
