"""Cross-validation and clinical metrics."""
