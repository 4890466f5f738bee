"""Distance-error metrics, reports and experiment drivers."""
from ..bins import STARSS_BINS, SYNTHETIC_BINS, VOICEHOME_BINS, BinSpec
from .experiments import (CrossCorpusResult, ablation_columns, ablation_grid, attention_grid,
                          cross_corpus_matrix, evaluate_checkpoint, evaluate_folds, feature_grid,
                          inspect_clip, read_predictions, report_from_records, shape_grid,
                          snr_sweep_eval, sweep_rows, architecture_grid, write_predictions)
from .metrics import (BinRow, EvalReport, binned_report, drr_stratified_errors, error_vs_distance, l1,
                      rl1, stratified_curve)
from .report import (parse_csv, parse_table_csv, parse_text, render_csv, render_table_csv,
                     render_table_text, render_text)

__all__ = [
    "BinRow", "BinSpec", "CrossCorpusResult", "EvalReport", "STARSS_BINS", "SYNTHETIC_BINS",
    "VOICEHOME_BINS", "ablation_columns", "ablation_grid", "attention_grid", "binned_report",
    "cross_corpus_matrix", "drr_stratified_errors", "error_vs_distance", "evaluate_checkpoint",
    "evaluate_folds", "feature_grid", "inspect_clip", "l1", "parse_csv", "parse_table_csv",
    "parse_text", "read_predictions", "render_csv", "render_table_csv", "render_table_text",
    "render_text", "report_from_records", "rl1", "shape_grid", "snr_sweep_eval", "stratified_curve",
    "sweep_rows", "architecture_grid", "write_predictions",
]
