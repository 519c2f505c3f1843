from .bias import MODES, BiasTable, bias_distribution, tally_bias
from .metrics import p_recall_at_k, per_root_success, qa_f1, recall_at_k, success
from .report import render_report, report_json, report_to_dict
from .run import (
    EvalReport,
    evaluate_method,
    evaluate_results,
    paired_perspective_eval,
    query_parts,
    retrieve_bundle,
)
from .synthetic import generate_synthetic_benchmark

__all__ = [
    "MODES",
    "BiasTable",
    "EvalReport",
    "bias_distribution",
    "evaluate_method",
    "evaluate_results",
    "generate_synthetic_benchmark",
    "p_recall_at_k",
    "paired_perspective_eval",
    "per_root_success",
    "qa_f1",
    "query_parts",
    "recall_at_k",
    "render_report",
    "report_json",
    "report_to_dict",
    "retrieve_bundle",
    "success",
    "tally_bias",
]
