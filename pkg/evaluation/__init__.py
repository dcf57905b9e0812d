"""
Evaluation module: accuracy, multi-seed aggregation, significance and training cost
"""
from .metrics import (
    ResultTable,
    RunRecord,
    accuracy,
    aggregate,
    cost_report,
    evaluate,
    load_records,
    significance,
    write_aggregate_csv,
    write_cost_csv,
)
from .runner import MatrixRunner, SelfTrainingConfig, run_matrix

__all__ = [
    'ResultTable', 'RunRecord', 'accuracy', 'aggregate', 'cost_report', 'evaluate', 'load_records',
    'significance', 'write_aggregate_csv', 'write_cost_csv',
    'MatrixRunner', 'SelfTrainingConfig', 'run_matrix',
]
