"""
Pipelines module: DAPT / SEPT stage runners, strategy compositor, SetFit and self-training
"""
from .stages import Objective, StageConfig, StageKind
from .training import TrainingReport, batch_stream, run_steps
from .dapt import run_dapt, train_dapt
from .sept import run_sept, train_sept
from .ledger import StageLedger, StageRun
from .strategies import (
    STRATEGY_PLANS,
    ArtifactRegistry,
    BuildResult,
    PlannedStage,
    StrategyBuilder,
    StrategyId,
    StrategyPlan,
    Variant,
    builder_for_variant,
    compose,
)
from .setfit import (
    Classifier,
    HeadConfig,
    SelfTrainingResult,
    SetFitConfig,
    fit_head,
    run_self_training,
    run_setfit,
    self_train_head,
)

__all__ = [
    'Objective', 'StageConfig', 'StageKind',
    'TrainingReport', 'batch_stream', 'run_steps',
    'run_dapt', 'train_dapt', 'run_sept', 'train_sept',
    'StageLedger', 'StageRun',
    'STRATEGY_PLANS', 'ArtifactRegistry', 'BuildResult', 'PlannedStage', 'StrategyBuilder',
    'StrategyId', 'StrategyPlan', 'Variant', 'builder_for_variant', 'compose',
    'Classifier', 'HeadConfig', 'SelfTrainingResult', 'SetFitConfig', 'fit_head',
    'run_self_training', 'run_setfit', 'self_train_head',
]
