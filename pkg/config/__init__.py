"""
Configuration module for the sentence-encoder toolkit
"""
from .settings import Settings, TrainingDefaults, get_settings, reset_settings
from .run_config import RunConfig, load_run_config

__all__ = ['Settings', 'TrainingDefaults', 'get_settings', 'reset_settings', 'RunConfig', 'load_run_config']
