"""
Visualization module for result charts
"""
from .charts import ChartGenerator, plot_strategy_accuracy

__all__ = ['ChartGenerator', 'plot_strategy_accuracy']
