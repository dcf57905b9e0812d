"""
Chart Generator Module
產生策略準確率與訓練成本圖表
"""
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import matplotlib.pyplot as plt

from evaluation.metrics import ResultTable

# 設定中文字型
plt.rcParams['font.sans-serif'] = ['Arial Unicode MS', 'Heiti TC', 'PingFang TC', 'Microsoft JhengHei', 'DejaVu Sans']
plt.rcParams['axes.unicode_minus'] = False


class ChartGenerator:
    """
    圖表產生器
    把彙總結果畫成可直接放進報告的 PNG
    """

    def __init__(self, output_dir: Optional[str] = None):
        """
        初始化圖表產生器

        Args:
            output_dir: 圖表輸出目錄
        """
        if output_dir is None:
            self.output_dir = Path.cwd() / "report"
        else:
            self.output_dir = Path(output_dir)

        self.output_dir.mkdir(parents=True, exist_ok=True)

    def plot_strategy_accuracy(
        self,
        table: ResultTable,
        filename: str = "strategy_accuracy.png",
        show: bool = False,
    ) -> Optional[str]:
        """
        每個資料集一組長條，每個策略一條，誤差線為種子間標準差

        Args:
            table: aggregate() 的結果
            filename: 輸出檔名
            show: 是否顯示
        """
        cells = table.cells
        if cells.empty:
            print("⚠️ 沒有可繪製的結果")
            return None

        means = cells.pivot(index="dataset", columns="strategy", values="mean") * 100
        stds = cells.pivot(index="dataset", columns="strategy", values="std").reindex_like(means) * 100
        datasets = list(means.index)
        strategies = list(means.columns)

        fig, ax = plt.subplots(figsize=(max(6, 1.5 * len(datasets) * len(strategies) / 2 + 4), 5))
        x = np.arange(len(datasets))
        width = 0.8 / len(strategies)
        colors = plt.cm.tab10(np.linspace(0, 1, 10))

        for i, strategy in enumerate(strategies):
            ax.bar(
                x + (i - (len(strategies) - 1) / 2) * width,
                means[strategy].values,
                width,
                yerr=stds[strategy].fillna(0).values,
                capsize=3,
                label=strategy,
                color=colors[i % 10],
                alpha=0.85,
            )

        ax.set_xticks(x)
        ax.set_xticklabels(datasets, rotation=30, ha='right')
        ax.set_ylabel('Accuracy (%)')
        ax.set_ylim(0, 100)
        ax.set_title('策略準確率 (mean ± std)', fontsize=14, fontweight='bold')
        ax.legend(loc='lower right', fontsize=9)
        ax.grid(axis='y', alpha=0.3)
        plt.tight_layout()

        filepath = self.output_dir / filename
        plt.savefig(filepath, dpi=150, bbox_inches='tight', facecolor='white')
        print(f"📊 準確率圖表已儲存至: {filepath}")

        if show:
            plt.show()
        else:
            plt.close(fig)
        return str(filepath)

    def plot_cost(
        self,
        costs: pd.DataFrame,
        filename: str = "training_cost.png",
        show: bool = False,
    ) -> Optional[str]:
        """各策略的訓練時間堆疊長條 (SEPT / DAPT / SetFit)"""
        if costs.empty:
            return None

        fig, ax = plt.subplots(figsize=(8, 5))
        bottom = np.zeros(len(costs))
        for column, color in (('sept_h', '#2196F3'), ('dapt_h', '#FF9800'), ('setfit_h', '#4CAF50')):
            values = costs[column].to_numpy(dtype=float)
            ax.bar(costs['strategy'], values, bottom=bottom, label=column[:-2].upper(), color=color)
            bottom += values

        ax.set_ylabel('Hours')
        ax.set_title('總訓練成本', fontsize=14, fontweight='bold')
        ax.legend()
        plt.setp(ax.xaxis.get_majorticklabels(), rotation=30, ha='right')
        plt.tight_layout()

        filepath = self.output_dir / filename
        plt.savefig(filepath, dpi=150, bbox_inches='tight', facecolor='white')
        print(f"📊 成本圖表已儲存至: {filepath}")

        if show:
            plt.show()
        else:
            plt.close(fig)
        return str(filepath)


def plot_strategy_accuracy(table: ResultTable, path: Path) -> Optional[str]:
    """輸出準確率圖到指定路徑"""
    path = Path(path)
    return ChartGenerator(str(path.parent)).plot_strategy_accuracy(table, filename=path.name)
