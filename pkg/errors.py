"""
Error categories for the sentence-encoder toolkit
錯誤分類：每一類對應 CLI 的固定結束碼
"""
from typing import Optional


EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_INTERRUPT = 130


class SentKitError(Exception):
    """所有工具錯誤的基底類別"""
    exit_code: int = EXIT_RUNTIME
    category: str = "runtime"


class ConfigurationError(SentKitError):
    """設定或前置條件不符 (驗證類)"""
    exit_code = EXIT_VALIDATION
    category = "configuration"


class StructuralError(SentKitError):
    """張量維度與編碼器結構不一致"""
    exit_code = EXIT_VALIDATION
    category = "structural"


class DegenerateInputError(SentKitError):
    """退化輸入，例如零向量"""
    category = "degenerate-input"


class PortabilityError(SentKitError):
    """Adapter 無法移植到目標編碼器"""
    exit_code = EXIT_VALIDATION
    category = "portability"

    def __init__(self, message: str, source_id: Optional[str] = None, target_id: Optional[str] = None):
        if source_id is not None or target_id is not None:
            message = f"{message} (adapter={source_id}, encoder={target_id})"
        super().__init__(message)
        self.source_id = source_id
        self.target_id = target_id


class CompositionError(SentKitError):
    """策略組裝時缺少必要的產物"""
    category = "composition"

    def __init__(self, message: str, missing_stage: Optional[str] = None):
        super().__init__(message)
        self.missing_stage = missing_stage


class IngestionError(SentKitError):
    """資料讀取失敗"""
    exit_code = EXIT_VALIDATION
    category = "ingestion"


class PairGenerationError(SentKitError):
    """訓練句對無法產生"""
    exit_code = EXIT_VALIDATION
    category = "pair-generation"


class NoNegativesError(PairGenerationError):
    """只有一個類別，沒有負樣本"""


class NoPositivesError(PairGenerationError):
    """每個類別都只有一筆，沒有正樣本"""


class EvaluationError(SentKitError):
    """評估輸入不合法"""
    category = "evaluation"


class SkipBatch(Exception):
    """
    訓練迴圈用的略過訊號 (不是錯誤)
    目標函數遇到無法計算的 batch 時拋出，由訓練迴圈計數後略過
    """

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason
