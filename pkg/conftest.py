"""
pytest 共用設定：與 main.py 相同，把專案根目錄加入 Python path
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
