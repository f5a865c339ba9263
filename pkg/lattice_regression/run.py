# lattice_regression/run.py
import sys
from pathlib import Path

# 將專案根目錄加入 Python 路徑
project_root = str(Path(__file__).parent.parent)
if project_root not in sys.path:
    sys.path.append(project_root)

from lattice_regression.main import main  # noqa: E402

if __name__ == "__main__":
    main()
