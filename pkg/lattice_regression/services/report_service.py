import json
import threading
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .bound_verifier import BoundReport  # noqa: E402
from .logger import get_logger  # noqa: E402
from .perceptron import SopTrace  # noqa: E402

LOSS_COLUMNS = ["step", "prediction", "outcome", "step_loss", "cumulative_loss"]
SUMMARY_COLUMNS = ["run", "mode", "p", "T", "seed", "n", "a", "loss_alg", "worst_regret", "rows", "failures"]


def loss_frame(trace) -> pd.DataFrame:
    """
    losses.csv 的內容；step 從 1 起算。

    二階感知器的 step_loss 是 0/1 錯誤指標，cumulative_loss 是到目前為止的錯誤次數。
    """
    if isinstance(trace, SopTrace):
        predictions = trace.predictions.astype(float)
        outcomes = trace.labels.astype(float)
        step_loss = (trace.predictions != trace.labels).astype(float)
    else:
        predictions = trace.predictions
        outcomes = trace.outcomes
        step_loss = (outcomes - predictions) ** 2
    return pd.DataFrame({
        "step": np.arange(1, predictions.size + 1),
        "prediction": predictions,
        "outcome": outcomes,
        "step_loss": step_loss,
        "cumulative_loss": np.cumsum(step_loss),
    }, columns=LOSS_COLUMNS)


def sop_trace_dict(trace: SopTrace, config: Dict, n: int) -> Dict:
    return {
        "config": config,
        "predictions": trace.predictions.tolist(),
        "labels": trace.labels.tolist(),
        "mistakes": list(trace.mistakes),
        "a": trace.a,
        "n": n,
    }


class ReportAggregator:
    def __init__(self, output_dir: Path):
        """
        初始化 ReportAggregator。

        平行執行的實驗各自產生結果，這裡是唯一的寫入端：所有摘要列都經由鎖合併，
        並在最後依固定順序寫出，因此輸出與執行緒排程無關。
        :param output_dir: 所有產出檔案的根目錄。
        """
        self.output_dir = Path(output_dir)
        self.records: List[Dict] = []
        self._lock = threading.Lock()
        self.logger = get_logger(__name__)

    def path(self, name: str) -> Path:
        target = self.output_dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def add_record(self, record: Dict):
        """
        加入一筆摘要列；可由多個執行緒同時呼叫。

        :param record: 至少包含 run 欄位的字典，缺少的欄位在匯出時留空。
        """
        with self._lock:
            self.records.append(dict(record))

    def summary_frame(self) -> pd.DataFrame:
        with self._lock:
            records = list(self.records)
        frame = pd.DataFrame.from_records(records)
        columns = [c for c in SUMMARY_COLUMNS if c in frame.columns] + \
                  sorted(c for c in frame.columns if c not in SUMMARY_COLUMNS)
        if frame.empty:
            return frame
        keys = [c for c in ("p", "T", "seed", "run") if c in frame.columns]
        return frame[columns].sort_values(keys, kind="mergesort").reset_index(drop=True)

    def write_frame(self, frame: pd.DataFrame, name: str) -> Path:
        target = self.path(name)
        frame.to_csv(target, index=False, lineterminator="\n")
        self.logger.info(f"已寫出 {target}")
        return target

    def write_json(self, payload: Dict, name: str) -> Path:
        target = self.path(name)
        target.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
        self.logger.info(f"已寫出 {target}")
        return target

    def write_trace(self, trace, name: str, config: Optional[Dict] = None, n: Optional[int] = None) -> Path:
        if isinstance(trace, SopTrace):
            return self.write_json(sop_trace_dict(trace, config or {}, n or 0), name)
        return self.write_json(trace.to_dict(), name)

    def write_losses(self, trace, name: str) -> Path:
        return self.write_frame(loss_frame(trace), name)

    def write_reports(self, reports: Sequence[BoundReport], name: str) -> List[Path]:
        """
        第一個選擇寫到 name，其餘寫到 name 加上選擇名稱的檔案 (如 report-kernel.csv)。
        """
        paths = []
        stem, suffix = Path(name).stem, Path(name).suffix or ".csv"
        for i, report in enumerate(reports):
            target = name if i == 0 else str(Path(name).with_name(f"{stem}-{report.selector}{suffix}"))
            paths.append(self.write_frame(report.to_frame(), target))
        return paths

    def write_summary(self, name: str = "summary.csv") -> Path:
        return self.write_frame(self.summary_frame(), name)

    def plot_losses(self, trace, comparator_losses: Dict[str, np.ndarray], name: str = "losses.png") -> Path:
        """累積損失曲線：演算法一條，每個比較對象一條。"""
        frame = loss_frame(trace)
        fig, ax = plt.subplots(figsize=(8, 5))
        ax.plot(frame["step"], frame["cumulative_loss"], label="algorithm", linewidth=2)
        for comparator_id, losses in sorted(comparator_losses.items()):
            ax.plot(frame["step"], np.cumsum(losses), linewidth=0.8, alpha=0.6, label=comparator_id)
        ax.set_xlabel("t")
        ax.set_ylabel("cumulative loss")
        if len(comparator_losses) <= 8:
            ax.legend(fontsize="small")
        return self._save(fig, name)

    def plot_bound_envelope(self, trace, report: BoundReport, name: str = "envelope.png") -> Path:
        """演算法的累積損失與各比較對象的 L_T(f) + bound；最緊的一條畫成虛線。"""
        frame = loss_frame(trace)
        fig, ax = plt.subplots(figsize=(8, 5))
        ax.plot(frame["step"], frame["cumulative_loss"], label="algorithm", linewidth=2)
        envelopes = [row.loss_comp + row.bound for row in report.rows]
        if envelopes:
            T = int(frame["step"].iloc[-1])
            ax.scatter([T] * len(envelopes), envelopes, s=12, alpha=0.6, label=f"L_T(f) + {report.selector}")
            ax.axhline(min(envelopes), linestyle="--", color="gray", label="tightest envelope")
        ax.set_xlabel("t")
        ax.set_ylabel("loss")
        ax.set_yscale("symlog")
        ax.legend(fontsize="small")
        return self._save(fig, name)

    def plot_growth(self, growth: pd.DataFrame, name: str = "growth.png") -> Path:
        """
        各 p 的最壞後悔對 T 的 log-log 圖，附上擬合斜率。

        :param growth: 含有 p、T、worst_regret 與 slope 欄位的表格。
        """
        fig, ax = plt.subplots(figsize=(8, 5))
        for p, group in growth.groupby("p", sort=True):
            group = group[group["worst_regret"] > 0].sort_values("T")
            if group.empty:
                continue
            slope = group["slope"].iloc[0]
            ax.loglog(group["T"], group["worst_regret"], marker="o", label=f"p={p:g}, slope={slope:.3f}")
        ax.set_xlabel("T")
        ax.set_ylabel("worst regret")
        ax.legend(fontsize="small")
        return self._save(fig, name)

    def _save(self, fig, name: str) -> Path:
        target = self.path(name)
        try:
            fig.tight_layout()
            fig.savefig(target, dpi=100, metadata={"Software": None})
        finally:
            plt.close(fig)
        self.logger.info(f"已寫出圖表 {target}")
        return target
