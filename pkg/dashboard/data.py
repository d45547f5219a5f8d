"""Loading and shaping of run outputs for the report viewer.

Nothing here imports streamlit, so the functions can be used (and tested)
outside a running app.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from ner_forge.config import GLOVE_COVERAGE_REFERENCE, GLOVE_F1_REFERENCE

RUN_FILES = {
    "metrics": "metrics.csv",
    "eval": "eval.csv",
    "coverage": "coverage.csv",
    "search": "search.csv",
}


@dataclass
class RunFrames:
    metrics: Optional[pd.DataFrame] = None
    eval: Optional[pd.DataFrame] = None
    coverage: Optional[pd.DataFrame] = None
    search: Optional[pd.DataFrame] = None

    @property
    def empty(self) -> bool:
        return all(getattr(self, name) is None for name in RUN_FILES)


def load_run(run_dir) -> RunFrames:
    """Read whichever of the run CSVs exist; missing or unreadable ones stay None."""
    run_dir = Path(run_dir)
    frames = RunFrames()
    for name, filename in RUN_FILES.items():
        path = run_dir / filename
        if not path.is_file():
            continue
        try:
            setattr(frames, name, pd.read_csv(path, keep_default_na=False, na_values=[""]))
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError):
            continue
    return frames


def coverage_vs_reference(coverage: pd.DataFrame) -> pd.DataFrame:
    """Coverage rows in percent, joined with the published GloVe-6B ratio where one exists."""
    out = coverage.copy()
    out["measured"] = out["ratio"] * 100

    def published(row):
        ref = GLOVE_COVERAGE_REFERENCE.get(row["dataset"])
        if ref is None or row["split"] not in ("train", "test"):
            return np.nan
        return ref[0] if row["split"] == "train" else ref[1]

    out["published"] = out.apply(published, axis=1) if len(out) else pd.Series(dtype=float)
    out["difference"] = out["measured"] - out["published"]
    return out


def search_trend(search: pd.DataFrame) -> Optional[Tuple[float, float, float]]:
    """Slope, intercept and r² of best F1 against log10(lr) over successful trials."""
    ok = search[search["error"].fillna("") == ""] if "error" in search else search
    ok = ok.dropna(subset=["lr", "best_val_f1"])
    if len(ok) < 2 or ok["lr"].nunique() < 2:
        return None
    result = stats.linregress(np.log10(ok["lr"].to_numpy(dtype=float)), ok["best_val_f1"].to_numpy(dtype=float))
    return float(result.slope), float(result.intercept), float(result.rvalue ** 2)


def best_epoch(metrics: pd.DataFrame) -> pd.Series:
    """Row of the first epoch reaching the best validation F1."""
    return metrics.loc[metrics["val_f1"].idxmax()]


def run_dataset(frames: RunFrames) -> Optional[str]:
    """Dataset label recorded in the coverage CSV, if the run has one."""
    if frames.coverage is None or frames.coverage.empty or "dataset" not in frames.coverage:
        return None
    names = frames.coverage["dataset"].dropna().astype(str)
    return names.iloc[0] if len(names) else None


def f1_vs_reference(report: pd.DataFrame, dataset: Optional[str]) -> Optional[Tuple[float, float]]:
    """Measured TOTAL F1 and the published GloVe-6B test F1 for ``dataset``, both in percent."""
    published = GLOVE_F1_REFERENCE.get(dataset) if dataset else None
    total = report[report["type"] == "TOTAL"]
    if published is None or total.empty:
        return None
    return float(total["f1"].iloc[0]), published
