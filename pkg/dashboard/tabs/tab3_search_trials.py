# tab3_search_trials.py
import sys
from pathlib import Path

import numpy as np
import plotly.express as px
import streamlit as st

sys.path.append(str(Path(__file__).parent.parent))
from config import CHART_LAYOUT, TEXT_COLORS, TRIAL_COLORS
from data import search_trend


def show_search_trials_tab(search):
    """Random-search trials: best validation F1 against each sampled hyperparameter."""
    st.header("Hyperparameter Search")
    if search is None or search.empty:
        st.info("No search.csv in this run directory.")
        return

    search = search.copy()
    search["status"] = np.where(search["error"].fillna("") == "", "ok", "failed")
    ok = search[search["status"] == "ok"]

    col1, col2, col3 = st.columns(3)
    col1.metric("Trials", len(search))
    col2.metric("Failed", int((search["status"] == "failed").sum()))
    if not ok.empty:
        col3.metric("Best validation F1", f"{100 * ok['best_val_f1'].max():.2f}")

    param = st.selectbox("Hyperparameter", ["lr", "dropout", "batch_size", "epochs", "po", "lstm_state"])
    fig = px.scatter(ok, x=param, y="best_val_f1", color="status", color_discrete_map=TRIAL_COLORS,
                     log_x=param == "lr", hover_data=["trial"], title=f"Best validation F1 against {param}")
    if param == "lr":
        trend = search_trend(search)
        if trend is not None:
            slope, intercept, r2 = trend
            xs = np.logspace(np.log10(ok["lr"].min()), np.log10(ok["lr"].max()), 50)
            fig.add_scatter(x=xs, y=intercept + slope * np.log10(xs), mode="lines",
                            line=dict(color=TEXT_COLORS[0], dash="dash"), name=f"trend (r²={r2:.2f})")
    fig.update_layout(**CHART_LAYOUT)
    st.plotly_chart(fig, use_container_width=True)

    st.dataframe(search.sort_values("best_val_f1", ascending=False), use_container_width=True)
