# tab0_training_overview.py
import sys
from pathlib import Path

import plotly.express as px
import streamlit as st

# Add the parent directory to system path
sys.path.append(str(Path(__file__).parent.parent))
from config import CHART_LAYOUT, METRIC_COLORS
from data import best_epoch


def show_training_overview_tab(metrics):
    """
    Display per-epoch training loss, validation F1 and learning rate.

    Parameters:
    metrics (DataFrame): epoch, loss, val_f1, lr as written by ``train --metrics-out``
    """
    st.header("Training Overview")
    if metrics is None or metrics.empty:
        st.info("No metrics.csv in this run directory. Train with --metrics-out to produce one.")
        return

    best = best_epoch(metrics)
    col1, col2, col3, col4 = st.columns(4)
    col1.metric("Epochs", len(metrics))
    col2.metric("Best epoch", int(best["epoch"]))
    col3.metric("Best validation F1", f"{100 * best['val_f1']:.2f}")
    col4.metric("Final loss", f"{metrics['loss'].iloc[-1]:.4f}")

    left, right = st.columns(2)
    with left:
        fig = px.line(metrics, x="epoch", y="loss", markers=True, title="Mean training loss per epoch")
        fig.update_traces(line_color=METRIC_COLORS["loss"])
        fig.update_layout(**CHART_LAYOUT)
        st.plotly_chart(fig, use_container_width=True)
    with right:
        fig = px.line(metrics.assign(val_f1=100 * metrics["val_f1"]), x="epoch", y="val_f1", markers=True,
                      title="Validation entity F1", labels={"val_f1": "F1 (%)"})
        fig.update_traces(line_color=METRIC_COLORS["val_f1"])
        fig.add_vline(x=int(best["epoch"]), line_dash="dash", line_color=METRIC_COLORS["val_f1"])
        fig.update_layout(**CHART_LAYOUT)
        st.plotly_chart(fig, use_container_width=True)

    fig = px.line(metrics, x="epoch", y="lr", title="Learning rate schedule")
    fig.update_traces(line_color=METRIC_COLORS["lr"])
    fig.update_layout(**CHART_LAYOUT)
    st.plotly_chart(fig, use_container_width=True)

    with st.expander("Raw metrics"):
        st.dataframe(metrics, use_container_width=True)
