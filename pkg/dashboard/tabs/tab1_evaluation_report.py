# tab1_evaluation_report.py
import sys
from pathlib import Path

import plotly.express as px
import streamlit as st

sys.path.append(str(Path(__file__).parent.parent))
from config import CHART_LAYOUT, SCORE_COLORS
from data import f1_vs_reference


def show_evaluation_report_tab(report, dataset=None):
    """Per-type precision, recall and F1 from an ``eval`` CSV, with the published F1 when the dataset is known."""
    st.header("Evaluation Report")
    if report is None or report.empty:
        st.info("No eval.csv in this run directory. Run eval with --output to produce one.")
        return

    total = report[report["type"] == "TOTAL"]
    if not total.empty:
        row = total.iloc[0]
        col1, col2, col3, col4 = st.columns(4)
        col1.metric("Precision", f"{row['precision']:.2f}")
        col2.metric("Recall", f"{row['recall']:.2f}")
        col3.metric("F1", f"{row['f1']:.2f}")
        reference = f1_vs_reference(report, dataset)
        if reference is not None:
            measured, published = reference
            col4.metric(f"Published F1 ({dataset}, GloVe-6B)", f"{published:.2f}",
                        delta=f"{measured - published:+.2f} this run")

    types = report[~report["type"].isin(["TOTAL", "TOKEN"])]
    if not types.empty:
        long = types.melt(id_vars="type", value_vars=["precision", "recall", "f1"], var_name="score", value_name="value")
        fig = px.bar(long, x="type", y="value", color="score", barmode="group",
                     color_discrete_map=SCORE_COLORS, title="Scores per entity type",
                     labels={"value": "%", "type": "Entity type"})
        fig.update_layout(**CHART_LAYOUT)
        st.plotly_chart(fig, use_container_width=True)

        counts = types.melt(id_vars="type", value_vars=["tp", "fp", "fn"], var_name="count", value_name="n")
        fig = px.bar(counts, x="type", y="n", color="count", barmode="stack", title="Entity counts")
        fig.update_layout(**CHART_LAYOUT)
        st.plotly_chart(fig, use_container_width=True)

    st.dataframe(report, use_container_width=True)
