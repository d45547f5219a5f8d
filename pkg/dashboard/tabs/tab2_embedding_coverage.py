# tab2_embedding_coverage.py
import sys
from pathlib import Path

import plotly.express as px
import streamlit as st

sys.path.append(str(Path(__file__).parent.parent))
from config import CHART_LAYOUT, COVERAGE_COLORS
from data import coverage_vs_reference


def show_embedding_coverage_tab(coverage):
    """
    Embedding coverage per split, next to the published GloVe-6B figure where one exists.

    Parameters:
    coverage (DataFrame): output of the ``coverage`` command
    """
    st.header("Embedding Coverage")
    if coverage is None or coverage.empty:
        st.info("No coverage.csv in this run directory.")
        return

    table = coverage_vs_reference(coverage)
    table["label"] = table["dataset"].astype(str) + " / " + table["split"].astype(str)
    long = table.melt(id_vars="label", value_vars=["measured", "published"], var_name="source", value_name="percent")
    long = long.dropna(subset=["percent"])
    fig = px.bar(long, x="label", y="percent", color="source", barmode="group",
                 color_discrete_map=COVERAGE_COLORS, title="Token coverage (%)",
                 labels={"label": "", "percent": "%"})
    fig.update_yaxes(range=[max(0.0, long["percent"].min() - 5), 100])
    fig.update_layout(**CHART_LAYOUT)
    st.plotly_chart(fig, use_container_width=True)

    off = table[table["difference"].abs() > 1.0]
    if not off.empty:
        st.warning(
            "Coverage differs from the published figure by more than one point for: "
            + ", ".join(off["label"])
            + ". Check the tokenisation and the embedding file."
        )
    st.dataframe(table.drop(columns="label"), use_container_width=True)
