import sys
from pathlib import Path

import streamlit as st

# Repository root, for the ner_forge package
sys.path.append(str(Path(__file__).parent.parent))

from data import load_run, run_dataset
from ner_forge.config import GLOVE_F1_REFERENCE
from tabs.tab0_training_overview import show_training_overview_tab
from tabs.tab1_evaluation_report import show_evaluation_report_tab
from tabs.tab2_embedding_coverage import show_embedding_coverage_tab
from tabs.tab3_search_trials import show_search_trials_tab

# Set page configuration
st.set_page_config(layout="wide", page_title="NER Forge Run Report")


@st.cache_data
def load_data(run_dir):
    return load_run(run_dir)


run_dir = st.sidebar.text_input("Run directory", value=sys.argv[1] if len(sys.argv) > 1 else "runs/latest")
if not Path(run_dir).is_dir():
    st.error(f"Run directory not found: {run_dir}")
    st.stop()

frames = load_data(run_dir)
if frames.empty:
    st.warning("No metrics.csv, eval.csv, coverage.csv or search.csv found in this directory.")
    st.stop()

# Dataset for the published-F1 comparison; preselected from coverage.csv
datasets = ["(none)"] + list(GLOVE_F1_REFERENCE)
recorded = run_dataset(frames)
dataset = st.sidebar.selectbox(
    "Reference dataset",
    datasets,
    index=datasets.index(recorded) if recorded in datasets else 0,
)
dataset = None if dataset == "(none)" else dataset

st.title("NER Forge Run Report")

# Create tabs for each run output
tab0, tab1, tab2, tab3 = st.tabs([
    "Training",
    "Evaluation",
    "Embedding Coverage",
    "Search",
])

with tab0:
    show_training_overview_tab(frames.metrics)

with tab1:
    show_evaluation_report_tab(frames.eval, dataset)

with tab2:
    show_embedding_coverage_tab(frames.coverage)

with tab3:
    show_search_trials_tab(frames.search)
