# Primary Colors (Dark to light green shades)
PRIMARY_COLORS = ["#2e7d32", "#43a047", "#66bb6a", "#a5d6a7"]

# Accent Colors (Lime green shades)
ACCENT_COLORS = ["#689f38", "#8bc34a", "#aed581", "#dcedc8"]

# Extended Colors (Entity types beyond the first few)
EXTENDED_COLORS = ["#5d4037", "#0277bd", "#7b1fa2", "#ef6c00", "#8d6e63", "#039be5", "#9c27b0", "#f57c00"]

# Text Colors (Very dark to medium green for text)
TEXT_COLORS = ["#1b5e20", "#2e7d32", "#388e3c", "#43a047"]

# Background Colors (Very light green to white)
BACKGROUND_COLORS = ["#e8f5e9", "#f1f8e9", "#f9fbe7", "#ffffff"]

# Training curves
METRIC_COLORS = {
    "loss": "#f44336",  # Red
    "val_f1": PRIMARY_COLORS[0],  # Dark green
    "lr": EXTENDED_COLORS[1],  # Blue
}

# Precision / recall / F1 bars
SCORE_COLORS = {
    "precision": PRIMARY_COLORS[2],
    "recall": ACCENT_COLORS[0],
    "f1": PRIMARY_COLORS[0],
}

# Coverage bars: our measurement against the published ratio
COVERAGE_COLORS = {
    "measured": PRIMARY_COLORS[0],
    "published": "#cccccc",  # Gray
}

# Successful / failed search trials
TRIAL_COLORS = {
    "ok": PRIMARY_COLORS[1],
    "failed": "#f44336",
}

# Shared plotly layout
CHART_LAYOUT = dict(
    plot_bgcolor=BACKGROUND_COLORS[0],
    paper_bgcolor=BACKGROUND_COLORS[3],
    font_color=TEXT_COLORS[2],
    title_font_color=TEXT_COLORS[0],
)
