# Presentation constants for the enhanced time series plot. Golden-file tests
# depend on these values; change them together with the fixtures.

WHITE = (255, 255, 255)
CELL_POSITIVE = (200, 16, 32)
CELL_NEGATIVE = (24, 64, 200)
CASE_DARK = (48, 48, 48)
RAW_LINE = "#e0b000"
FIT_LINE = "#000000"
FORECAST = "#1a9a2a"
CASE_LINE = "#808080"
AXIS = "#404040"
FONT = "sans-serif"
SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
                 "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def ramp(weight, full):
    """Linear blend from ``full`` at weight 0 to white at weight 1."""
    w = min(max(float(weight), 0.0), 1.0)
    rgb = (int(round(f + w * (255 - f))) for f in full)
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def cell_color(weight, sign):
    return ramp(weight, CELL_POSITIVE if sign >= 0 else CELL_NEGATIVE)


def case_color(weight):
    return ramp(weight, CASE_DARK)


def flag_color(sign):
    return ramp(0.0, CELL_POSITIVE if sign >= 0 else CELL_NEGATIVE)
