"""Figure generation from greencone CSV/JSON outputs.

Plotting never recomputes mathematics: the input files are taken as ground
truth and a checksum of them is embedded in the image metadata.
"""

import matplotlib

matplotlib.use("Agg")

__version__ = "0.1.0"

# fixed palette: figures are diffable across runs
PASS_COLOR = "#2a9d8f"
FAIL_COLOR = "#e63946"
PLUS_COLOR = "#1d3557"
MINUS_COLOR = "#e76f51"
SHADE_COLOR = "#a8dadc"
GUIDE_COLOR = "#6c757d"
