import hashlib
import shutil
from pathlib import Path

import matplotlib.pyplot as plt
import pytest
from PIL import Image

from greencone_plots.io import SchemaError
from greencone_plots.ladder import main, plot_ladder

DATA = Path(__file__).parent / "data"


@pytest.fixture(autouse=True)
def close_figures():
    yield
    plt.close("all")


class TestLadderStructure:
    def test_saddle_golden_structure(self):
        fig = plot_ladder(DATA / "ladder_saddle.csv")
        assert len(fig.axes) == 2
        top, bottom = fig.axes
        # one curve per family plus one dotted asymptote per family
        assert len(top.lines) == 4
        data_lines = [ln for ln in top.lines if ln.get_linestyle() in ("-", "--")]
        assert len(data_lines) == 2
        for ln in data_lines:
            assert len(ln.get_xdata()) == 3  # three rungs in the sample ladder
        assert len(bottom.lines) == 2  # residual series for both families

    def test_single_row_points_only(self, tmp_path):
        src = (DATA / "ladder_saddle.csv").read_text().splitlines()
        single = tmp_path / "single.csv"
        single.write_text("\n".join(src[:2]) + "\n")
        fig = plot_ladder(single)
        top, bottom = fig.axes
        data_lines = [ln for ln in top.lines if ln.get_marker() in ("o", "s")]
        assert data_lines
        for ln in data_lines:
            assert ln.get_linestyle() == "None"
        assert len(bottom.lines) == 0
        assert bottom.texts  # single-rung note

    def test_missing_column_schema_error(self, tmp_path):
        src = (DATA / "ladder_saddle.csv").read_text().splitlines()
        header = src[0].replace("residual_plus,", "")
        rows = [",".join(r.split(",")[:3] + r.split(",")[4:]) for r in src[1:]]
        bad = tmp_path / "bad.csv"
        bad.write_text("\n".join([header] + rows) + "\n")
        with pytest.raises(SchemaError):
            plot_ladder(bad)
        assert main([str(bad), str(tmp_path / "out.png")]) == 2

    def test_cli_writes_image_with_checksum(self, tmp_path):
        out = tmp_path / "ladder.png"
        assert main([str(DATA / "ladder_saddle.csv"), str(out)]) == 0
        assert out.exists()
        expected = hashlib.sha256((DATA / "ladder_saddle.csv").read_bytes()).hexdigest()
        info = Image.open(out).info
        assert info.get("Description") == f"greencone-input-sha256:{expected}"

    def test_vector_output_supported(self, tmp_path):
        out = tmp_path / "ladder.svg"
        assert main([str(DATA / "ladder_saddle.csv"), str(out)]) == 0
        assert out.read_text().startswith("<?xml")
