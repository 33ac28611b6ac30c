import json
from pathlib import Path

import matplotlib.pyplot as plt
import pytest

from greencone_plots import FAIL_COLOR, PASS_COLOR
from greencone_plots.cone_overlay import main, plot_cone_overlay
from greencone_plots.io import SchemaError, read_verify_report

DATA = Path(__file__).parent / "data"


@pytest.fixture(autouse=True)
def close_figures():
    yield
    plt.close("all")


def direction_rays(ax):
    """Rays are the 1.4-width two-point lines drawn from the origin."""
    return [ln for ln in ax.lines if ln.get_linewidth() == 1.4]


class TestOverlayStructure:
    def test_passing_report_all_inside(self):
        verify = read_verify_report(DATA / "report_verify.json")
        fig = plot_cone_overlay(DATA / "report_verify.json", DATA / "ladder_verify.csv")
        ax = fig.axes[0]
        rays = direction_rays(ax)
        assert len(rays) == verify["n_directions"] == 18
        assert all(ln.get_color() == PASS_COLOR for ln in rays)
        # wedge edges (2) + modified outline (2) + unit circle (1) + rays
        assert len(ax.lines) == 5 + len(rays)
        assert len(ax.collections) == 1  # shaded wedge

    def test_adversarial_colors_match_pass_flags_exactly(self):
        verify = read_verify_report(DATA / "report_adversarial.json")
        fig = plot_cone_overlay(
            DATA / "report_adversarial.json", DATA / "ladder_verify.csv"
        )
        rays = direction_rays(fig.axes[0])
        assert len(rays) == len(verify["directions"])
        expected = [PASS_COLOR if r["pass"] else FAIL_COLOR for r in verify["directions"]]
        assert [ln.get_color() for ln in rays] == expected
        assert FAIL_COLOR in expected  # the control really failed

    def test_empty_direction_list_wedge_only(self, tmp_path):
        doc = json.loads((DATA / "report_verify.json").read_text())
        doc["verify"]["directions"] = []
        doc["verify"]["n_directions"] = 0
        path = tmp_path / "empty.json"
        path.write_text(json.dumps(doc))
        fig = plot_cone_overlay(path, DATA / "ladder_verify.csv")
        ax = fig.axes[0]
        assert len(direction_rays(ax)) == 0
        assert any("no paratingent directions" in t.get_text() for t in ax.texts)

    def test_two_torus_report_rejected(self, tmp_path):
        doc = json.loads((DATA / "report_verify.json").read_text())
        doc["verify"]["base_x"] = [0.1, 0.2]
        doc["verify"]["base_p"] = [0.0, 0.0]
        path = tmp_path / "n2.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="circle case"):
            plot_cone_overlay(path, DATA / "ladder_verify.csv")
        assert main([str(path), str(DATA / "ladder_verify.csv"), str(tmp_path / "o.png")]) == 2

    def test_cli_round_trip(self, tmp_path):
        out = tmp_path / "overlay.png"
        code = main([
            str(DATA / "report_verify.json"),
            str(DATA / "ladder_verify.csv"),
            str(out),
        ])
        assert code == 0
        assert out.stat().st_size > 0
