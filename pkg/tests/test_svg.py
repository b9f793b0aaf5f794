import os
import warnings
import xml.etree.ElementTree as ET

import pytest

from conftest import GOLDEN
from nimargin.evidence import bundled_path, effects_for, ingest
from nimargin.meta import fit_hierarchical
from nimargin.simulation import run_grid
from nimargin.svg import _nice_ticks, forest_plot, grid_figure

SVG_NS = "{http://www.w3.org/2000/svg}"
REGEN = os.environ.get("NIMARGIN_REGEN_GOLDEN") == "1"


def grid_svg():
    return grid_figure(run_grid(n_per_arm=2000, seed=42).summaries)


def forest_svg():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        recs = ingest(bundled_path("steps"))
    groups = []
    for label in ("treatment_policy", "hypothetical"):
        eff = effects_for(recs, label)
        groups.append((label, eff, fit_hierarchical(eff)))
    return forest_plot(groups)


@pytest.mark.parametrize("name, render", [("grid_n2000.svg", grid_svg),
                                          ("forest_steps.svg", forest_svg)])
def test_matches_golden(name, render):
    text = render()
    path = GOLDEN / name
    if REGEN:
        path.write_text(text)
    assert text == path.read_text()


@pytest.mark.parametrize("render", [grid_svg, forest_svg])
def test_well_formed(render):
    root = ET.fromstring(render())
    assert root.tag == SVG_NS + "svg"
    assert root.get("viewBox") == "0 0 800 500"


def test_forest_has_one_diamond_per_group():
    root = ET.fromstring(forest_svg())
    assert len(root.findall(SVG_NS + "polygon")) == 2
    labels = [t.text for t in root.iter(SVG_NS + "text")]
    assert labels.count("STEP 1") == 2


def test_grid_has_series_per_arm_and_panel():
    root = ET.fromstring(grid_svg())
    assert len(root.findall(SVG_NS + "polyline")) == 4


@pytest.mark.parametrize("lo, hi", [(0, 0.1), (-16.9, -2.7), (-18.2, 0.5), (3, 3)])
def test_nice_ticks_cover_range(lo, hi):
    ticks = _nice_ticks(lo, hi)
    assert 2 <= len(ticks) <= 11
    assert ticks == sorted(ticks)
    assert all(lo - 1e-9 <= t <= max(hi, lo + 1) + 1e-9 for t in ticks)
