import xml.etree.ElementTree as ET

import pytest

from convprobe.svg import DEFAULT_BANDS, ChartSpec, Series, render_chart

NS = {"s": "http://www.w3.org/2000/svg"}


def parse(doc):
    root = ET.fromstring(doc.encode())
    assert root.tag == "{http://www.w3.org/2000/svg}svg" and root.get("version") == "1.1"
    return root


def test_single_series_one_polyline():
    root = parse(render_chart(ChartSpec("line", [Series("a", [0, 1, 2], [0, 1, 0])], bands=DEFAULT_BANDS)))
    lines = root.findall(".//s:polyline", NS)
    assert len(lines) == 1
    assert len(lines[0].get("points").split()) == 3


def test_dual_axis_groups():
    spec = ChartSpec("dual", [Series("amp", [1, 2, 3], [0.1, 0.2, 0.3]), Series("phase", [1, 2, 3], [5, 6, 7], axis="right")],
                     y_label="rho A", y2_label="rho P")
    root = parse(render_chart(spec))
    groups = [g.get("class") for g in root.findall(".//s:g", NS)]
    assert "y-axis left" in groups and "y-axis right" in groups
    texts = [t.text for t in root.iter("{http://www.w3.org/2000/svg}text")]
    assert "rho A" in texts and "rho P" in texts
    with pytest.raises(ValueError):
        render_chart(ChartSpec("dual", [Series("amp", [1], [1])]))


def test_histogram_proportional_bars():
    root = parse(render_chart(ChartSpec("histogram", [Series("n", [], [1, 2], edges=[0, 1, 2])])))
    rects = root.findall(".//s:rect", NS)
    assert len(rects) == 2
    h = [float(r.get("height")) for r in rects]
    assert h[1] / h[0] == pytest.approx(2.0, rel=1e-3)
    assert sum(float(r.get("data-value")) for r in rects) == 3.0


def test_window_overlay_parts():
    x = list(range(5))
    spec = ChartSpec("window", [
        Series("scores", x * 2, [0.1, 0.2, 0.3, 0.4, 0.5, -0.1, -0.2, -0.3, -0.4, -0.5], role="scatter"),
        Series("median", x, [0.0] * 5, role="median"),
        Series("iqr", x, [-0.3] * 5, role="iqr", y_high=[0.3] * 5),
    ])
    root = parse(render_chart(spec))
    assert len(root.findall(".//s:circle", NS)) == 10
    assert root.find(".//s:polyline[@class='median']", NS) is not None
    assert root.find(".//s:polygon[@class='iqr']", NS) is not None


def test_no_scripting_and_escaping():
    doc = render_chart(ChartSpec("line", [Series("<b>&", [0, 1], [1, 2])], title="a < b"))
    parse(doc)
    assert "<script" not in doc.lower() and "onload" not in doc.lower()


def test_deterministic_output():
    spec = ChartSpec("line", [Series("a", [0, 1, 2], [0.123456789, 1, 0])])
    assert render_chart(spec) == render_chart(spec)


@pytest.mark.parametrize("spec", [
    ChartSpec("line", []),
    ChartSpec("line", [Series("a", [], [])]),
    ChartSpec("line", [Series("a", [0, 1], [0])]),
    ChartSpec("line", [Series("a", [0, 1], [0, float("nan")])]),
    ChartSpec("histogram", [Series("a", [], [1, 2], edges=[0, 1])]),
    ChartSpec("pie", [Series("a", [0], [0])]),
])
def test_invalid_specs(spec):
    with pytest.raises(ValueError):
        render_chart(spec)
