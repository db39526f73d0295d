"""
Unit tests for export_service module.
"""
from xml.etree import ElementTree

import numpy as np
import pandas as pd
import plotly.graph_objects as go
import pytest

from src.models.params import EpochRecord, TrainReport, UgmmLayerParams
from src.services import export_service

SVG_NS = "{http://www.w3.org/2000/svg}"


@pytest.fixture
def two_component_neuron():
    return UgmmLayerParams(
        mu=np.array([[-1.0, 2.0]]),
        log_sigma=np.log(np.array([[0.5, 1.0]])),
        pi_logit=np.log(np.array([[0.25, 0.75]])),
    )


def test_density_table_columns(two_component_neuron):
    """Test one column per component plus the mixture."""
    frame = export_service.density_table(two_component_neuron, 0, np.linspace(-5, 5, 11))
    assert list(frame.columns) == ["y", "component_0", "component_1", "total"]
    assert len(frame) == 11
    np.testing.assert_allclose(frame["total"], frame["component_0"] + frame["component_1"])


def test_density_table_values(two_component_neuron):
    """Test a weighted component value at its mean."""
    frame = export_service.density_table(two_component_neuron, 0, [-1.0])
    expected = 0.25 / (0.5 * np.sqrt(2 * np.pi))
    assert frame.loc[0, "component_0"] == pytest.approx(expected, rel=1e-12)


def test_write_report_csv(tmp_path):
    """Test the per-epoch report file."""
    report = TrainReport([EpochRecord(epoch=0, lr=0.01, train_loss=0.7, test_accuracy=0.9)])
    path = export_service.write_report_csv(report, tmp_path / "out" / "report.csv")
    frame = pd.read_csv(path)
    assert frame.to_dict("records") == [{"epoch": 0, "lr": 0.01, "train_loss": 0.7, "test_accuracy": 0.9}]


def test_density_figure_traces(two_component_neuron):
    """Test that each component and the mixture get a trace, components dashed."""
    frame = export_service.density_table(two_component_neuron, 0, np.linspace(-3, 3, 7))
    fig = export_service.density_figure(frame, "neuron 0")
    assert isinstance(fig, go.Figure)
    assert [trace.name for trace in fig.data] == ["component_0", "component_1", "P(y)"]
    assert [trace.line.dash for trace in fig.data] == ["dash", "dash", None]


def test_density_svg_markup(two_component_neuron):
    """Test one dashed polyline per component and a solid one for the total."""
    frame = export_service.density_table(two_component_neuron, 0, np.linspace(-3, 3, 7))
    root = ElementTree.fromstring(export_service.density_svg(frame, "a < b"))
    polylines = root.findall(f"{SVG_NS}polyline")
    assert len(polylines) == 3
    assert [line.get("stroke-dasharray") for line in polylines] == ["6 4", "6 4", None]
    assert polylines[-1].get("stroke") == "black"
    assert all(len(line.get("points").split()) == 7 for line in polylines)
    assert any(text.text == "a < b" for text in root.iter(f"{SVG_NS}text"))


def test_density_svg_peak_touches_top(two_component_neuron):
    """Test that the mixture maximum maps just under the plot's upper edge."""
    frame = export_service.density_table(two_component_neuron, 0, np.linspace(-3, 3, 61))
    root = ElementTree.fromstring(export_service.density_svg(frame, "n"))
    total = root.findall(f"{SVG_NS}polyline")[-1]
    heights = [float(p.split(",")[1]) for p in total.get("points").split()]
    # top margin 40, plot height 352, axis headroom 5 %
    assert min(heights) == pytest.approx(40 + 352 * (1 - 1 / 1.05), abs=0.01)


def test_save_density_plots(tmp_path, two_component_neuron):
    """Test that HTML and SVG are both always written."""
    frame = export_service.density_table(two_component_neuron, 0, np.linspace(-3, 3, 7))
    written = export_service.save_density_plots(frame, tmp_path / "plots" / "density", "n")
    assert written == [tmp_path / "plots" / "density.html", tmp_path / "plots" / "density.svg"]
    assert "density" in written[0].read_text()
    assert written[1].read_text().startswith("<svg ")


def test_density_svg_is_deterministic(two_component_neuron):
    """Test that the same table gives the same markup."""
    frame = export_service.density_table(two_component_neuron, 0, np.linspace(-3, 3, 7))
    assert export_service.density_svg(frame, "n") == export_service.density_svg(frame.copy(), "n")


def test_comparison_table():
    """Test table formatting of accuracy as a percentage."""
    frame = export_service.comparison_table(
        [
            {"dataset": "Iris", "model": "FFNN", "accuracy": 0.9667, "loss": "Cross-Entropy"},
            {"dataset": "Iris", "model": "uGMM-NN", "accuracy": 1.0, "loss": "NLL (Generative)"},
        ]
    )
    assert list(frame.columns) == ["Dataset", "Model", "Test Accuracy (%)", "Training Loss"]
    assert frame["Test Accuracy (%)"].tolist() == ["96.67", "100.00"]
    text = export_service.format_table(frame)
    assert "uGMM-NN" in text and "NLL (Generative)" in text
