import numpy as np
import pandas as pd
import plotly.graph_objects as go
import pytest

from adapters.plotly_adapter import FIGURE_KINDS

FRAMES = {
    "single-neuron-run": pd.DataFrame({"t": [0, 1, 2], "x": [1.0, -0.5, 0.1], "y": [4.0, 3.9, 3.8]}),
    "single-neuron-sweep": pd.DataFrame({"eta": [0.01, 0.1], "limiting_sharpness": [190.0, 18.0]}),
    "mean-model-run": pd.DataFrame({"t": [0, 1], "A": [1.0, -0.9], "b": [0.0, -0.01], "sharp_proxy": [3.0, 2.9]}),
    "mean-model-sweep": pd.DataFrame({"eta": [1e-4, 1e-3], "b_inf": [-1e-4, -0.2],
                                      "regime": ["small-bias", "threshold-neuron"]}),
    "relu-train": pd.DataFrame({"t": [0, 1], "A": [0.1, 0.2], "b": [0.0, -0.1], "sharpness": [np.nan, 3.0]}),
    "relu-sweep": pd.DataFrame({"eta": [1e-4, 1e-3], "b_final": [-0.01, -0.5], "test_acc": [0.9, 1.0]}),
    "relu-compare": pd.DataFrame({"t": [0, 1], "b_network": [0.0, -0.1], "b_mean_model": [0.0, -0.1],
                                  "A_network": [1.0, 0.5], "A_mean_model": [1.0, 0.5]}),
    "scaling": pd.DataFrame({"eta": [1e-3, 1e-2, 1e-3], "gap": [1e-3, 1e-2, 0.0], "loss": ["a", "a", "b"]}),
}


def test_every_figure_kind_has_a_sample():
    assert set(FRAMES) == set(FIGURE_KINDS)


@pytest.mark.parametrize("kind", FIGURE_KINDS)
def test_build_figure(plotly_adapter, kind):
    fig, error = plotly_adapter.build_figure(FRAMES[kind], kind)
    assert error is None
    assert isinstance(fig, go.Figure)
    assert len(fig.data) >= 1


def test_reference_lines_follow_options(plotly_adapter):
    fig, _ = plotly_adapter.build_figure(FRAMES["single-neuron-run"], "single-neuron-run", eta=0.1)
    assert any(shape.y0 == 20.0 for shape in fig.layout.shapes)


def test_unknown_kind(plotly_adapter):
    fig, error = plotly_adapter.build_figure(FRAMES["scaling"], "histogram")
    assert fig is None
    assert "histogram" in error


def test_missing_column_is_reported(plotly_adapter):
    fig, error = plotly_adapter.build_figure(pd.DataFrame({"t": [0]}), "mean-model-run")
    assert fig is None
    assert "Coluna ausente" in error


def test_render_script_points_at_the_csv(plotly_adapter, tmp_path):
    csv = tmp_path / "run.csv"
    script = plotly_adapter.render_script(str(csv), "scaling", y="bounce_iters")
    assert repr(str(csv.resolve())) in script
    assert "'bounce_iters'" in script
    assert str(csv.resolve().with_suffix(".html")) in script
    compile(script, "plot.py", "exec")


def test_emit_script(plotly_adapter, tmp_path):
    csv = tmp_path / "run.csv"
    path, error = plotly_adapter.emit_script(str(csv), "relu-sweep")
    assert error is None
    assert path == tmp_path / "run.plot.py"
    assert path.exists()
    path, error = plotly_adapter.emit_script(str(csv), "nope")
    assert path is None and error
