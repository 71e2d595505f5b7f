"""
Adaptador para a biblioteca Plotly.
Isola a construção das figuras do resto da aplicação. As figuras são
montadas a partir dos CSVs emitidos e usadas pelos scripts de plot gerados
com --emit-plot-script; o núcleo nunca renderiza nada.
"""
import logging
import math
from pathlib import Path
from typing import Optional, Tuple

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

logger = logging.getLogger(__name__)

FIGURE_KINDS = (
    "single-neuron-run",
    "single-neuron-sweep",
    "mean-model-run",
    "mean-model-sweep",
    "relu-train",
    "relu-sweep",
    "relu-compare",
    "scaling",
)

_SCRIPT_TEMPLATE = '''"""Script de plot gerado para {csv_name}."""
import sys

import pandas as pd

sys.path.insert(0, {root!r})
from adapters.plotly_adapter import PlotlyAdapter

df = pd.read_csv({csv_path!r})
fig, error = PlotlyAdapter().build_figure(df, {kind!r}, **{options!r})
if error:
    sys.exit(error)
fig.write_html({html_path!r})
'''


class PlotlyAdapter:
    """Adaptador para a biblioteca Plotly."""

    def build_figure(self, df: pd.DataFrame, kind: str, **options) -> Tuple[Optional[go.Figure], Optional[str]]:
        """Figura para um dos tipos de CSV do laboratório; devolve (figura, erro)."""
        builders = {
            "single-neuron-run": self._single_neuron_run,
            "single-neuron-sweep": self._single_neuron_sweep,
            "mean-model-run": self._mean_model_run,
            "mean-model-sweep": self._mean_model_sweep,
            "relu-train": self._relu_train,
            "relu-sweep": self._relu_sweep,
            "relu-compare": self._relu_compare,
            "scaling": self._scaling,
        }
        builder = builders.get(kind)
        if builder is None:
            return None, f"Tipo de figura desconhecido: {kind}"
        try:
            return builder(df, **options), None
        except KeyError as e:
            return None, f"Coluna ausente no CSV para a figura {kind}: {e}"
        except Exception as e:
            logger.exception("Falha ao montar a figura %s", kind)
            return None, f"Erro ao criar a figura {kind}: {str(e)}"

    def _single_neuron_run(self, df: pd.DataFrame, eta: Optional[float] = None) -> go.Figure:
        fig = make_subplots(rows=1, cols=2, subplot_titles=["Trajetória (x, y)", "Nitidez y² ao longo de t"])
        fig.add_trace(go.Scatter(x=df["x"], y=df["y"], mode="lines+markers", name="GD"), row=1, col=1)
        fig.add_trace(go.Scatter(x=df["t"], y=df["y"] ** 2, mode="lines", name="y²"), row=1, col=2)
        if eta:
            fig.add_hline(y=2.0 / eta, line_dash="dash", annotation_text="2/η", row=1, col=2)
        fig.update_layout(title_text="GD em ℓ(xy)")
        return fig

    def _single_neuron_sweep(self, df: pd.DataFrame) -> go.Figure:
        fig = go.Figure()
        fig.add_trace(go.Scatter(x=df["eta"], y=df["limiting_sharpness"], mode="markers", name="nitidez limite"))
        fig.add_trace(go.Scatter(x=df["eta"], y=2.0 / df["eta"], mode="lines", line=dict(dash="dash"), name="2/η"))
        fig.update_xaxes(type="log", title_text="η")
        fig.update_yaxes(type="log", title_text="nitidez")
        return fig

    def _mean_model_run(self, df: pd.DataFrame) -> go.Figure:
        fig = make_subplots(rows=3, cols=1, shared_xaxes=True, subplot_titles=["A_t", "b_t", "½d²g(b_t)²"])
        fig.add_trace(go.Scatter(x=df["t"], y=df["A"], mode="lines", name="A"), row=1, col=1)
        fig.add_trace(go.Scatter(x=df["t"], y=df["b"], mode="lines", name="b"), row=2, col=1)
        fig.add_trace(go.Scatter(x=df["t"], y=df["sharp_proxy"], mode="lines", name="nitidez"), row=3, col=1)
        return fig

    def _mean_model_sweep(self, df: pd.DataFrame, d: Optional[int] = None) -> go.Figure:
        fig = go.Figure()
        for regime, part in df.groupby("regime", sort=True):
            fig.add_trace(go.Scatter(x=part["eta"], y=part["b_inf"], mode="markers", name=str(regime)))
        if d:
            fig.add_vline(x=8.0 * math.pi / d**2, line_dash="dash", annotation_text="8π/d²")
        fig.update_xaxes(type="log", title_text="η")
        fig.update_yaxes(title_text="b∞")
        return fig

    def _relu_train(self, df: pd.DataFrame, eta: Optional[float] = None) -> go.Figure:
        fig = make_subplots(rows=3, cols=1, shared_xaxes=True,
                            subplot_titles=["d(a⁻ + a⁺)", "b", "Nitidez"])
        fig.add_trace(go.Scatter(x=df["t"], y=df["A"], mode="lines", name="A"), row=1, col=1)
        fig.add_trace(go.Scatter(x=df["t"], y=df["b"], mode="lines", name="b"), row=2, col=1)
        fig.add_trace(go.Scatter(x=df["t"], y=df["sharpness"], mode="lines", name="nitidez"), row=3, col=1)
        if eta:
            fig.add_hline(y=2.0 / eta, line_dash="dash", annotation_text="2/η", row=3, col=1)
        return fig

    def _relu_sweep(self, df: pd.DataFrame) -> go.Figure:
        fig = make_subplots(rows=1, cols=2, subplot_titles=["Viés final", "Acurácia de teste"])
        fig.add_trace(go.Scatter(x=df["eta"], y=df["b_final"], mode="lines+markers", name="b"), row=1, col=1)
        fig.add_trace(go.Scatter(x=df["eta"], y=df["test_acc"], mode="lines+markers", name="acc"), row=1, col=2)
        fig.update_xaxes(type="log", title_text="η")
        return fig

    def _relu_compare(self, df: pd.DataFrame) -> go.Figure:
        fig = make_subplots(rows=2, cols=1, shared_xaxes=True, subplot_titles=["b_t", "A_t"])
        fig.add_trace(go.Scatter(x=df["t"], y=df["b_network"], mode="lines", name="rede"), row=1, col=1)
        fig.add_trace(go.Scatter(x=df["t"], y=df["b_mean_model"], mode="lines", name="modelo médio"), row=1, col=1)
        fig.add_trace(go.Scatter(x=df["t"], y=df["A_network"], mode="lines", name="rede (A)"), row=2, col=1)
        fig.add_trace(go.Scatter(x=df["t"], y=df["A_mean_model"], mode="lines", name="modelo médio (A)"), row=2, col=1)
        return fig

    def _scaling(self, df: pd.DataFrame, x: str = "eta", y: str = "gap", group: str = "loss") -> go.Figure:
        fig = go.Figure()
        for name, part in df.groupby(group, sort=True):
            part = part[part[y] > 0]
            fig.add_trace(go.Scatter(x=part[x], y=part[y], mode="markers", name=str(name)))
        fig.update_xaxes(type="log", title_text=x)
        fig.update_yaxes(type="log", title_text=y)
        return fig

    @staticmethod
    def render_script(csv_path: str, kind: str, **options) -> str:
        """Código de um script autocontido que lê o CSV e grava a figura em HTML."""
        csv = Path(csv_path).resolve()
        return _SCRIPT_TEMPLATE.format(
            csv_name=csv.name,
            root=str(Path(__file__).resolve().parent.parent),
            csv_path=str(csv),
            kind=kind,
            options=options,
            html_path=str(csv.with_suffix(".html")),
        )

    def emit_script(self, csv_path: str, kind: str, **options) -> Tuple[Optional[Path], Optional[str]]:
        if kind not in FIGURE_KINDS:
            return None, f"Tipo de figura desconhecido: {kind}"
        script = Path(csv_path).with_suffix(".plot.py")
        try:
            script.write_text(self.render_script(csv_path, kind, **options), encoding="utf-8")
        except OSError as e:
            return None, f"Erro ao gravar o script de plot: {str(e)}"
        logger.info("Script de plot gravado: %s", script)
        return script, None
