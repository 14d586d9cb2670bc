"""
Static charts for ViBE experiments, written as standalone HTML
"""

import logging
from pathlib import Path
from typing import Dict, Sequence, Union

import numpy as np
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go

from pipelines.evaluation import ScenarioReport
from reports.formatters import scenario_table

logger = logging.getLogger('Reports')

PathLike = Union[str, Path]


def _legend_below(fig: go.Figure) -> go.Figure:
    fig.update_layout(
        height=450,
        legend=dict(
            orientation='h',
            yanchor='top',
            y=-0.15,
            xanchor='center',
            x=0.5
        ),
        margin=dict(b=100)
    )
    return fig


def auc_bar_chart(reports: Sequence[ScenarioReport]) -> go.Figure:
    """Mean AUC per scenario and method with std error bars"""
    table = scenario_table(reports)
    fig = px.bar(
        table,
        x='scenario',
        y='mean_auc',
        color='method',
        barmode='group',
        error_y='std_auc',
        labels={'mean_auc': 'AUC', 'scenario': 'Scenario', 'method': 'Method'}
    )
    fig.add_hline(y=0.5, line_dash='dot', line_color='gray')
    return _legend_below(fig)


def specificity_chart(reports: Sequence[ScenarioReport], scenario: str = 'iii') -> go.Figure:
    """Accumulated AUC as body-versatile garments are excluded"""
    rows = [
        {'method': report.method, 'quantile': q, 'auc': value}
        for report in reports
        for q, value in report.specificity_curve(scenario)
    ]
    df = pd.DataFrame(rows, columns=['method', 'quantile', 'auc'])
    fig = px.line(
        df,
        x='quantile',
        y='auc',
        color='method',
        markers=True,
        labels={'quantile': 'Most body-specific garments kept (%)', 'auc': 'AUC', 'method': 'Method'}
    )
    fig.update_xaxes(autorange='reversed')
    return _legend_below(fig)


def distance_histogram(distances: Dict[str, np.ndarray], bins: int = 40) -> go.Figure:
    """Pairwise garment-embedding distances, one trace per trained model"""
    df = pd.concat(
        [pd.DataFrame({'distance': np.asarray(d, dtype=np.float64), 'model': name}) for name, d in distances.items()],
        ignore_index=True
    )
    fig = px.histogram(
        df,
        x='distance',
        color='model',
        nbins=bins,
        barmode='overlay',
        opacity=0.6,
        labels={'distance': 'Pairwise garment distance', 'model': 'Model'}
    )
    return _legend_below(fig)


def loss_chart(trajectory: pd.DataFrame, title: str = '') -> go.Figure:
    fig = px.line(trajectory, x='epoch', y='loss', labels={'epoch': 'Epoch', 'loss': 'Loss'}, title=title or None)
    return _legend_below(fig)


def write_chart(fig: go.Figure, path: PathLike):
    """Standalone HTML with plotly.js loaded from the CDN"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(str(path), include_plotlyjs='cdn', full_html=True)
    logger.info(f"Wrote chart to {path}")
