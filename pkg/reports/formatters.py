"""
Formatting utilities for ViBE metric tables
"""

from typing import Sequence

import pandas as pd

from pipelines.body_typing import SCENARIOS, SCENARIO_NAMES
from pipelines.evaluation import ScenarioReport


def format_auc(value):
    """Format an AUC with four decimals"""
    return f"{value:.4f}" if pd.notna(value) else ""


def clean_column_names(df):
    """Clean column names by removing underscores and title casing"""
    df_copy = df.copy()
    df_copy.columns = [str(col).replace('_', ' ').title() for col in df_copy.columns]
    return df_copy


def scenario_table(reports: Sequence[ScenarioReport]) -> pd.DataFrame:
    """One row per (method, scenario): mean, std and run count"""
    rows = []
    for report in reports:
        for scenario in SCENARIOS:
            if scenario not in report.runs:
                continue
            rows.append({
                'method': report.method,
                'scenario': scenario,
                'description': SCENARIO_NAMES[scenario],
                'mean_auc': report.mean(scenario),
                'std_auc': report.std(scenario),
                'runs': report.num_runs,
            })
    return pd.DataFrame(rows, columns=['method', 'scenario', 'description', 'mean_auc', 'std_auc', 'runs'])


def specificity_table(reports: Sequence[ScenarioReport], scenario: str = 'iii') -> pd.DataFrame:
    """Methods as rows, quantiles (most inclusive first) as columns"""
    data = {report.method: dict(report.specificity_curve(scenario)) for report in reports}
    table = pd.DataFrame.from_dict(data, orient='index')
    if table.empty:
        return table
    table = table[sorted(table.columns, reverse=True)]
    table.columns = [f"{q}%" for q in table.columns]
    table.index.name = 'method'
    return table


def format_scenario_table(reports: Sequence[ScenarioReport]) -> str:
    """Mean +/- std per method, scenarios as columns"""
    table = scenario_table(reports)
    if table.empty:
        return "(no results)\n"
    table['auc'] = table['mean_auc'].apply(format_auc) + ' +/- ' + table['std_auc'].apply(format_auc)
    wide = table.pivot(index='method', columns='scenario', values='auc')
    wide = wide.reindex(index=[r.method for r in reports], columns=[s for s in SCENARIOS if s in wide.columns])
    wide.columns = [f"({s}) {SCENARIO_NAMES[s]}" for s in wide.columns]
    return wide.to_string() + '\n'


def format_dataset_statistics(statistics: pd.DataFrame) -> str:
    """Per-type train/test counts with a total column"""
    table = statistics.copy()
    table['total'] = table.sum(axis=1)
    table.index = [str(i).replace('_', ' ') for i in table.index]
    return table.to_string() + '\n'


def format_recommendations(body_id: str, best, worst) -> str:
    lines = [f"Recommendations for {body_id}", "  Most suitable:"]
    lines.extend(f"    {rank:>3}. {garment_id:<12} {score:+.6f}" for rank, (garment_id, score) in enumerate(best, 1))
    lines.append("  Least suitable:")
    lines.extend(f"    {rank:>3}. {garment_id:<12} {score:+.6f}" for rank, (garment_id, score) in enumerate(worst, 1))
    return '\n'.join(lines) + '\n'
