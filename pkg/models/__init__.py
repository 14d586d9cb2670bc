"""ViBE - Data Models"""

from .schema import (
    Base,
    DimMethod,
    DimScenario,
    DimExperiment,
    FactScenarioAuc,
    FactSpecificityAuc,
    FactTrainingLoss,
    get_engine,
    create_tables,
    get_session
)

__all__ = [
    'Base',
    'DimMethod',
    'DimScenario',
    'DimExperiment',
    'FactScenarioAuc',
    'FactSpecificityAuc',
    'FactTrainingLoss',
    'get_engine',
    'create_tables',
    'get_session'
]
