"""
ViBE - Results Warehouse Schema
Star schema for experiment results: one row per method, scenario and
experiment, with per-run AUCs, specificity points and loss trajectories as facts.
"""

from sqlalchemy import (
    create_engine, Column, Integer, String, Float, DateTime, ForeignKey, Text, UniqueConstraint
)
from sqlalchemy.orm import declarative_base, relationship, sessionmaker
from datetime import datetime

Base = declarative_base()


# Dimension Tables

class DimMethod(Base):
    """Dimension table for recommendation methods"""
    __tablename__ = 'dim_method'

    method_key = Column(Integer, primary_key=True, autoincrement=True)
    method_name = Column(String(50), unique=True, nullable=False)  # vibe, agnostic-embed, cf-agnostic, cf-aware
    family = Column(String(50))  # embedding, collaborative-filtering
    description = Column(Text)
    created_at = Column(DateTime, default=datetime.utcnow)

    scenario_aucs = relationship("FactScenarioAuc", back_populates="method")
    specificity_aucs = relationship("FactSpecificityAuc", back_populates="method")
    training_losses = relationship("FactTrainingLoss", back_populates="method")


class DimScenario(Base):
    """Dimension table for cold-start scenarios"""
    __tablename__ = 'dim_scenario'

    scenario_key = Column(Integer, primary_key=True, autoincrement=True)
    scenario_code = Column(String(5), unique=True, nullable=False)  # i, ii, iii
    scenario_name = Column(String(100))
    new_body = Column(Integer, default=0)
    new_garment = Column(Integer, default=0)

    scenario_aucs = relationship("FactScenarioAuc", back_populates="scenario")
    specificity_aucs = relationship("FactSpecificityAuc", back_populates="scenario")


class DimExperiment(Base):
    """One evaluation experiment, identified by its configuration hash"""
    __tablename__ = 'dim_experiment'

    experiment_key = Column(Integer, primary_key=True, autoincrement=True)
    config_hash = Column(String(64), unique=True, nullable=False)
    catalog_name = Column(String(255))
    num_bodies = Column(Integer)
    num_garments = Column(Integer)
    num_types = Column(Integer)
    runs = Column(Integer)
    base_seed = Column(Integer)
    created_at = Column(DateTime, default=datetime.utcnow)

    scenario_aucs = relationship("FactScenarioAuc", back_populates="experiment")
    specificity_aucs = relationship("FactSpecificityAuc", back_populates="experiment")
    training_losses = relationship("FactTrainingLoss", back_populates="experiment")


# Fact Tables

class FactScenarioAuc(Base):
    """AUC of one method in one scenario for one run"""
    __tablename__ = 'fact_scenario_auc'
    __table_args__ = (UniqueConstraint('experiment_key', 'method_key', 'scenario_key', 'run_seed'),)

    auc_key = Column(Integer, primary_key=True, autoincrement=True)
    experiment_key = Column(Integer, ForeignKey('dim_experiment.experiment_key'), nullable=False)
    method_key = Column(Integer, ForeignKey('dim_method.method_key'), nullable=False)
    scenario_key = Column(Integer, ForeignKey('dim_scenario.scenario_key'), nullable=False)
    run_seed = Column(Integer, nullable=False)

    # Measures
    auc = Column(Float, nullable=False)

    experiment = relationship("DimExperiment", back_populates="scenario_aucs")
    method = relationship("DimMethod", back_populates="scenario_aucs")
    scenario = relationship("DimScenario", back_populates="scenario_aucs")


class FactSpecificityAuc(Base):
    """Mean AUC over the q% most body-specific garments"""
    __tablename__ = 'fact_specificity_auc'
    __table_args__ = (UniqueConstraint('experiment_key', 'method_key', 'scenario_key', 'quantile'),)

    specificity_key = Column(Integer, primary_key=True, autoincrement=True)
    experiment_key = Column(Integer, ForeignKey('dim_experiment.experiment_key'), nullable=False)
    method_key = Column(Integer, ForeignKey('dim_method.method_key'), nullable=False)
    scenario_key = Column(Integer, ForeignKey('dim_scenario.scenario_key'), nullable=False)
    quantile = Column(Integer, nullable=False)

    # Measures
    auc = Column(Float, nullable=False)

    experiment = relationship("DimExperiment", back_populates="specificity_aucs")
    method = relationship("DimMethod", back_populates="specificity_aucs")
    scenario = relationship("DimScenario", back_populates="specificity_aucs")


class FactTrainingLoss(Base):
    """Per-epoch training loss of one trained model"""
    __tablename__ = 'fact_training_loss'
    __table_args__ = (UniqueConstraint('experiment_key', 'method_key', 'run_seed', 'epoch'),)

    loss_key = Column(Integer, primary_key=True, autoincrement=True)
    experiment_key = Column(Integer, ForeignKey('dim_experiment.experiment_key'), nullable=False)
    method_key = Column(Integer, ForeignKey('dim_method.method_key'), nullable=False)
    run_seed = Column(Integer, nullable=False)
    epoch = Column(Integer, nullable=False)

    # Measures
    loss = Column(Float, nullable=False)
    learning_rate = Column(Float)

    experiment = relationship("DimExperiment", back_populates="training_losses")
    method = relationship("DimMethod", back_populates="training_losses")


# Database initialization functions

def get_engine(db_path: str = "sqlite:///output/vibe_results.db"):
    """Create and return database engine"""
    return create_engine(db_path, echo=False)


def create_tables(engine):
    """Create all tables in the database"""
    Base.metadata.create_all(engine)


def get_session(engine):
    """Create and return a database session"""
    Session = sessionmaker(bind=engine)
    return Session()
