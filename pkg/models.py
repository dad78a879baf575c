from sqlalchemy import Column, Integer, String, Float, DateTime, ForeignKey, Boolean, Text, create_engine
from sqlalchemy.orm import declarative_base, relationship, sessionmaker
from datetime import datetime
import os

# Create the base class for our ORM models
Base = declarative_base()


class DatasetRecord(Base):
    __tablename__ = "datasets"

    id = Column(Integer, primary_key=True)
    name = Column(String, nullable=False)
    path = Column(String)
    format = Column(String)
    n_samples = Column(Integer, nullable=False)
    n_features = Column(Integer, nullable=False)

    # Relationships
    results = relationship("RunResult", back_populates="dataset")

    def __repr__(self):
        return f"<DatasetRecord(name='{self.name}', n_samples={self.n_samples}, n_features={self.n_features})>"


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True)
    command = Column(String, nullable=False)
    method = Column(String)
    config = Column(Text)  # JSON echo of the run configuration
    start_time = Column(DateTime, default=datetime.now, nullable=False)
    end_time = Column(DateTime)
    success = Column(Boolean)
    error_message = Column(String)
    reports_written = Column(Integer, default=0)

    # Relationships
    results = relationship("RunResult", back_populates="run")

    def __repr__(self):
        return f"<ExperimentRun(command='{self.command}', method='{self.method}', success={self.success})>"


class RunResult(Base):
    __tablename__ = "run_results"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), nullable=False)
    dataset_id = Column(Integer, ForeignKey("datasets.id"), nullable=False)
    fold = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    method = Column(String, nullable=False)
    error_rate = Column(Float)  # None when the run failed
    wall_time = Column(Float)
    outer_iterations = Column(Integer, default=0)
    eig_iterations = Column(Integer, default=0)
    error_message = Column(String)
    created_at = Column(DateTime, default=datetime.now, nullable=False)

    # Relationships
    run = relationship("ExperimentRun", back_populates="results")
    dataset = relationship("DatasetRecord", back_populates="results")

    def __repr__(self):
        return f"<RunResult(method='{self.method}', fold={self.fold}, seed={self.seed}, error_rate={self.error_rate})>"


# Database setup function
def setup_database(db_url=None):
    """Setup the database connection and create tables if they don't exist"""
    if db_url is None:
        # Default to SQLite database in the project directory
        db_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'db', 'experiments.db')
        os.makedirs(os.path.dirname(db_path), exist_ok=True)
        db_url = f"sqlite:///{db_path}"

    # Create engine and session
    engine = create_engine(db_url)
    Session = sessionmaker(bind=engine)

    # Create tables
    Base.metadata.create_all(engine)

    return engine, Session
