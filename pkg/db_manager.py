from models import DatasetRecord, ExperimentRun, RunResult, setup_database
from datetime import datetime
from typing import List, Optional
import json
import logging

logger = logging.getLogger(__name__)


class DatabaseManager:
    def __init__(self, db_url=None):
        """Initialize the database manager"""
        self.engine, self.SessionFactory = setup_database(db_url)
        self.session = None

    def __enter__(self):
        """Context manager entry point"""
        self.session = self.SessionFactory()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Context manager exit point"""
        if exc_type is not None:
            # An exception occurred, rollback the transaction
            self.session.rollback()
            logger.error(f"Database transaction rolled back due to {exc_type.__name__}: {exc_val}")
        else:
            self.session.commit()

        self.session.close()
        self.session = None

    def get_or_create_dataset(self, name: str, n_samples: int, n_features: int,
                              path: str = None, format: str = None) -> DatasetRecord:
        """Get or create a dataset record"""
        dataset = self.session.query(DatasetRecord).filter_by(name=name, path=path).first()
        if not dataset:
            dataset = DatasetRecord(name=name, path=path, format=format,
                                    n_samples=n_samples, n_features=n_features)
            self.session.add(dataset)
            self.session.flush()  # Flush to get the ID
            logger.info(f"Created new dataset: {name} ({n_samples} x {n_features})")
        return dataset

    def start_run(self, command: str, method: str = None, config: dict = None) -> ExperimentRun:
        """Start a new experiment run"""
        run = ExperimentRun(
            command=command,
            method=method,
            config=json.dumps(config, sort_keys=True) if config is not None else None,
            start_time=datetime.now(),
        )
        self.session.add(run)
        self.session.flush()
        logger.info(f"Started experiment run {run.id}: {command} ({method})")
        return run

    def finish_run(self, run_id: int, success: bool, reports_written: int, error_message: str = None):
        """Finish an experiment run"""
        run = self.session.query(ExperimentRun).filter_by(id=run_id).first()
        if run:
            run.end_time = datetime.now()
            run.success = success
            run.reports_written = reports_written
            run.error_message = error_message
            logger.info(f"Finished experiment run {run_id}: success={success}, reports={reports_written}")
        return run

    def add_result(self, run_id: int, dataset_id: int, fold: int, seed: int, method: str,
                   error_rate: Optional[float], wall_time: Optional[float] = None,
                   outer_iterations: int = 0, eig_iterations: int = 0,
                   error_message: str = None) -> RunResult:
        """Add one fold/seed result"""
        result = RunResult(
            run_id=run_id,
            dataset_id=dataset_id,
            fold=fold,
            seed=seed,
            method=method,
            error_rate=error_rate,
            wall_time=wall_time,
            outer_iterations=outer_iterations,
            eig_iterations=eig_iterations,
            error_message=error_message,
        )
        self.session.add(result)
        self.session.flush()
        return result

    def get_results(self, run_id: int) -> List[RunResult]:
        """Results of one run ordered by fold and seed"""
        return self.session.query(RunResult).filter_by(run_id=run_id).order_by(
            RunResult.fold, RunResult.seed).all()

    def get_recent_runs(self, limit: int = 10) -> List[ExperimentRun]:
        """Most recent runs first"""
        return self.session.query(ExperimentRun).order_by(
            ExperimentRun.start_time.desc(), ExperimentRun.id.desc()).limit(limit).all()
