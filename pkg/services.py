from typing import Dict, Any, List, Optional, Sequence, Tuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import asyncio
import logging
import time

import numpy as np

from classifiers import BaseClassifier, UnrolledClassifier, make_classifier
from config import get_settings
from data_io import Dataset, FoldSplit, SplitPlan, make_two_cluster
from db_manager import DatabaseManager
from errors import GdpaSdrError
from graph_learning import GraphParams, build_L1
from sdr_classifier import (SolveTrace, brute_force_oracle, build_instance, extract_labels, gdpa_solve,
                            solve_glr_baseline)
from unroll import LayerParams, NetworkConfig, TrainResult

logger = logging.getLogger(__name__)


@dataclass
class RunReport:
    """Outcome of one (fold, seed) run of one method"""
    dataset: str
    fold: int
    seed: int
    method: str
    error_rate: Optional[float]
    wall_time: Optional[float] = None
    outer_iterations: int = 0
    eig_iterations: int = 0
    config: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None
    trace: List[Dict[str, Any]] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_record(self, timestamps: bool = True) -> Dict[str, Any]:
        record = asdict(self)
        record.pop('trace')
        if not timestamps:
            record.pop('wall_time')
        return record


def summarize(reports: Sequence[RunReport]) -> Dict[str, Any]:
    """Mean error rate over the successful runs"""
    rates = [r.error_rate for r in reports if r.ok]
    return {
        'runs': len(reports),
        'failed': sum(1 for r in reports if not r.ok),
        'mean_error_rate': float(np.mean(rates)) if rates else None,
        'std_error_rate': float(np.std(rates)) if rates else None,
    }


def trace_rows(traces: Sequence[SolveTrace]) -> List[Dict[str, Any]]:
    """Per-iteration rows of every GDPA solve, tagged with their layer"""
    return [dict(row, layer=layer) for layer, trace in enumerate(traces, start=1) for row in trace.to_records()]


class ExperimentService:
    """Service for running classifiers over split plans"""

    def __init__(self, db_url=None, persist: bool = False, workers: Optional[int] = None):
        """Initialize the experiment service"""
        settings = get_settings()
        self.db_url = db_url or settings.db_url
        self.persist = persist
        # GDPA_SDR_THREADS caps the pool
        self.workers = max(1, min(workers or settings.threads, settings.threads))

    def _run_split(self, classifier: BaseClassifier, dataset: Dataset, split: FoldSplit,
                   config_echo: Dict[str, Any]) -> RunReport:
        method = classifier.label if isinstance(classifier, UnrolledClassifier) else classifier.method
        start = time.perf_counter()
        try:
            prediction = classifier.classify(dataset, split)
            error_rate = prediction.error_rate(dataset.labels[split.test])
        except Exception as e:
            logger.error(f"{method} failed on {dataset.name} fold {split.fold} seed {split.seed}: {e}")
            return RunReport(dataset=dataset.name, fold=split.fold, seed=split.seed, method=method,
                             error_rate=None, wall_time=time.perf_counter() - start,
                             config=config_echo, error=str(e))
        report = RunReport(
            dataset=dataset.name, fold=split.fold, seed=split.seed, method=method,
            error_rate=error_rate, wall_time=time.perf_counter() - start,
            outer_iterations=prediction.outer_iterations, eig_iterations=prediction.eig_iterations,
            config=config_echo, trace=trace_rows(prediction.traces),
        )
        logger.info(f"{method} on {dataset.name} fold {split.fold} seed {split.seed}: "
                     f"error rate {error_rate:.4f}")
        return report

    async def run_splits(self, dataset: Dataset, splits: Sequence[FoldSplit], method: str,
                         config: NetworkConfig, layers: Optional[Sequence[LayerParams]] = None) -> List[RunReport]:
        """Run one method over every split in a worker pool"""
        config_echo = config.to_dict()
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            tasks = [
                loop.run_in_executor(pool, self._run_split, make_classifier(method, config, layers),
                                     dataset, split, config_echo)
                for split in splits
            ]
            reports = await asyncio.gather(*tasks)
        return sorted(reports, key=lambda r: (r.fold, r.seed))

    async def classify(self, dataset: Dataset, plan: SplitPlan, method: str, config: NetworkConfig,
                       layers: Optional[Sequence[LayerParams]] = None, command: str = "classify") -> List[RunReport]:
        """Classify every split of the plan and optionally store the results"""
        reports = await self.run_splits(dataset, plan.splits, method, config, layers)
        summary = summarize(reports)
        logger.info(f"{command} {method} on {dataset.name}: {summary['runs']} runs, "
                    f"{summary['failed']} failed, mean error rate {summary['mean_error_rate']}")
        if self.persist:
            self.save_reports(command, method, dataset, config, reports)
        return reports

    def train(self, dataset: Dataset, split: FoldSplit, config: NetworkConfig) -> Tuple[TrainResult, RunReport]:
        """Train an unrolled network on one split and report its test error"""
        classifier = UnrolledClassifier(config)
        report = self._run_split(classifier, dataset, split, config.to_dict())
        if classifier.last_training is None:
            raise GdpaSdrError(f"training failed: {report.error}")
        if self.persist:
            self.save_reports("train", classifier.label, dataset, config, [report])
        return classifier.last_training, report

    def save_reports(self, command: str, method: str, dataset: Dataset, config: NetworkConfig,
                     reports: Sequence[RunReport]):
        """Store one experiment run with its per-split results"""
        with DatabaseManager(self.db_url) as db:
            record = db.get_or_create_dataset(dataset.name, dataset.n_samples, dataset.n_features,
                                              path=dataset.source, format=dataset.fmt)
            run = db.start_run(command, method, config.to_dict())
            for r in reports:
                db.add_result(run.id, record.id, r.fold, r.seed, r.method, r.error_rate, r.wall_time,
                              r.outer_iterations, r.eig_iterations, r.error)
            failed = [r for r in reports if not r.ok]
            db.finish_run(run.id, not failed, len(reports),
                          f"{len(failed)} runs failed" if failed else None)

    def get_history(self, limit: int = 10) -> List[Dict[str, Any]]:
        """Recent experiment runs with their results"""
        with DatabaseManager(self.db_url) as db:
            return [
                {
                    "id": run.id,
                    "command": run.command,
                    "method": run.method,
                    "start_time": run.start_time.isoformat(),
                    "success": run.success,
                    "reports": run.reports_written,
                    "error_message": run.error_message,
                    "mean_error_rate": _mean([r.error_rate for r in db.get_results(run.id)]),
                }
                for run in db.get_recent_runs(limit)
            ]


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def run_bench(n_instances: int = 10, n: int = 10, m: int = 4, separation: float = 6.0, seed: int = 0,
              config: NetworkConfig = NetworkConfig(),
              trace: Optional[List[Dict[str, Any]]] = None) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
    """GDPA and GLR against the brute-force oracle on two-cluster instances.

    When a ``trace`` list is given, per-iteration GDPA rows tagged with their
    instance are appended to it.
    """
    rows = []
    for k in range(n_instances):
        dataset, labeled = make_two_cluster(n=n, m=m, separation=separation, seed=seed + k)
        L = build_L1(dataset.F, np.eye(dataset.n_features), GraphParams(sigma_d=config.sigma_d))
        instance = build_instance(L, labeled, dataset.labels[labeled])
        unlabeled = np.setdiff1d(np.arange(n), labeled)

        start = time.perf_counter()
        oracle = brute_force_oracle(instance)
        oracle_time = time.perf_counter() - start

        start = time.perf_counter()
        solution = gdpa_solve(instance, config.gdpa)
        gdpa = extract_labels(solution.y, solution.z, instance, config.gdpa.eig)
        gdpa_time = time.perf_counter() - start
        if trace is not None:
            trace.extend(dict(row, instance=k) for row in solution.trace.to_records())

        start = time.perf_counter()
        glr = solve_glr_baseline(instance)
        glr_time = time.perf_counter() - start

        rows.append({
            'instance': k,
            'seed': seed + k,
            'gdpa_agrees': bool(np.array_equal(gdpa, oracle)),
            'glr_agrees': bool(np.array_equal(glr, oracle)),
            'gdpa_error_rate': float(np.mean(gdpa[unlabeled] != dataset.labels[unlabeled])),
            'glr_error_rate': float(np.mean(glr[unlabeled] != dataset.labels[unlabeled])),
            'gdpa_iterations': len(solution.trace),
            'gdpa_time': gdpa_time,
            'glr_time': glr_time,
            'oracle_time': oracle_time,
        })
        logger.debug(f"Bench instance {k}: {rows[-1]}")

    summary = {
        'instances': n_instances,
        'gdpa_agreement': float(np.mean([r['gdpa_agrees'] for r in rows])) if rows else None,
        'glr_agreement': float(np.mean([r['glr_agrees'] for r in rows])) if rows else None,
        'gdpa_mean_error_rate': _mean([r['gdpa_error_rate'] for r in rows]),
        'glr_mean_error_rate': _mean([r['glr_error_rate'] for r in rows]),
    }
    logger.info(f"Bench on {n_instances} instances: {summary}")
    return rows, summary
