"""Seeded replication loop shared by every experiment."""

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple
import logging
import time

import numpy as np
import pandas as pd

from .. import __version__
from ..errors import ShrinkageError
from .config import ExperimentConfig, ExperimentResult, Provenance

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"

Record = Dict[str, Any]
Task = Callable[[int, int], Record]


def replication_seeds(seed: int, reps: int) -> List[int]:
    """Independent per-replication seeds split from one root seed"""
    children = np.random.SeedSequence(seed).spawn(reps)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def _guarded(task: Task, rep: int, seed: int) -> Tuple[int, Optional[Record], Optional[Record]]:
    try:
        return rep, task(rep, seed), None
    except ShrinkageError as e:
        return rep, None, {"rep": rep, "seed": seed, "error": type(e).__name__, "message": str(e)}
    except np.linalg.LinAlgError as e:
        return rep, None, {"rep": rep, "seed": seed, "error": "LinAlgError", "message": str(e)}


class ReplicationRunner:
    """Runs a task over seeded replications, recording failures instead of stopping"""

    def __init__(self, task: Task, workers: int = 1, label: str = "experiment"):
        self.task = task
        self.workers = workers
        self.label = label

    def run(self, seeds: List[int]) -> Tuple[List[Record], List[Record]]:
        reps = list(range(len(seeds)))
        if self.workers > 1 and len(seeds) > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                outcomes = list(pool.map(_guarded, [self.task] * len(seeds), reps, seeds))
        else:
            outcomes = [_guarded(self.task, rep, seed) for rep, seed in zip(reps, seeds)]

        records: List[Record] = []
        failures: List[Record] = []
        for rep, record, failure in sorted(outcomes, key=lambda item: item[0]):
            if failure is not None:
                logger.warning(f"{self.label}: replication {rep} failed with {failure['error']}: {failure['message']}")
                failures.append(failure)
            else:
                records.append(record)

        logger.info(f"{self.label}: {len(records)} replications succeeded, {len(failures)} failed")
        return records, failures


def finalize(cfg: ExperimentConfig, records: List[Record], failures: List[Record],
             aggregates: Dict[str, Any], seeds: List[int], started: float) -> ExperimentResult:
    provenance = Provenance(
        config=cfg.model_dump(mode="json"),
        library_version=__version__,
        wall_time=time.perf_counter() - started,
        seeds=seeds,
    )
    aggregates = dict(aggregates)
    aggregates.setdefault("replications", len(seeds))
    aggregates.setdefault("failures", len(failures))
    return ExperimentResult(experiment=cfg.experiment, records=records, aggregates=aggregates,
                            failures=failures, provenance=provenance)


def records_frame(records: List[Record]) -> pd.DataFrame:
    """Long table of the records with list-valued fields exploded row-wise"""
    frame = pd.DataFrame(records)
    if frame.empty:
        return frame
    list_cols = [col for col in frame.columns if isinstance(frame[col].iloc[0], list)]
    return frame.explode(list_cols, ignore_index=True) if list_cols else frame


def write_outputs(result: ExperimentResult, out_dir: Path, frames: Mapping[str, pd.DataFrame],
                  include_records: bool = True) -> Dict[str, Path]:
    """CSV per frame plus result.json (aggregates, failures and provenance)"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: Dict[str, Path] = {}
    for name, frame in frames.items():
        path = out_dir / f"{name}.csv"
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        paths[name] = path
    if include_records and result.records:
        path = out_dir / "records.csv"
        records_frame(result.records).to_csv(path, index=False, float_format=FLOAT_FORMAT)
        paths["records"] = path

    path = out_dir / "result.json"
    path.write_text(result.model_dump_json(indent=2, exclude={"records"}))
    paths["result"] = path
    logger.info(f"Wrote {', '.join(p.name for p in paths.values())} to {out_dir}")
    return paths
