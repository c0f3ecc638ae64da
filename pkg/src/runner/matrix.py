"""
Resumable experiment matrix

Cells run concurrently up to `jobs`; results go through one appender so the CSV
only ever holds complete rows. Cells whose run_id is already in the CSV are
skipped, and a failing cell is logged to failures.jsonl without stopping the
others.
"""

import asyncio
from typing import List, Optional

from loguru import logger

from ..metrics.models import CSV_COLUMNS
from ..utils.errors import CAATError
from ..utils.file_utils import FileUtils
from .lab import LabContext, expand_plan
from .models import AttackGrid, MatrixSummary, PlanCell

METRICS_CSV = "metrics.csv"
FAILURES = "failures.jsonl"


def _failure_record(cell: PlanCell, error: Exception) -> dict:
    record = error.to_record() if isinstance(error, CAATError) else {"error": type(error).__name__,
                                                                        "message": str(error)}
    return {"run_id": cell.run_id, "cell": cell.model_dump(mode="json"), **record}


async def run_matrix(lab: LabContext, grids: Optional[List[AttackGrid]] = None, jobs: Optional[int] = None) -> MatrixSummary:
    plan = lab.config.experiment
    cells = expand_plan(plan, grids)
    csv_path = lab.path(METRICS_CSV)
    done = {row["run_id"] for row in FileUtils.read_csv_rows(csv_path)}
    pending = [cell for cell in cells if cell.run_id not in done]
    summary = MatrixSummary(skipped=len(cells) - len(pending), csv_path=csv_path)
    if not pending:
        logger.info(f"All {len(cells)} cells already present in {csv_path}")
        return summary

    logger.info(f"Running {len(pending)} cells ({summary.skipped} already done)")
    await asyncio.to_thread(lab.prepare)

    semaphore = asyncio.Semaphore(jobs or plan.jobs)
    appender = asyncio.Lock()

    async def worker(cell: PlanCell) -> None:
        async with semaphore:
            try:
                report = await asyncio.to_thread(lab.run_cell, cell)
            except Exception as e:
                logger.error(f"Cell {cell.run_id} ({cell.grid}/{cell.mode}/{cell.method.value}) failed: {e}")
                async with appender:
                    FileUtils.append_jsonl(lab.path(FAILURES), _failure_record(cell, e))
                    summary.failed += 1
                return
            async with appender:
                FileUtils.append_csv_row(csv_path, CSV_COLUMNS, report.to_row())
                summary.completed += 1

    await asyncio.gather(*(worker(cell) for cell in pending))

    # completion order depends on scheduling; store rows in plan order
    order: dict = {}
    for cell in expand_plan(plan) + cells:
        order.setdefault(cell.run_id, len(order))
    rows = FileUtils.read_csv_rows(csv_path)
    rows.sort(key=lambda row: order.get(row["run_id"], len(order)))
    FileUtils.write_csv_rows(csv_path, CSV_COLUMNS, rows)
    return summary
