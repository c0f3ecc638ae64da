"""
Timing and trend reports

The desk lab asserts directions and ratios, not absolute values: each trend
check reads the metrics CSV (medians over seeds) or the attack sidecars and
reports pass / fail / skipped.
"""

import os
from collections import defaultdict
from statistics import mean, median
from typing import Dict, Iterable, List, Optional, Sequence

from scipy.stats import spearmanr

from ..utils.errors import ReportError
from ..utils.file_utils import FileUtils
from .models import TimingRow, TrendCheck

Row = Dict[str, str]

FID_RATIO = 1.2
WALL_CLOCK_RATIO = 0.6
ROBUSTNESS_MIN = 3


def collect_sidecars(output_dir: str) -> List[dict]:
    return [FileUtils.read_json_file(p)
            for p in FileUtils.list_files(os.path.join(output_dir, "attacks"), "attack.json", recursive=True)]


def _mode_steps(sidecar: dict):
    cfg = sidecar.get("config") or {}
    return cfg.get("mode"), cfg.get("steps"), cfg.get("block_size")


def timing_report(sidecars: Sequence[dict]) -> List[TimingRow]:
    """Per (mode, N) mean wall clock and backward count; caat must report N, separated 2N"""
    if not sidecars:
        raise ReportError("No attack manifests to report on")
    groups: Dict[tuple, List[dict]] = defaultdict(list)
    for sidecar in sidecars:
        mode, steps, _ = _mode_steps(sidecar)
        if mode is None or steps is None or "backward_count" not in sidecar or "wall_clock" not in sidecar:
            raise ReportError("Attack manifest lacks mode, steps, wall clock or backward count")
        expected = {"caat": steps, "separated": 2 * steps}.get(mode)
        if expected is not None and sidecar["backward_count"] != expected:
            raise ReportError(f"{mode} with N={steps} reported {sidecar['backward_count']} backward passes, "
                              f"expected {expected}", mode=mode, steps=steps)
        groups[(mode, steps)].append(sidecar)
    return [
        TimingRow(mode=mode, steps=steps, runs=len(items),
                  mean_wall_clock=mean(s["wall_clock"] for s in items),
                  mean_backward_count=mean(s["backward_count"] for s in items))
        for (mode, steps), items in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1]))
    ]


def _median(rows: Iterable[Row], column: str = "FID") -> Optional[float]:
    values = [float(r[column]) for r in rows]
    return median(values) if values else None


def _select(rows: Sequence[Row], **criteria) -> List[Row]:
    return [r for r in rows if all(str(r.get(k)) == str(v) for k, v in criteria.items())]


def _methods(rows: Sequence[Row]) -> List[str]:
    return sorted({r["method"] for r in rows})


def check_efficacy(rows: Sequence[Row], grid: str = "matrix") -> TrendCheck:
    """CAAT beats clean on every method: FID up by 1.2x and FS down"""
    cells = _select(rows, grid=grid)
    values, failures = {}, []
    for method in _methods(cells):
        clean = _select(cells, method=method, attack_mode="clean")
        caat = _select(cells, method=method, attack_mode="caat", countermeasure="none")
        if not clean or not caat:
            continue
        fid_clean, fid_caat = _median(clean), _median(caat)
        fs_clean, fs_caat = _median(clean, "FS"), _median(caat, "FS")
        values[method] = {"FID_clean": fid_clean, "FID_caat": fid_caat, "FS_clean": fs_clean, "FS_caat": fs_caat}
        if not (fid_caat >= FID_RATIO * fid_clean and fs_caat < fs_clean):
            failures.append(method)
    return _verdict("attack_efficacy", values, failures)


def check_budget(rows: Sequence[Row], grid: str = "budget") -> TrendCheck:
    """Median FID non-decreasing in eta for at least 2 of 3 methods"""
    cells = _select(rows, grid=grid, attack_mode="caat")
    values, monotone = {}, []
    for method in _methods(cells):
        etas = sorted({float(r["eta"]) for r in _select(cells, method=method)})
        curve = [_median(r for r in _select(cells, method=method) if float(r["eta"]) == eta) for eta in etas]
        values[method] = dict(zip(map(str, etas), curve))
        if len(curve) > 1 and all(b >= a for a, b in zip(curve, curve[1:])):
            monotone.append(method)
    if not values:
        return TrendCheck(name="budget_monotonicity", status="skipped", detail=f"no {grid} rows")
    needed = min(2, len(values))
    status = "pass" if len(monotone) >= needed else "fail"
    return TrendCheck(name="budget_monotonicity", status=status, values=values,
                      detail=f"monotone for {monotone} (need {needed})")


def check_perturbed_count(rows: Sequence[Row], grid: str = "perturbed_count") -> TrendCheck:
    """4 perturbed photos beat 0 for every method and count correlates positively with FID"""
    cells = _select(rows, grid=grid, attack_mode="caat")
    values, failures = {}, []
    for method in _methods(cells):
        counts = sorted({int(r["n_perturbed"]) for r in _select(cells, method=method)})
        curve = [_median(r for r in _select(cells, method=method) if int(r["n_perturbed"]) == c) for c in counts]
        rho = float(spearmanr(counts, curve).correlation) if len(counts) > 2 else float("nan")
        values[method] = {"curve": dict(zip(map(str, counts), curve)), "spearman": rho}
        if counts[0] != 0 or counts[-1] != max(counts) or not curve[-1] > curve[0] or not rho > 0:
            failures.append(method)
    return _verdict("perturbed_count", values, failures)


def check_subset_sensitivity(rows: Sequence[Row], grid: str = "subset", method: str = "full_finetune") -> TrendCheck:
    """Co-training W_K / W_V is at least as strong as co-training nothing"""
    cells = _select(rows, grid=grid, method=method)
    kv = _median(_select(cells, subset="kv_cross_attention"))
    none = _median(_select(cells, subset="none"))
    if kv is None or none is None:
        return TrendCheck(name="subset_sensitivity", status="skipped", detail=f"no {grid} rows for {method}")
    status = "pass" if kv >= none else "fail"
    return TrendCheck(name="subset_sensitivity", status=status, values={"kv": kv, "none": none},
                      detail=f"{method}: FID kv={kv:.3f} vs none={none:.3f}")


def check_timing(sidecars: Sequence[dict]) -> TrendCheck:
    """Backward counts N vs 2N, and caat wall clock <= 0.6x separated at equal N"""
    if not sidecars:
        return TrendCheck(name="timing", status="skipped", detail="no attack sidecars")
    try:
        table = timing_report(sidecars)
    except ReportError as e:
        return TrendCheck(name="timing", status="fail", detail=e.message)
    by_key = {(r.mode, r.steps): r for r in table}
    values, failures = {}, []
    for (mode, steps), row in by_key.items():
        if mode != "caat" or ("separated", steps) not in by_key:
            continue
        separated = by_key[("separated", steps)]
        ratio = row.mean_backward_count / separated.mean_backward_count
        speed = row.mean_wall_clock / separated.mean_wall_clock if separated.mean_wall_clock else float("nan")
        values[str(steps)] = {"backward_ratio": ratio, "wall_clock_ratio": speed}
        if ratio != 0.5 or not speed <= WALL_CLOCK_RATIO:
            failures.append(str(steps))
    return _verdict("timing", values, failures)


def check_robustness(rows: Sequence[Row], grid: str = "robustness", method: str = "full_finetune") -> TrendCheck:
    """Countermeasured CAAT still beats clean FID for at least 3 of 4 transforms"""
    cells = _select(rows, grid=grid, method=method)
    clean = _median(_select(cells, attack_mode="clean"))
    kinds = sorted({r["countermeasure"] for r in cells if r["attack_mode"] == "caat"} - {"none"})
    if clean is None or not kinds:
        return TrendCheck(name="robustness", status="skipped", detail=f"no {grid} rows for {method}")
    values = {k: _median(_select(cells, attack_mode="caat", countermeasure=k)) for k in kinds}
    survived = [k for k, v in values.items() if v > clean]
    needed = min(ROBUSTNESS_MIN, len(kinds))
    status = "pass" if len(survived) >= needed else "fail"
    return TrendCheck(name="robustness", status=status, values={"clean": clean, **values},
                      detail=f"survived {survived} (need {needed})")


def _verdict(name: str, values: dict, failures: List[str]) -> TrendCheck:
    if not values:
        return TrendCheck(name=name, status="skipped", detail="no matching rows")
    status = "fail" if failures else "pass"
    return TrendCheck(name=name, status=status, values=values,
                      detail=f"failed for {failures}" if failures else "holds for every method")


def trend_report(rows: Sequence[Row], sidecars: Sequence[dict]) -> List[TrendCheck]:
    if not rows and not sidecars:
        raise ReportError("No metrics rows or attack manifests found")
    return [
        check_efficacy(rows),
        check_budget(rows),
        check_perturbed_count(rows),
        check_subset_sensitivity(rows),
        check_timing(sidecars),
        check_robustness(rows),
    ]
