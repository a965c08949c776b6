"""Trace-similarity protocol: Jaccard index over discovered plot points,
per-group summary tables, and convergence-table export for the training
records.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import replay
from .learning import TrainingRecord
from .policy import GeneratedTrace
from .story import WorldSpec
from .traces import Trace, TraceGroup


class EmptyGroupError(Exception):
    pass


def jaccard(a: set[str], b: set[str]) -> float:
    """|a & b| / |a | b|.  Two empty sets count as identical (1.0): both
    traces discovered nothing, which is the same behaviour footprint."""
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


@dataclass(frozen=True)
class SimilarityResult:
    policy_trace_id: str
    player_trace_id: str
    jaccard: float


@dataclass(frozen=True)
class GroupReport:
    group_id: str
    h: int | None
    beta: float | None
    results: tuple[SimilarityResult, ...]
    mean: float
    std_dev: float          # population standard deviation
    median: float
    minimum: float
    maximum: float

    def to_csv(self) -> str:
        # Mirrors the similarity summary table layout.
        header = "Group,Mean,Std. Dev,Median,Min,Max"
        row = (f"{self.group_id},{self.mean:.6f},{self.std_dev:.6f},"
               f"{self.median:.6f},{self.minimum:.6f},{self.maximum:.6f}")
        return header + "\n" + row + "\n"


def summary_stats(values: list[float]) -> tuple[float, float, float, float, float]:
    """(mean, population std dev, median, min, max)."""
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    ordered = sorted(values)
    mid = n // 2
    median = ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2
    return mean, var ** 0.5, median, ordered[0], ordered[-1]


def trace_plot_points(w: WorldSpec, t: Trace) -> set[str]:
    return set(replay(w, t.action_list()).plot_points())


def evaluate_group(policy_trace: GeneratedTrace, g: TraceGroup, w: WorldSpec,
                   policy_trace_id: str = "policy", h: int | None = None,
                   beta: float | None = None) -> GroupReport:
    """Jaccard of the policy trace against every member of the group, plus
    summary statistics over those pairs."""
    if not g.members:
        raise EmptyGroupError(f"group {g.group_id!r} has no members")
    policy_set = set(policy_trace.plot_points_discovered)
    results = tuple(
        SimilarityResult(
            policy_trace_id=policy_trace_id,
            player_trace_id=t.trace_id,
            jaccard=jaccard(policy_set, trace_plot_points(w, t)),
        )
        for t in g.members
    )
    mean, std, median, mn, mx = summary_stats([r.jaccard for r in results])
    return GroupReport(group_id=g.group_id, h=h, beta=beta, results=results,
                       mean=mean, std_dev=std, median=median, minimum=mn, maximum=mx)


def reports_to_csv(reports: list[GroupReport]) -> str:
    lines = ["Group,Mean,Std. Dev,Median,Min,Max"]
    for r in reports:
        lines.append(f"{r.group_id},{r.mean:.6f},{r.std_dev:.6f},"
                     f"{r.median:.6f},{r.minimum:.6f},{r.maximum:.6f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Convergence export (one table per group and beta: iteration x horizon)


@dataclass(frozen=True)
class ConvergenceTable:
    group_id: str
    beta: float
    hs: tuple[int, ...]
    rows: tuple[tuple, ...]   # (iteration, ll@h1, ll@h2, ...); None where absent

    def to_csv(self) -> str:
        header = "iteration," + ",".join(f"h={h}" for h in self.hs)
        lines = [header]
        for row in self.rows:
            cells = [str(row[0])] + ["" if v is None else repr(v) for v in row[1:]]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def export_convergence(records: dict) -> list[ConvergenceTable]:
    """Reshape a grid's training records into plot-ready line-chart tables:
    for each (group, beta), log-likelihood per iteration with one series per
    horizon."""
    if not records:
        raise ValueError("records must be non-empty")
    combos = sorted({(g, b) for (g, _h, b) in records})
    tables = []
    for group_id, beta in combos:
        hs = tuple(sorted(h for (g, h, b) in records if g == group_id and b == beta))
        series = {h: records[(group_id, h, beta)].log_likelihoods for h in hs}
        depth = max(len(v) for v in series.values())
        rows = tuple(
            (it,) + tuple(series[h][it] if it < len(series[h]) else None for h in hs)
            for it in range(depth)
        )
        tables.append(ConvergenceTable(group_id=group_id, beta=beta, hs=hs, rows=rows))
    return tables


def iterations_to_plateau(record: TrainingRecord, tolerance: float = 0.01) -> int:
    """First iteration whose log-likelihood is within ``tolerance`` (relative)
    of the final value; used for the horizon-ordering convergence report."""
    lls = record.log_likelihoods
    final = lls[-1]
    scale = max(abs(final), 1e-12)
    for i, v in enumerate(lls):
        if abs(v - final) <= tolerance * scale:
            return i
    return len(lls) - 1
