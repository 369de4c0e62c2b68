from prometheus_client import Counter, Histogram
import time
from typing import Optional, Any

# --- Metric Definitions ---

ASSEMBLY_TOTAL = Counter(
    "landaures_assembly_total",
    "Total number of operator assemblies",
    ["kind", "status"],
)

ASSEMBLY_SECONDS = Histogram(
    "landaures_assembly_seconds",
    "Wall time of operator assemblies",
    ["kind"],
    buckets=(0.01, 0.05, 0.1, 0.5, 1, 5, 10, 30, 60, 300, 1800),
)

SOLVE_TOTAL = Counter(
    "landaures_solve_total",
    "Total number of dense solves and eigen-decompositions",
    ["kind"],
)

KERNEL_EVALUATIONS_TOTAL = Counter(
    "landaures_kernel_evaluations_total",
    "Total number of kernel point-pair evaluations",
    ["kind"],
)


def record_kernel_evaluations(kind: str, count: int) -> None:
    KERNEL_EVALUATIONS_TOTAL.labels(kind=kind).inc(count)


def record_solve(kind: str) -> None:
    SOLVE_TOTAL.labels(kind=kind).inc()


class AssemblyMetrics:
    """Helper to track assembly counts and latency."""

    def __init__(self, kind: str) -> None:
        self.kind = kind
        self.start_time = 0.0
        self.duration = 0.0

    def __enter__(self) -> "AssemblyMetrics":
        self.start_time = time.perf_counter()
        return self

    def __exit__(
        self,
        exc_type: Optional[type],
        exc_val: Optional[BaseException],
        exc_tb: Optional[Any],
    ) -> None:
        self.duration = time.perf_counter() - self.start_time
        status = "failure" if exc_type else "success"

        ASSEMBLY_TOTAL.labels(kind=self.kind, status=status).inc()
        ASSEMBLY_SECONDS.labels(kind=self.kind).observe(self.duration)
