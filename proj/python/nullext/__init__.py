"""Python access to the nullext core: named runs and a few pointwise queries."""

import json

from ._core import (
    GeometryError,
    ParameterError,
    SingularChartPoint,
    UsageError,
    coords,
    interior_grid,
    metric_at,
    metric_hash,
    ricci_at,
    riemann_scale,
    run_text,
    schema_version,
)

__all__ = [
    "GeometryError",
    "ParameterError",
    "SingularChartPoint",
    "UsageError",
    "coords",
    "interior_grid",
    "metric_at",
    "metric_hash",
    "ricci_at",
    "riemann_scale",
    "run",
    "run_text",
    "schema_version",
]


def _config_text(command, options):
    lines = [f"command = {command}"]
    for key, value in options.items():
        if isinstance(value, (list, tuple)):
            value = ", ".join(repr(float(v)) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def run(command, **options):
    """Run a command (verify, extend, pseudoconvex, obstruction); returns (report dict, csv text)."""
    report, csv, _ = run_text(_config_text(command, options))
    return json.loads(report), csv
