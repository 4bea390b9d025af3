"""Report serialization: the time-series CSV, the per-iteration CSV and
the run summary.

Formatting is fixed (repr-exact floats, stable column order) so repeated
runs with identical inputs produce byte-identical files.
"""

import csv
import io
import os


def _format(value):
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _write_csv(rows, path):
    if not rows:
        with open(path, "w", newline="") as fh:
            fh.write("")
        return
    fieldnames = list(rows[0].keys())
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _format(v) for k, v in row.items()})
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def write_report_csv(result, path):
    _write_csv(result.report_rows, path)


def write_iterations_csv(result, path):
    _write_csv(result.iteration_rows, path)


def summary_text(result, config_echo=None):
    s = result.summary
    lines = [
        "owsim run summary",
        "=================",
        f"status:                    "
        f"{'ok' if s['status'] == 0 else 'FAILED'}",
        f"simulated time (days):     {_format(s['end_time_days'])}",
        f"time steps:                {s['steps']}",
        f"timestep cuts:             {s['timestep_cuts']}",
        f"newton iterations:         {s['newton_iterations']}",
        f"linear iterations:         {s['linear_iterations']}",
        f"avg linear per newton:     {_format(s['avg_linear_per_newton'])}",
        f"material balance (oil):    {_format(s['material_balance_oil'])}",
        f"material balance (water):  {_format(s['material_balance_water'])}",
        f"workers:                   {s['workers']}",
    ]
    if s.get("failure"):
        lines.append(f"failure:                   {s['failure']}")
    if config_echo:
        lines.append("")
        lines.append("configuration")
        lines.append("-------------")
        for key, value in config_echo.items():
            lines.append(f"{key}: {value}")
    if result.warnings:
        lines.append("")
        lines.append("deck warnings")
        lines.append("-------------")
        lines.extend(result.warnings)
    return "\n".join(lines) + "\n"


def write_summary(result, path, config_echo=None):
    with open(path, "w") as fh:
        fh.write(summary_text(result, config_echo))


def write_outputs(result, outdir, config_echo=None):
    """Write report.csv, iterations.csv and summary.txt into outdir."""
    os.makedirs(outdir, exist_ok=True)
    write_report_csv(result, os.path.join(outdir, "report.csv"))
    write_iterations_csv(result, os.path.join(outdir, "iterations.csv"))
    write_summary(result, os.path.join(outdir, "summary.txt"), config_echo)
