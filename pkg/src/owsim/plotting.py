"""Figure rendering for the report path: well rates, bottom-hole pressures
and field average pressure over time, written as PNG files next to the
CSV output.

Uses the Agg backend and strips volatile PNG metadata so figures are
byte-stable across reruns.
"""

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_PNG_META = {"Software": None}


def _well_names(rows):
    names = []
    for key in rows[0]:
        if key.endswith("_bhp_psi"):
            names.append(key[:-len("_bhp_psi")])
    return names


def _series(rows, key):
    return [row[key] for row in rows]


def render_report_figures(report_rows, outdir):
    """Render the standard figure set from report rows; returns the list
    of files written."""
    if not report_rows:
        return []
    os.makedirs(outdir, exist_ok=True)
    t = _series(report_rows, "time_days")
    names = _well_names(report_rows)
    written = []

    if names:
        fig, (ax_o, ax_w) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
        for name in names:
            ax_o.plot(t, _series(report_rows, f"{name}_oil_rate_stb"),
                      label=name)
            ax_w.plot(t, _series(report_rows, f"{name}_water_rate_bbl"),
                      label=name)
        ax_o.set_ylabel("oil rate (stb/day)")
        ax_w.set_ylabel("water rate (bbl/day)")
        ax_w.set_xlabel("time (days)")
        ax_o.legend()
        ax_o.set_title("well surface rates")
        fig.tight_layout()
        path = os.path.join(outdir, "well_rates.png")
        fig.savefig(path, dpi=120, metadata=_PNG_META)
        plt.close(fig)
        written.append(path)

        fig, ax = plt.subplots(figsize=(7, 4))
        for name in names:
            ax.plot(t, _series(report_rows, f"{name}_bhp_psi"), label=name)
        ax.set_xlabel("time (days)")
        ax.set_ylabel("bottom-hole pressure (psi)")
        ax.set_title("well BHP")
        ax.legend()
        fig.tight_layout()
        path = os.path.join(outdir, "well_bhp.png")
        fig.savefig(path, dpi=120, metadata=_PNG_META)
        plt.close(fig)
        written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, _series(report_rows, "avg_pressure_pv_psi"),
            label="pore-volume weighted")
    ax.plot(t, _series(report_rows, "avg_pressure_cell_psi"),
            label="cell average", linestyle="--")
    ax.set_xlabel("time (days)")
    ax.set_ylabel("average pressure (psi)")
    ax.set_title("field average pressure")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(outdir, "field_pressure.png")
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    written.append(path)
    return written
