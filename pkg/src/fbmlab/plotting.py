"""Plot-ready data emission and figure rendering for experiment runs.

emit_plot_data converts a run directory's raw artifacts into a tidy
long-format CSV (series, x, y, y_err) and renders the matching matplotlib
figure next to it; both files land inside the run directory.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

PLOT_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
}


def _read_csv(path: Path) -> dict:
    with path.open() as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    cols = {h: [] for h in header}
    for row in rows[1:]:
        if row and row[0].startswith("#"):
            continue
        for h, v in zip(header, row):
            try:
                cols[h].append(float(v))
            except ValueError:
                cols[h].append(v)
    return {h: np.asarray(v) for h, v in cols.items()}


def _tidy_csv(series) -> str:
    buf = io.StringIO()
    buf.write("series,x,y,y_err\n")
    for name, xs, ys, errs in series:
        for i in range(len(xs)):
            e = errs[i] if errs is not None else 0.0
            buf.write(f"{name},{xs[i]:.17g},{ys[i]:.17g},{e:.17g}\n")
    return buf.getvalue()


def emit_plot_data(run_dir: str | Path, kind: str) -> tuple[Path, Path]:
    """Produce plot_<kind>.csv and plot_<kind>.png inside a run directory.

    kinds: 'scaling' (log-log points plus fitted line from a *_scaling.csv
    artifact), 'levels' (per-level or per-index decay curves), 'fractions'
    (envelope-holding fractions per horizon).  Raises on missing artifacts;
    never writes empty files.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory not found: {run_dir}")
    candidates = sorted(run_dir.glob("*.csv"))
    candidates = [c for c in candidates if not c.name.startswith("plot_")]
    if not candidates:
        raise FileNotFoundError(f"no artifacts in {run_dir}")
    series = []
    if kind == "scaling":
        found = [c for c in candidates if "scaling" in c.name]
        if not found:
            raise FileNotFoundError(f"no scaling artifact in {run_dir}")
        for path in found:
            cols = _read_csv(path)
            if "log_x" in cols:
                lx, ly, fit = cols["log_x"], cols["log_y"], cols["fit_y"]
            else:
                keys = list(cols)
                lx = np.log(np.abs(cols[keys[0]]))
                ly = np.log(np.abs(cols[keys[1]]))
                fit = cols[keys[2]] if len(keys) > 2 else None
                if fit is not None and np.all(fit > 0):
                    fit = np.log(fit)
            series.append((path.stem, lx, ly, None))
            if fit is not None:
                series.append((path.stem + ":fit", lx, fit, None))
    elif kind == "levels":
        for path in candidates:
            cols = _read_csv(path)
            keys = [k for k in cols if np.issubdtype(np.asarray(cols[k]).dtype, np.number)]
            if len(keys) < 2:
                continue
            xs = cols[keys[0]]
            for k in keys[1:]:
                series.append((f"{path.stem}:{k}", xs, cols[k], None))
    elif kind == "fractions":
        found = [c for c in candidates if "fraction" in c.name]
        if not found:
            raise FileNotFoundError(f"no fractions artifact in {run_dir}")
        cols = _read_csv(found[0])
        for side in ("upper", "lower"):
            if side in cols:
                series.append((side, cols["rho"], cols[side], None))
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    if not series:
        raise FileNotFoundError(f"no plottable columns for kind {kind!r} in {run_dir}")
    csv_path = run_dir / f"plot_{kind}.csv"
    csv_path.write_text(_tidy_csv(series))
    png_path = run_dir / f"plot_{kind}.png"
    _render(series, kind, png_path)
    return csv_path, png_path


def _render(series, kind: str, path: Path):
    with plt.rc_context(PLOT_STYLE):
        fig, ax = plt.subplots()
        for name, xs, ys, errs in series:
            style = "--" if name.endswith(":fit") else "o-"
            ax.plot(xs, ys, style, label=name, markersize=3, linewidth=1)
        if kind == "levels":
            ax.set_yscale("log")
            ax.set_xlabel("level / index")
            ax.set_ylabel("value")
        elif kind == "scaling":
            ax.set_xlabel("log x")
            ax.set_ylabel("log y")
        else:
            ax.set_xlabel("horizon")
            ax.set_ylabel("fraction")
        if len(series) <= 10:
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
