"""SVG figures with a TSV sidecar holding the plotted numbers.

Figures are written with a fixed SVG hash salt and no date metadata so
reruns produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .frames import FrameSpec, trim_empty_tail  # noqa: E402
from .runlog import RunLog  # noqa: E402

_RC = {"svg.hashsalt": "nbprofile", "svg.fonttype": "none", "font.size": 8}
_SERIES = (("improve", "n_I", "tab:green"), ("worsen", "n_W", "tab:red"), ("nothing", "n_SN", "tab:gray"))


def _save(fig, svg: Path, head: Sequence[str]) -> None:
    svg.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(svg, format="svg", metadata={"Date": None, "Description": "; ".join(head)})
    plt.close(fig)


def _sidecar(path: Path, head: Sequence[str], columns: Sequence[str], rows) -> Path:
    lines = [f"# {c}" for c in head] + ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(v if isinstance(v, str) else format(float(v), ".17g") for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def bucket_ratios(log: RunLog, k: int, bucket: int, n_intervals: int) -> dict[str, np.ndarray]:
    """Count-weighted ratios of neighborhood ``k`` over consecutive buckets
    of ``bucket`` intervals; NaN where the bucket saw no application."""
    starts = np.arange(0, n_intervals, bucket)
    it = np.add.reduceat(log.n_iters[k, :n_intervals], starts).astype(float)
    out = {"start": starts + 1, "n_iters": it}
    with np.errstate(invalid="ignore", divide="ignore"):
        for name, attr, _ in _SERIES:
            num = np.add.reduceat(getattr(log, attr)[k, :n_intervals], starts)
            out[name] = np.where(it > 0, num / it, np.nan)
    return out


def observable_figures(logs: Sequence[RunLog], bucket: int, out_dir: Path, head: Sequence[str]) -> list[Path]:
    """One figure per neighborhood, one panel per instance."""
    files = []
    nids = logs[0].neighborhood_ids
    with plt.rc_context(_RC):
        for nid in nids:
            fig, axes = plt.subplots(len(logs), 1, figsize=(6, 1.8 * len(logs)), squeeze=False)
            rows = []
            for ax, lg in zip(axes[:, 0], logs):
                k = lg.neighborhood_ids.index(nid)
                n = len(trim_empty_tail(lg.sum_n_iters()))
                br = bucket_ratios(lg, k, bucket, n)
                if br["n_iters"].sum() == 0:
                    ax.plot(br["start"], np.zeros(len(br["start"])), color="black", lw=1)
                    ax.text(0.5, 0.5, "no data", transform=ax.transAxes, ha="center", va="center")
                else:
                    for name, _, color in _SERIES:
                        ax.plot(br["start"], br[name], color=color, lw=1, label=name)
                ax.set_ylim(-0.02, 1.02)
                ax.set_title(lg.instance_id, loc="left")
                ax.set_ylabel("ratio")
                rows += [
                    (lg.instance_id, str(int(s)), c, i, w, z)
                    for s, c, i, w, z in zip(br["start"], br["n_iters"], br["improve"], br["worsen"], br["nothing"])
                ]
            axes[0, 0].legend(loc="upper right", fontsize=6)
            axes[-1, 0].set_xlabel(f"interval (buckets of {bucket})")
            fig.suptitle(nid)
            fig.tight_layout()
            svg = out_dir / f"observables_{nid}.svg"
            _save(fig, svg, head)
            files += [svg, _sidecar(svg.with_suffix(".tsv"), head,
                                    ("instance", "bucket_start", "n_iters", "improve", "worsen", "nothing"), rows)]
    return files


def activity_figure(log: RunLog, spec: FrameSpec, out_dir: Path, head: Sequence[str]) -> list[Path]:
    """Total applications per interval with the frame boundaries."""
    A = log.sum_n_iters()[: spec.n_intervals]
    x = np.arange(1, len(A) + 1)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 2.5))
        ax.plot(x, A, color="tab:blue", lw=1)
        for e in spec.ends[:-1]:
            ax.axvline(e + 0.5, color="black", ls="--", lw=0.8)
        ax.set_xlabel("interval")
        ax.set_ylabel("applications")
        ax.set_title(f"{log.instance_id}: frame ends {', '.join(map(str, spec.ends))}", loc="left")
        fig.tight_layout()
        svg = out_dir / f"activity_{log.instance_id}.svg"
        _save(fig, svg, head)
    frame_col = spec.labels()
    rows = [(str(i), str(int(a)), str(int(f))) for i, a, f in zip(x, A, frame_col)]
    return [svg, _sidecar(svg.with_suffix(".tsv"), head, ("interval", "sum_n_iters", "frame"), rows)]


def tuning_figure(comp, out_dir: Path, head: Sequence[str]) -> list[Path]:
    """Box plot of the per-trial evaluation gaps, default as a line."""
    from .tune import SERIES

    data = [comp.series(s) for s in SERIES]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.boxplot(data)
        ax.set_xticks(range(1, len(SERIES) + 1), SERIES)
        ax.axhline(comp.default_mean, color="tab:red", ls="--", lw=1, label="default")
        ax.set_ylabel("mean optimality gap (%)")
        ax.legend(loc="upper right")
        fig.tight_layout()
        svg = out_dir / "tuning.svg"
        _save(fig, svg, head)
    rows = [(str(t["trial"]),) + tuple(t[s] for s in SERIES) for t in comp.trials]
    rows.append(("default",) + (comp.default_mean,) * len(SERIES))
    return [svg, _sidecar(svg.with_suffix(".tsv"), head, ("trial",) + tuple(SERIES), rows)]
