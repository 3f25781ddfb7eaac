"""Log-log latency and memory curves rendered to a single SVG."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .bench import BenchRecord, read_csv  # noqa: E402


def plot_records(records: list[BenchRecord], out_path) -> None:
    variants = sorted({r.variant for r in records})
    fig, (ax_lat, ax_mem) = plt.subplots(1, 2, figsize=(10, 4))
    for variant in variants:
        rows = sorted((r for r in records if r.variant == variant),
                      key=lambda r: r.length)
        lengths = [r.length for r in rows]
        ax_lat.plot(lengths, [r.median_ms for r in rows], marker="o", label=variant)
        mem_rows = [(r.length, r.peak_bytes) for r in rows if r.peak_bytes]
        if mem_rows:
            ax_mem.plot([m[0] for m in mem_rows],
                        [m[1] / 2**20 for m in mem_rows], marker="o", label=variant)
    for ax, ylabel in ((ax_lat, "median latency (ms)"), (ax_mem, "peak tracked MB")):
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("sequence length L")
        ax.set_ylabel(ylabel)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)


def plot_csv(csv_path, out_path) -> None:
    plot_records(read_csv(csv_path), out_path)
