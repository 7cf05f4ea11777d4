"""Figure rendering for run and comparison outputs.

Renders to image files next to the CSV output (headless Agg backend); the
CSV remains the primary artifact, these are quick-look views of the same
records.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_STYLE = {"d-sgd": ("tab:gray", "--"), "d-adam": ("tab:blue", "-"),
          "cada": ("tab:orange", "-"), "g-cada": ("tab:green", "-")}


def _style(scheme: str):
    return _STYLE.get(scheme, ("tab:red", ":"))


def render_run(records, stem: str, scheme: str = "") -> list[str]:
    """Loss and per-iteration wall clock for a single run -> {stem}_run.png."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ks = [r.k for r in records]
    ax1.semilogy(ks, [r.loss for r in records], color=_style(scheme)[0])
    ax1.set_ylabel("training loss")
    ax1.set_title(scheme or "run")
    ax2.plot(ks, [r.t_iter for r in records], color="tab:purple", lw=0.8)
    ax2.set_ylabel("seconds / iteration")
    ax2.set_xlabel("iteration")
    path = f"{stem}_run.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return [path]


def render_comparison(results: Sequence, stem: str) -> list[str]:
    """Loss, communication and computation against wall clock, one line per
    scheme -> {stem}_{loss,comm,comp}.png."""
    panels = [("loss", "training loss", lambda r: r.loss, True),
              ("comm", "cumulative communication", lambda r: r.comm_cum, False),
              ("comp", "cumulative gradient samples", lambda r: r.comp_cum, False)]
    paths = []
    for tag, label, pick, logy in panels:
        fig, ax = plt.subplots(figsize=(6, 4))
        for cfg, records, _summary in results:
            color, ls = _style(cfg.scheme)
            xs = [r.t_cum for r in records]
            ys = [pick(r) for r in records]
            (ax.semilogy if logy else ax.plot)(xs, ys, color=color, ls=ls,
                                               label=cfg.scheme)
        ax.set_xlabel("wall-clock time (s)")
        ax.set_ylabel(label)
        ax.legend()
        path = f"{stem}_{tag}.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    return paths
