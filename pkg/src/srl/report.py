"""PNG figures written next to the JSON/CSV reports (Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}


def _save(fig, path: Path) -> Path:
    fig.savefig(path)
    plt.close(fig)
    return path


def expansion_figure(payload: dict, path: Path) -> Path:
    """log quotient against eps^2 with the fitted curve and its eps -> 0 target."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(9.6, 3.8))
        for ax, key in zip(axes, ("single", "antipodal")):
            fit = payload[key]
            e2 = np.array(fit["eps2_values"])
            ax.plot(e2, fit["values"], "o", color="C0", label="computed")
            xs = np.linspace(0, e2.max() * 1.05, 100)
            ys = fit["intercept"] + fit["slope"] * xs + fit["curvature"] * xs**2
            ax.plot(xs, ys, "-", color="C1", label=f"fit, slope {fit['slope']:.4f}")
            ax.plot(xs, payload[f"{key}_target"] + 0.25 * xs, ":", color="k", label="target + eps^2/4")
            ax.set_xlabel("eps^2")
            ax.set_ylabel("log quotient")
            ax.set_title(key.replace("single", "single bump").replace("antipodal", "antipodal pair"))
            ax.legend()
        return _save(fig, path)


def ascent_figure(payload: dict, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for tr in payload["traces"]:
            lab = "constant start" if tr["seed"] is None else f"seed {tr['seed']}"
            ax.plot(tr["quotients"], lw=1, label=lab)
        ax.axhline(payload["threshold"], color="k", ls="--", lw=1, label="two-profile threshold")
        if payload.get("benchmark"):
            ax.axhline(payload["benchmark"], color="C3", ls=":", lw=1, label="1/(4 pi^2)")
        ax.set_xlabel("iteration")
        ax.set_ylabel("quotient")
        ax.legend(fontsize=7, ncol=2)
        return _save(fig, path)


def bilinear_figure(payload: dict, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        levels = [-2, -3, -4]
        for lab, vals in payload.items():
            ax.plot(levels, vals, "o-", label=lab)
        ax.set_xlabel("dyadic level j (side 2^j)")
        ax.set_ylabel("bilinear ratio")
        ax.set_yscale("log")
        ax.set_xticks(levels)
        ax.invert_xaxis()
        ax.legend()
        return _save(fig, path)


def write_figures(data: dict, out_dir: Path) -> list:
    out = []
    for key, payload in data.items():
        if key.startswith("expansion_"):
            out.append(expansion_figure(payload, out_dir / f"{key}.png"))
        elif key.startswith("ascent_"):
            out.append(ascent_figure(payload, out_dir / f"{key}.png"))
        elif key == "bilinear":
            out.append(bilinear_figure(payload, out_dir / "bilinear.png"))
    return out
