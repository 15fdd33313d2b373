"""Figures for the sweep reports.

matplotlib is optional (``pip install .[plot]``) and imported only here, on
first use, with the non-interactive Agg backend.
"""

from __future__ import annotations

from fractions import Fraction


class PlottingUnavailable(ImportError):
    pass


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise PlottingUnavailable("figures need matplotlib; install the 'plot' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _f(value) -> float:
    return float(Fraction(value))


def gap_figure(rows, path):
    """Objective gap against eps for each mode (rows from the gap sweep CSV)."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode in sorted({r["mode"] for r in rows}):
        sel = [r for r in rows if r["mode"] == mode]
        ax.plot([_f(r["eps"]) for r in sel], [_f(r["gap"]) for r in sel], marker="o", label=mode)
    ax.set_xscale("log")
    ax.set_xlabel("eps")
    ax.set_ylabel("|F_eps - F*|")
    ax.set_title("gap of the eps-feasible solution")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def stability_figure(rows, path):
    """Recovery distance against eps, one line per (instance, seed), with the bound."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = {}
    for r in rows:
        groups.setdefault((r.get("instance", ""), r.get("seed", "")), []).append(r)
    for (name, seed), sel in sorted(groups.items()):
        sel = [r for r in sel if _f(r["eps"]) > 0]
        if not sel:
            continue
        xs = [_f(r["eps"]) for r in sel]
        ax.plot(xs, [max(_f(r["dist_total"]), 1e-300) for r in sel], marker=".", label=f"{name} seed {seed}")
        ax.plot(xs, [_f(r["distance_bound"]) for r in sel], linestyle=":", color="grey")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("eps")
    ax.set_ylabel("distance to a feasible bilevel point")
    if len(groups) <= 8:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def dichotomy_figure(rows, path):
    """Error against eps for both families on one log-log plot."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for family, style in (("nonconvex", "o-"), ("linear", "s--")):
        sel = [r for r in rows if r["family"] == family]
        for label in sorted({r["series"] for r in sel}):
            pts = [r for r in sel if r["series"] == label and _f(r["error"]) > 0]
            ax.plot([_f(r["eps"]) for r in pts], [_f(r["error"]) for r in pts], style, label=f"{family}: {label}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("eps")
    ax.set_ylabel("error")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
