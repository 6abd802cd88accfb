"""Render experiment records and verification sweeps to figure files.

Imports matplotlib lazily with the Agg backend so the library never needs a
display and plain CSV runs never pay the import cost.
"""

from __future__ import annotations

from typing import Sequence

from .errors import UsageError
from .lab import ExperimentRecord


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _column(records, name):
    return [r.values[name] for r in records]


def _render_lorenz(plt, records):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    rhos = sorted({r.values["rho"] for r in records})
    for rho in rhos:
        rows = [r for r in records if r.values["rho"] == rho]
        ts = _column(rows, "T")
        ax.plot(ts, [abs(v) for v in _column(rows, "ad_dJdrho")], "o-", label=f"|AD| rho={rho:g}")
        ax.plot(ts, [abs(v) for v in _column(rows, "fd_dJdrho")], "s--", label=f"|FD| rho={rho:g}")
    ax.set_yscale("log")
    ax.set_xlabel("averaging horizon T")
    ax.set_ylabel("|d mean(z) / d rho|")
    ax.set_title("Chaotic time average: AD sensitivity grows with the horizon")
    ax.legend(fontsize=7)
    return fig


def _render_cosine(plt, records):
    fig, axes = plt.subplots(3, 1, figsize=(6.0, 6.5), sharex=True)
    rows = [r for r in records if r.values["T"] > 0]
    ts = _column(rows, "T")
    axes[0].plot(ts, [abs(v) for v in _column(rows, "L")], "o-")
    axes[0].set_ylabel("|average|")
    axes[1].plot(ts, _column(rows, "ad_dLdomega"), "o-")
    axes[1].set_ylabel("AD d/domega")
    axes[1].set_ylim(-1.1, 1.1)
    axes[2].plot(ts, _column(rows, "fd_dLdomega"), "o-")
    axes[2].set_ylabel("FD d/domega")
    axes[2].set_xlabel("horizon T")
    axes[0].set_xscale("log")
    axes[0].set_title("Oscillating average: the derivative never settles")
    return fig


def _render_quadrature(plt, records):
    fig, axes = plt.subplots(1, 3, figsize=(9.0, 3.2), sharey=False)
    ns = sorted({r.values["N"] for r in records})
    for n in ns:
        rows = [r for r in records if r.values["N"] == n]
        xs = _column(rows, "x")
        axes[0].plot(xs, _column(rows, "F"), "o-", label=f"N={n}")
        axes[1].plot(xs, _column(rows, "ad_dFdx"), "o-", label=f"N={n}")
        axes[2].plot(xs, _column(rows, "fd_dFdx"), "o-", label=f"N={n}")
    for ax, title in zip(axes, ("integral", "AD derivative", "FD derivative")):
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("x")
    axes[0].legend(fontsize=7)
    fig.suptitle("Quadrature staircase: AD sees the flat steps")
    return fig


def _render_heron(plt, records):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(_column(records, "iters"), _column(records, "ad_loop_deriv_err"), "o",
            label="loop AD derivative error")
    ax.plot(_column(records, "iters"), _column(records, "implicit_deriv_err"), "s",
            label="implicit fixed-point error")
    ax.plot(_column(records, "iters"), _column(records, "primal_err"), "x",
            label="primal error")
    floor = 1e-18
    ax.set_yscale("log")
    ax.set_ylim(bottom=floor)
    ax.set_xlabel("iterations until the primal tolerance")
    ax.set_ylabel("absolute error")
    ax.set_title("Square-root iteration: the primal stop starves the derivative")
    ax.legend(fontsize=8)
    return fig


def _render_pointwise(plt, records):
    fns = sorted({r.values["fn"] for r in records})
    fig, axes = plt.subplots(len(fns), 1, figsize=(6.0, 2.2 * len(fns)), squeeze=False)
    for ax, fn in zip(axes[:, 0], fns):
        rows = [r for r in records if r.values["fn"] == fn and r.values["flag"] != "domain"]
        xs = _column(rows, "x")
        ax.plot(xs, _column(rows, "ad_deriv"), ".", label="AD")
        ax.plot(xs, _column(rows, "ref_deriv"), "-", lw=0.8, label="intended")
        ax.plot(xs, _column(rows, "fd_deriv"), "x", ms=3, label="FD")
        ax.set_ylabel(fn, fontsize=8)
        ax.legend(fontsize=6, loc="best")
    axes[-1, 0].set_xlabel("x")
    fig.suptitle("Pointwise derivative studies")
    return fig


_RENDERERS = {
    "lorenz": _render_lorenz,
    "cosine": _render_cosine,
    "quadrature": _render_quadrature,
    "heron": _render_heron,
    "pointwise": _render_pointwise,
}


def render_experiment(records: Sequence[ExperimentRecord], path) -> None:
    """Render one experiment's records to an image file next to its CSV."""
    if not records:
        raise UsageError("no records to plot")
    experiment = records[0].experiment
    renderer = _RENDERERS.get(experiment)
    if renderer is None:
        raise UsageError(f"no renderer for experiment {experiment!r}")
    plt = _pyplot()
    fig = renderer(plt, list(records))
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_gradcheck(report, path) -> None:
    """Log-log error-versus-step-size figure for one verification sweep."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.loglog(report.h_grid, [max(e, 1e-18) for e in report.fd1_error], "o-", label="forward FD error")
    ax.loglog(report.h_grid, [max(e, 1e-18) for e in report.fd2_error], "s-", label="central FD error")
    if report.plateau is not None:
        ax.axhline(report.plateau, color="k", ls=":", lw=1, label=f"plateau {report.plateau:.1e}")
    ax.invert_xaxis()
    ax.set_xlabel("step size h")
    ax.set_ylabel("|FD - claimed derivative|")
    ax.set_title(f"Step-size sweep ({report.verdict})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
