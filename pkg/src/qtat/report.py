"""Figure rendering for the report paths.

The experiment runners emit delimited output only; the command-line report
path renders companion figures next to each CSV.  Everything goes through
the Agg backend so headless runs work.
"""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_sweep_figure(report, path):
    """Two panels: error decay across the ladder and the log-product trend."""
    plt = _pyplot()
    med_err = report.median_by_level("error_l2")
    med_hold = report.median_by_level("holder_error")
    med_prod = report.median_by_level("log_product")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))

    if med_err:
        levels, errs = zip(*med_err)
        ax1.loglog(levels, errs, "o-", label="initial-condition error")
    if med_hold:
        levels, holds = zip(*med_hold)
        if max(holds) > 0:
            ax1.loglog(levels, holds, "s--", label="near-region $H^{1,0}$ error")
    ax1.set_xlabel("noise level")
    ax1.set_ylabel("median error")
    ax1.invert_xaxis()
    ax1.legend(fontsize=8)
    title = report.scenario
    if report.fitted_rho is not None:
        title += f"  (rho={report.fitted_rho:.3f}, R2={report.r_squared:.3f})"
    ax1.set_title(title, fontsize=10)

    if med_prod:
        levels, prods = zip(*med_prod)
        ax2.semilogx(levels, prods, "o-")
        med = np.median(prods)
        ax2.axhline(2 * med, color="crimson", linestyle=":", label="2x median")
        ax2.legend(fontsize=8)
    ax2.set_xlabel("noise level")
    ax2.set_ylabel(r"error $\cdot \sqrt{\log(1/\mathrm{level})}$")
    ax2.invert_xaxis()

    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_carleman_figure(report, path):
    """Per-function log-constants with the family maximum highlighted."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    values = [row.log_constant for row in report.rows if not row.degenerate]
    ax.plot(range(len(values)), values, "o")
    if values:
        ax.axhline(max(values), color="crimson", linestyle=":",
                   label="family log-constant")
        ax.legend(fontsize=8)
    ax.set_xlabel("test function")
    ax.set_ylabel("log constant")
    ax.set_title(f"{report.lemma}  nu={report.params.nu:g} eps={report.params.epsilon:g}",
                 fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_field_figure(field, path, truth=None, title=""):
    """Profile (1-D) or heat map (2-D) of a reconstructed field."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.6, 3.4))
    if field.grid.ndim == 1:
        x = field.grid.axis(0)
        ax.plot(x, field.values, label="reconstruction")
        if truth is not None:
            ax.plot(truth.grid.axis(0), truth.values, "--", label="truth")
            ax.legend(fontsize=8)
        ax.set_xlabel("x1")
    else:
        im = ax.imshow(field.values.T, origin="lower", aspect="auto",
                       extent=[*field.grid.bounds()[0][:1], *field.grid.bounds()[1][:1],
                               field.grid.bounds()[0][1], field.grid.bounds()[1][1]])
        fig.colorbar(im, ax=ax)
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_tail_figure(tails, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.2, 3.2))
    ts = [tb.t for tb in tails]
    bounds = [max(tb.bound, 1e-300) for tb in tails]
    ax.semilogy(ts, bounds, "o-")
    ax.set_xlabel("diffusion time")
    ax.set_ylabel("truncation tail bound")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
