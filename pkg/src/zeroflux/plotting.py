"""Static figures written next to the CSV outputs (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.stem}.tmp{path.suffix}")
    fig.savefig(tmp)
    plt.close(fig)
    tmp.replace(path)
    return path


def plot_snapshots(traj, path, max_curves: int = 6) -> Path:
    """1-D: profiles at a few snapshot times. 2-D: final field as an image."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        grid = traj.grid
        if grid.ndim == 1:
            x = grid.centers(0)
            idx = np.unique(np.linspace(0, len(traj.times) - 1, max_curves).round().astype(int))
            for i in idx:
                ax.plot(x, traj.fields[i].values, label=f"t = {traj.times[i]:.3g}")
            ax.set_xlabel("x")
            ax.set_ylabel("u")
            ax.set_ylim(-0.05 * traj.problem.M, 1.05 * traj.problem.M)
            ax.legend()
        else:
            lo, hi = grid.domain.lo, grid.domain.hi
            im = ax.imshow(traj.final.values.T, origin="lower", aspect="auto",
                           extent=(lo[0], hi[0], lo[1], hi[1]),
                           vmin=0.0, vmax=traj.problem.M)
            fig.colorbar(im, ax=ax, label="u")
            ax.set_xlabel("x")
            ax.set_ylabel("y")
            ax.grid(False)
        ax.set_title(f"{traj.problem.name}, n = {'x'.join(map(str, grid.n))}")
        fig.tight_layout()
        return _save(fig, path)


def plot_step_log(log: np.ndarray, path) -> Path:
    """Range and relative mass drift against time."""
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.0))
        t = log[:, 1]
        a1.plot(t, log[:, 3], label="min u")
        a1.plot(t, log[:, 4], label="max u")
        a1.set_ylabel("range")
        a1.legend()
        mass = log[:, 5]
        ref = mass[0] if mass[0] != 0 else 1.0
        a2.plot(t, (mass - mass[0]) / abs(ref))
        a2.set_ylabel("relative mass drift")
        a2.set_xlabel("t")
        fig.tight_layout()
        return _save(fig, path)


def plot_convergence(tables: dict, path) -> Path:
    """Log-log error against h for every convergence table."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, rows in tables.items():
            h = np.array([r.h for r in rows])
            e = np.array([r.error for r in rows])
            keep = e > 0
            if keep.any():
                ax.loglog(h[keep], e[keep], "o-", label=name)
        ax.set_xlabel("h")
        ax.set_ylabel("L1 error")
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
        fig.tight_layout()
        return _save(fig, path)


def plot_residuals(reports, path) -> Path:
    """Residual limits against k, scaled by their tolerance, per functional."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        groups: dict[str, list] = {}
        for r in reports:
            key = r.functional if r.test_function is None else f"{r.functional}[{r.test_function}]"
            groups.setdefault(key, []).append(r)
        for key, reps in sorted(groups.items()):
            k = [r.k if r.k is not None else np.nan for r in reps]
            ax.plot(k, [r.limit / r.tol for r in reps], ".-", label=key)
        ax.axhline(-1.0, color="k", ls="--", lw=0.8)
        ax.axhline(1.0, color="k", ls=":", lw=0.8)
        ax.set_xlabel("k")
        ax.set_ylabel("limit / tol")
        ax.legend(fontsize=6, ncol=2)
        fig.tight_layout()
        return _save(fig, path)
