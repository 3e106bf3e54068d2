"""Figure rendering for run logs and certification curves.

Every report-producing command writes these figures next to its CSV
output. All figures are plain PNG files rendered off-screen.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def simulation_figure(log, path, title=""):
    """Com tracking, normal force tracking, and commanded torques."""
    fig, axes = plt.subplots(3, 1, figsize=(9, 10), sharex=True)
    t = log.t

    ax = axes[0]
    labels = ("x [m]", "z [m]", "pitch [rad]")
    for k, lab in enumerate(labels):
        ax.plot(t, log.com[:, k], label=f"com {lab}")
        ax.plot(t, log.com_ref[:, k], "--", lw=0.9, label=f"ref {lab}")
    ax.set_ylabel("com state")
    ax.legend(ncol=3, fontsize=8)
    ax.set_title(title or "tracking")

    ax = axes[1]
    for k, name in enumerate(log.foot_names):
        ax.plot(t, log.foot_force[:, k, 1], label=f"{name} fz")
        ax.plot(t, log.foot_force_ref[:, k, 1], "--", lw=0.8)
    ax.set_ylabel("normal force [N]")
    ax.legend(ncol=4, fontsize=8)

    ax = axes[2]
    for j in range(log.tau_cmd.shape[1]):
        ax.plot(t, log.tau_cmd[:, j], lw=0.7)
    ax.set_ylabel("joint torque [Nm]")
    ax.set_xlabel("time [s]")

    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def certification_figure(omega, lbar, curves, path):
    """Uncertainty bound and margin curves against the certification level."""
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.loglog(omega, lbar, "k", label="uncertainty bound")
    for name, lhs in sorted(curves.items()):
        ax.loglog(omega, lhs, label=f"margin lhs, eta_f = {name}")
    ax.axhline(1.0, color="r", ls=":", lw=1)
    ax.set_xlabel("frequency [rad/s]")
    ax.set_ylabel("magnitude")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def tuning_figure(etas, margins, eta_star, path):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogx(etas, margins, "o-")
    ax.axhline(1.0, color="r", ls=":")
    if eta_star is not None:
        ax.axvline(eta_star, color="g", ls="--", label=f"selected {eta_star:.4g}")
        ax.legend()
    ax.set_xlabel("filter time constant [s]")
    ax.set_ylabel("certification margin")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def comparison_figure(entries, path):
    """Com position error traces for each (controller, ground) run."""
    fig, axes = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    for label, log in entries.items():
        err = log.com[:, :2] - log.com_ref[:, :2]
        dist = np.hypot(err[:, 0], err[:, 1])
        axes[0].plot(log.t, dist, label=label)
        axes[1].plot(log.t, np.degrees(log.com[:, 2] - log.com_ref[:, 2]), label=label)
    axes[0].set_ylabel("com position error [m]")
    axes[0].legend(fontsize=8)
    axes[1].set_ylabel("pitch error [deg]")
    axes[1].set_xlabel("time [s]")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def csv_figure(path_csv, path_png):
    """Re-render the tracking figure from an exported run CSV."""
    with open(path_csv) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path_csv, delimiter=",", skiprows=1, ndmin=2)
    col = {name: i for i, name in enumerate(header)}
    t = data[:, col["t"]]

    fig, axes = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    for name in ("com_x", "com_z", "com_pitch"):
        axes[0].plot(t, data[:, col[name]], label=name)
    axes[0].set_ylabel("com state")
    axes[0].legend(fontsize=8)
    feet = sorted({n.split("_")[0] for n in header if n.endswith("_fz")})
    for foot in feet:
        axes[1].plot(t, data[:, col[f"{foot}_fz"]], label=f"{foot} fz")
        ref = f"{foot}_fz_ref"
        if ref in col:
            axes[1].plot(t, data[:, col[ref]], "--", lw=0.8)
    axes[1].set_ylabel("normal force [N]")
    axes[1].set_xlabel("time [s]")
    axes[1].legend(ncol=4, fontsize=8)
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path_png, dpi=130)
    plt.close(fig)
