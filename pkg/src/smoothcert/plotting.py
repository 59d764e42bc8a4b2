"""Certified-accuracy figures written next to the curve CSVs."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLES = {"tcertify": "-", "certify": "--"}


def plot_certified_accuracy(curves, path, title: str = "") -> None:
    """One step line per curve; the legend uses each curve's ``method``."""
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for c in curves:
        method = c.metadata.get("method", "")
        ax.step(c.radii, c.accuracy, where="post", linestyle=_STYLES.get(method, "-"),
                label=method or None)
    ax.set_xlabel(r"$\ell_2$ radius")
    ax.set_ylabel("certified accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.set_xlim(left=0.0)
    if title:
        ax.set_title(title)
    if any(c.metadata.get("method") for c in curves):
        ax.legend(frameon=False)
    fig.tight_layout()
    # Fixed metadata keeps repeated renders byte-identical.
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
