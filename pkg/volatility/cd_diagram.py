"""Critical-difference diagram rendered to SVG with matplotlib."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import RankReport  # noqa: E402

SVG_HASH_SALT = "neuralgarch-cd"


def draw_cd_diagram(report: RankReport, path: str, title: str = ""):
    """Rank axis with model labels on both sides and bold bars over cliques.

    Output is byte-stable for equal reports.
    """
    k = len(report.models)
    ordered = report.ordered()
    rank_of = dict(ordered)
    half = (k + 1) // 2

    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        height = 1.2 + 0.3 * max(half, len(report.cliques) + 1)
        fig, ax = plt.subplots(figsize=(7, height))
        ax.set_xlim(0.5, k + 0.5)
        ax.set_ylim(-(half + 1) * 0.3 - 0.2, 0.6)
        ax.axis("off")

        ax.hlines(0.3, 1, k, color="black", linewidth=1)
        for tick in range(1, k + 1):
            ax.vlines(tick, 0.3, 0.4, color="black", linewidth=1)
            ax.text(tick, 0.45, str(tick), ha="center", va="bottom", fontsize=9)

        for position, (name, rank) in enumerate(ordered):
            left = position < half
            row = position if left else k - 1 - position
            y = -0.3 * (row + 1)
            x_end = 0.6 if left else k + 0.4
            ax.plot([rank, rank, x_end], [0.3, y, y], color="black", linewidth=0.8)
            ax.text(
                x_end + (-0.05 if left else 0.05),
                y,
                f"{name} ({rank:.2f})",
                ha="right" if left else "left",
                va="center",
                fontsize=8,
            )

        for i, clique in enumerate(report.cliques):
            ranks = [rank_of[name] for name in clique]
            y = 0.22 - 0.06 * i
            ax.hlines(y, min(ranks) - 0.03, max(ranks) + 0.03, color="black", linewidth=3)

        if title:
            ax.set_title(title, fontsize=10)
        fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
        plt.close(fig)
