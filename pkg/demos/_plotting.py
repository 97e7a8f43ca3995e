"""Shared figure handling for the demos: headless backend, common output folder."""

import os
from pathlib import Path

OUT = Path(os.environ.get("TRENDBREAK_OUTPUT_DIR", Path(__file__).parent / "output"))


def pyplot():
    """matplotlib.pyplot on the Agg backend, or None when matplotlib is missing."""
    try:
        import matplotlib
    except ImportError:
        print("(matplotlib not installed; skipping figures)")
        return None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save(fig, name):
    OUT.mkdir(parents=True, exist_ok=True)
    path = OUT / name
    fig.savefig(path, dpi=120, bbox_inches="tight")
    print(f"wrote {path}")
