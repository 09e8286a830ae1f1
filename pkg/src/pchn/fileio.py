"""Atomic text output used by checkpoints, CSV writers, and the CLI."""

import os


def atomic_write_text(path, text: str):
    """Write text to path via a temp file + rename so readers never see
    a half-written file."""
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
