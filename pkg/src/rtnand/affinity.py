"""Optional CPU pinning for the dedicated threads.

``RTNAND_AFFINITY`` maps roles to CPU lists, e.g. ``loop=0;executor=1;aligner=2,3``.
Unset, empty, or unsupported platforms leave scheduling to the OS.
"""

from __future__ import annotations

import os

ENV_VAR = "RTNAND_AFFINITY"
ROLES = ("loop", "executor", "aligner")


def parse_affinity(text: str) -> dict[str, set[int]]:
    out: dict[str, set[int]] = {}
    for item in text.replace(" ", "").split(";"):
        if not item:
            continue
        role, sep, cpus = item.partition("=")
        if not sep or role not in ROLES:
            raise ValueError(f"bad affinity entry {item!r}")
        out[role] = {int(c) for c in cpus.split(",") if c}
    return out


def pin_current_thread(role: str) -> bool:
    """Apply the hint for ``role`` to the calling thread. Returns True if pinned."""
    text = os.environ.get(ENV_VAR, "")
    if not text or not hasattr(os, "sched_setaffinity"):
        return False
    cpus = parse_affinity(text).get(role)
    if not cpus:
        return False
    try:
        os.sched_setaffinity(0, cpus)
    except OSError:
        return False
    return True
