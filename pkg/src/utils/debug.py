"""
Categorized console logging for the LTL policy synthesis toolkit

Every pipeline stage reports through one Debug instance: formula translation,
automaton checks, training, curriculum stages, Monte-Carlo evaluation and the
exact oracles. Messages are dropped unless debug output is enabled or the
call passes force=True; results the user asked for are always forced.
"""

import time
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Dict, Iterator, List, Mapping, Optional

from .constants import __version__


class Debug:
    """
    Console logger with per-category icons and nested wall-clock timers.

    Timers opened inside another timer are recorded as its children, so a
    command timer can report how long each curriculum stage took.
    """

    CATEGORY_ICONS = {
        "general": "🔄",
        "timing": "⚡",
        "setup": "🔧",
        "formula": "📜",
        "automaton": "🔁",
        "env": "🌊",
        "train": "🏃",
        "stage": "🪜",
        "eval": "🎯",
        "oracle": "🧮",
        "file": "📂",
        "success": "✅",
        "warning": "⚠️",
        "error": "❌",
        "info": "ℹ️",
        "none": "",
    }

    LEVEL_ICONS = {"WARNING": "warning", "ERROR": "error"}

    def __init__(self, enabled: bool = False, show_timestamps: bool = True):
        self.enabled = enabled
        self.show_timestamps = show_timestamps
        self.durations: Dict[str, float] = {}
        self.children: Dict[str, List[str]] = {}
        self._open: List[str] = []

    def log(self, message: str, level: str = "INFO", category: str = "general", force: bool = False, indent_level: int = 0) -> None:
        """
        Print one line when enabled or forced.

        Args:
            message: text to print
            level: INFO, WARNING or ERROR; the latter two replace the category icon
            category: key of CATEGORY_ICONS
            force: print even when debug output is off
            indent_level: two spaces per level
        """
        if not (self.enabled or force):
            return

        icon = self.CATEGORY_ICONS[self.LEVEL_ICONS[level]] if level in self.LEVEL_ICONS else self.CATEGORY_ICONS.get(category, self.CATEGORY_ICONS["general"])
        parts = []
        if self.show_timestamps:
            parts.append(f"[{datetime.now().strftime('%H:%M:%S.%f')[:-3]}]")
        parts.append(icon)
        if level != "INFO":
            parts.append(f"[{level}]")
        print(f"{' '.join(parts)} {'  ' * indent_level}{message}", flush=True)

    def log_mapping(self, title: str, values: Mapping[str, Any], category: str = "setup", force: bool = False) -> None:
        self.log(title, category=category, force=force)
        for key, value in values.items():
            self.log(f"{key}: {value}", category="none", force=force, indent_level=1)

    def print_header(self, cli: bool = False) -> None:
        """Banner shown at the start of every command."""
        timestamps, self.show_timestamps = self.show_timestamps, False
        width = 60
        left = f"{'CLI · ' if cli else ''}v{__version__}"
        right = "LDBA product · A2C · curriculum"
        self.log("", category="none", force=True)
        self.log("LTL-RL · specification-guided policy synthesis", category="none", force=True, indent_level=1)
        self.log(f"{left}{' ' * max(1, width - len(left) - len(right))}{right}", category="none", force=True, indent_level=1)
        self.log("━" * width, category="none", force=True, indent_level=1)
        self.log("", category="none", force=True)
        self.show_timestamps = timestamps

        if self.enabled:
            self._print_environment_info()

    def _print_environment_info(self) -> None:
        import platform
        import sys
        import numpy
        import torch

        py_ver = ".".join(str(v) for v in sys.version_info[:3])
        self.log(f"OS: {platform.system()} {platform.release()}", category="info")
        self.log(f"Python: {py_ver} | PyTorch: {torch.__version__} | NumPy: {numpy.__version__}", category="info")
        self.log("", category="none")

    def print_footer(self) -> None:
        self.log("", category="none", force=True)
        self.log("─" * 24, category="none", force=True)

    @contextmanager
    def timer(self, name: str) -> Iterator[None]:
        """Record the wall-clock duration of the block under `name`."""
        if self._open:
            siblings = self.children.setdefault(self._open[-1], [])
            if name not in siblings:
                siblings.append(name)
        self._open.append(name)
        start = time.perf_counter()
        try:
            yield
        finally:
            self.durations[name] = time.perf_counter() - start
            self._open.pop()

    def log_timing(self, name: str, message: str, force: bool = False, breakdown: bool = False) -> float:
        """
        Log a finished timer, optionally with its children slowest first.
        Returns the duration, 0.0 for an unknown timer.
        """
        if name not in self.durations:
            return 0.0
        duration = self.durations[name]
        self.log(f"{message} in {duration:.2f}s", category="timing", force=force)
        if breakdown:
            for child in sorted(self.children.get(name, []), key=lambda c: -self.durations.get(c, 0.0)):
                if self.durations.get(child, 0.0) >= 0.01:
                    self.log(f"└─ {child}: {self.durations[child]:.2f}s", category="timing", force=force, indent_level=1)
        return duration
