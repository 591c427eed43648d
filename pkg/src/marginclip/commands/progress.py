"""
Progress reporting for long-running subcommands.
"""

from collections.abc import Callable, Iterator
from contextlib import contextmanager
from typing import Any

from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn


@contextmanager
def track(console: Console, description: str, total: int) -> Iterator[Callable[[Any], None]]:
    """
    Yield a callback advancing a progress bar by one step per call.

    The callback accepts and ignores one argument so it can be passed directly
    as an ``on_epoch`` or ``on_iteration`` hook.
    """
    with Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task(description, total=total)

        def advance(_record: Any = None) -> None:
            progress.advance(task)

        yield advance
