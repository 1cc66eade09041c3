"""Dependency injection for experiment execution."""

from concurrent.futures import Executor, ThreadPoolExecutor


def get_executor(workers: int) -> Executor:
    """Create the executor that runs experiment cells.

    This function serves as a dependency injection point for the CLI.
    Tests can patch this function to return a fake executor.

    Args:
        workers: Number of worker threads

    Returns:
        An executor; callers are responsible for shutting it down
    """
    return ThreadPoolExecutor(max_workers=workers, thread_name_prefix="ssflab")
