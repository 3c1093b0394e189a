"""Order-preserving map over independent work items."""

from concurrent.futures import ThreadPoolExecutor


def ordered_map(fn, items, n_jobs: int = 1) -> list:
    items = list(items)
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))
