import numpy as np

from twinforge._parallel import parallel_map, worker_count


def test_worker_count_default(monkeypatch):
    monkeypatch.delenv("TWINFORGE_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("TWINFORGE_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("TWINFORGE_THREADS", "junk")
    assert worker_count() == 1
    monkeypatch.setenv("TWINFORGE_THREADS", "-2")
    assert worker_count() == 1


def test_parallel_map_preserves_order(monkeypatch):
    items = list(range(50))
    serial = parallel_map(lambda x: x * x, items, workers=1)
    threaded = parallel_map(lambda x: x * x, items, workers=4)
    assert serial == threaded == [x * x for x in items]


def test_parallel_map_env_controls_workers(monkeypatch):
    monkeypatch.setenv("TWINFORGE_THREADS", "3")
    rng = np.random.default_rng(0)
    data = rng.normal(size=(20, 4))
    out = parallel_map(lambda row: float(row.sum()), data)
    assert out == [float(r.sum()) for r in data]
