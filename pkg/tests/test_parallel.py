from __future__ import annotations

import pytest

from cloudlead.core import ConfigError
from cloudlead.parallel import THREADS_ENV, resolve_threads, run_jobs


def _square(x):
    return x * x


def test_resolve_threads(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert resolve_threads() == 1
    assert resolve_threads(3) == 3
    monkeypatch.setenv(THREADS_ENV, "4")
    assert resolve_threads() == 4
    assert resolve_threads(2) == 2
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        resolve_threads()
    with pytest.raises(ConfigError):
        resolve_threads(0)


def test_run_jobs_keeps_order():
    jobs = list(range(7))
    assert run_jobs(_square, jobs, 1) == [j * j for j in jobs]
    assert run_jobs(_square, jobs, 2) == [j * j for j in jobs]
    assert run_jobs(_square, [], 3) == []
