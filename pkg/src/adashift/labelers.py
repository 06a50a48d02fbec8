"""Label providers for active rounds: the ground-truth oracle for automated
runs and the annotation-service adapter that blocks on human input."""

from __future__ import annotations

import time

from .data import DomainPool


class LabelerTimeout(RuntimeError):
    """The round was not completed in time; nothing was committed."""


class OracleLabeler:
    """Resolves queries instantly from the pools' ground-truth labels."""

    def __init__(self, pools: dict[str, DomainPool]):
        self._labels: dict[str, int] = {}
        for pool in pools.values():
            for i, sid in enumerate(pool.ids):
                self._labels[sid] = int(pool.y[i])

    def request_labels(self, domain: str, round_index: int,
                       records: list[dict]) -> dict[str, int]:
        out = {}
        for record in records:
            value = self._labels.get(record["sample_id"], -1)
            if value < 0:
                raise KeyError(f"oracle has no label for {record['sample_id']!r}")
            out[record["sample_id"]] = value
        return out


class ServiceLabeler:
    """Publishes the round to an annotation service and blocks until every
    query is labeled. Raises LabelerTimeout without side effects on the round
    state if the deadline passes."""

    def __init__(self, service, timeout: float | None = None, poll_interval: float = 0.05):
        self.service = service
        self.timeout = timeout
        self.poll_interval = poll_interval

    def request_labels(self, domain: str, round_index: int,
                       records: list[dict]) -> dict[str, int]:
        self.service.start_round(domain=domain, round_index=round_index, queries=records)
        labels = self.service.wait_complete(timeout=self.timeout)
        if labels is None:
            self.service.abort_round()
            raise LabelerTimeout(
                f"annotation round {round_index} for {domain!r} timed out")
        return labels
