"""Pure-Python event loop for the proxy queueing system.

Slow but explicit: every task is an object with a status, so tests can check
ordering and accounting invariants. `tofec.simulator` runs the same rules in a
compiled kernel; the two must agree record for record.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .strategies import ArrivalContext, Strategy

QUEUED, RUNNING, COMPLETED, CANCELLED, PREEMPTED = "queued", "running", "completed", "cancelled", "preempted"


@dataclass
class Task:
    request: int
    index: int
    status: str = QUEUED
    thread: int = -1
    start: float = math.nan
    delay: float = math.nan
    usage: float = 0.0


@dataclass
class Request:
    id: int
    cls: int
    arrival: float
    n: int = 0
    k: int = 0
    queue_length: int = 0
    idle_threads: int = 0
    admitted: float = math.nan
    done: float = math.nan
    completed_tasks: int = 0
    tasks: list[Task] = field(default_factory=list)

    @property
    def usage(self) -> float:
        return math.fsum(t.usage for t in self.tasks)


@dataclass
class Trace:
    """Event log kept for invariant checks."""

    admissions: list[tuple[float, int]] = field(default_factory=list)
    task_starts: list[tuple[float, int, int]] = field(default_factory=list)  # (t, request, thread)
    busy_samples: list[int] = field(default_factory=list)


def simulate_reference(
    arrivals: np.ndarray,
    classes_idx: np.ndarray,
    task_u: np.ndarray,
    L: int,
    strategy: Strategy,
    delay_fn,
) -> tuple[list[Request], Trace]:
    """Run to completion and return the requests (in arrival order) and the trace.

    `delay_fn(cls, k, u)` maps a uniform to a task delay for a chunk of class
    `cls` split into k pieces.
    """
    requests = [Request(i, int(c), float(t)) for i, (t, c) in enumerate(zip(arrivals, classes_idx))]
    trace = Trace()
    events: list = []
    seq = 0
    threads: list[Task | None] = [None] * L
    request_queue: deque[Request] = deque()
    task_queue: deque[Task] = deque()

    def push(time, kind, payload):
        nonlocal seq
        heapq.heappush(events, (time, seq, kind, payload))
        seq += 1

    def start_task(task: Task, thread: int, now: float):
        req = requests[task.request]
        task.status, task.thread, task.start = RUNNING, thread, now
        task.delay = delay_fn(req.cls, req.k, float(task_u[req.id, task.index]))
        threads[thread] = task
        trace.task_starts.append((now, req.id, thread))
        push(now + task.delay, "done", task)

    def dispatch(now: float):
        while True:
            idle = next((i for i, t in enumerate(threads) if t is None), None)
            if idle is None:
                return
            if task_queue:
                start_task(task_queue.popleft(), idle, now)
            elif request_queue:
                req = request_queue.popleft()
                req.admitted = now
                trace.admissions.append((now, req.id))
                req.tasks = [Task(req.id, j) for j in range(req.n)]
                task_queue.extend(req.tasks)
            else:
                return

    if len(requests):
        push(requests[0].arrival, "arrival", requests[0])

    while events:
        now, _, kind, obj = heapq.heappop(events)
        if kind == "arrival":
            req: Request = obj
            idle = sum(1 for t in threads if t is None)
            ctx = ArrivalContext(queue_length=len(request_queue), idle_threads=idle, class_index=req.cls)
            code = strategy.choose(ctx)
            req.n, req.k = code.n, code.k
            req.queue_length, req.idle_threads = ctx.queue_length, ctx.idle_threads
            request_queue.append(req)
            if req.id + 1 < len(requests):
                nxt = requests[req.id + 1]
                push(nxt.arrival, "arrival", nxt)
        else:
            task: Task = obj
            if task.status != RUNNING:
                continue  # stale: preempted earlier
            req = requests[task.request]
            task.status, task.usage = COMPLETED, task.delay
            threads[task.thread] = None
            req.completed_tasks += 1
            if req.completed_tasks == req.k:
                req.done = now
                for other in req.tasks:
                    if other.status == RUNNING:
                        other.status, other.usage = PREEMPTED, now - other.start
                        threads[other.thread] = None
                    elif other.status == QUEUED:
                        other.status = CANCELLED
                        task_queue.remove(other)
        dispatch(now)
        trace.busy_samples.append(sum(1 for t in threads if t is not None))
    return requests, trace
