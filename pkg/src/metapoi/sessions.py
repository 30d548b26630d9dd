"""Session splitting and meta-task construction.

A session is one user's check-ins within one calendar day; each session of
length n expands into n-1 (prefix, next-poi) instances.  Per user, the
chronologically first ceil(fraction * N) instances form the support set
and the remainder the query set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .records import CheckinRecord, DataError, Trajectory, day_index


@dataclass(frozen=True, slots=True)
class Instance:
    """One training/evaluation example: a trajectory prefix and its target."""

    prefix: tuple[CheckinRecord, ...]
    target: CheckinRecord

    @property
    def next_poi(self) -> int:
        return self.target.poi


@dataclass
class MetaTask:
    """One user's task: support/query instances plus diversity statistics.

    `support_records` is the multiset of check-ins underlying the support
    period; evaluation-time entropy must be computed from it alone.
    """

    user: int
    support: list[Instance]
    query: list[Instance]
    support_records: list[CheckinRecord]
    entropy: float = 0.0
    inner_rate: float | None = None


@dataclass
class SplitStats:
    sessions: int = 0
    dropped_short: int = 0
    excluded_users: int = 0


def split_sessions(
    records: list[CheckinRecord],
    local_time: bool = False,
    stats: SplitStats | None = None,
) -> list[Trajectory]:
    """Split per-user record streams into calendar-day trajectories.

    Sessions with fewer than 2 check-ins are dropped and counted in
    `stats.dropped_short`.  Records must be time-sorted within each user.
    """
    stats = stats if stats is not None else SplitStats()
    out: list[Trajectory] = []
    i, n = 0, len(records)
    while i < n:
        user = records[i].user
        j = i
        last_ts = None
        while j < n and records[j].user == user:
            if last_ts is not None and records[j].timestamp < last_ts:
                raise DataError(f"records not time-sorted for user {user}")
            last_ts = records[j].timestamp
            j += 1
        k = i
        while k < j:
            day = day_index(records[k].timestamp, records[k].tz_offset_minutes if local_time else 0)
            m = k
            while m < j and day_index(
                records[m].timestamp, records[m].tz_offset_minutes if local_time else 0
            ) == day:
                m += 1
            if m - k >= 2:
                out.append(Trajectory(user=user, checkins=tuple(records[k:m])))
                stats.sessions += 1
            else:
                stats.dropped_short += 1
            k = m
        i = j
    return out


def expand_instances(traj: Trajectory) -> list[Instance]:
    """All (prefix, next) pairs of a session; prefixes stay inside it."""
    return [
        Instance(prefix=traj.checkins[: i + 1], target=traj.checkins[i + 1])
        for i in range(len(traj.checkins) - 1)
    ]


def category_entropy(records: list[CheckinRecord]) -> float:
    """Shannon entropy (nats) of the category distribution of `records`."""
    if not records:
        raise DataError("entropy of an empty record list is undefined")
    counts: dict[int, int] = {}
    for r in records:
        counts[r.category] = counts.get(r.category, 0) + 1
    total = len(records)
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log(p)
    return max(0.0, h)


def build_meta_tasks(
    trajectories: list[Trajectory],
    support_fraction: float = 0.8,
    stats: SplitStats | None = None,
) -> list[MetaTask]:
    """Group instances per user into chronologically split meta-tasks.

    Users whose query set would be empty (including users with fewer than
    2 instances) are excluded and counted in `stats.excluded_users`.
    Task entropy is computed over all of the user's session check-ins,
    which is the training-time view of behavioral diversity.
    """
    if not 0.0 < support_fraction < 1.0:
        raise DataError(f"support_fraction must be in (0, 1), got {support_fraction}")
    stats = stats if stats is not None else SplitStats()

    per_user: dict[int, list[Trajectory]] = {}
    for t in trajectories:
        per_user.setdefault(t.user, []).append(t)

    tasks: list[MetaTask] = []
    for user in sorted(per_user):
        trajs = sorted(per_user[user], key=lambda t: t.checkins[0].timestamp)
        instances: list[Instance] = []
        for t in trajs:
            instances.extend(expand_instances(t))
        n = len(instances)
        n_support = math.ceil(support_fraction * n)
        if n < 2 or n_support >= n:
            stats.excluded_users += 1
            continue
        support = instances[:n_support]
        query = instances[n_support:]

        # Records covered by the support period: whole sessions fully
        # consumed by support, plus the covered head of the boundary one.
        support_records: list[CheckinRecord] = []
        remaining = n_support
        for t in trajs:
            n_inst = len(t.checkins) - 1
            if remaining >= n_inst:
                support_records.extend(t.checkins)
                remaining -= n_inst
            else:
                if remaining > 0:
                    support_records.extend(t.checkins[: remaining + 1])
                break

        all_records = [r for t in trajs for r in t.checkins]
        tasks.append(
            MetaTask(
                user=user,
                support=support,
                query=query,
                support_records=support_records,
                entropy=category_entropy(all_records),
            )
        )
    return tasks
