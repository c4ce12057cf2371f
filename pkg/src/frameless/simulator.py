"""Monte Carlo protocol engine.

Simulates frameless ALOHA frames slot by slot: every un-retrieved user
transmits per slot with its group probability, a transmission lands in
the bucket of every BS the group reaches (atomically), and joint SIC runs
to fixpoint after each slot. Retrieval removes a user's replicas from all
buckets at all BSs, past and future, which is realized by never adding
future replicas of retrieved users. A framed baseline where users draw a
replica count from a degree distribution is included for comparisons.

Buckets keep only a member count and the sum of member ids, so a
singleton's occupant is read off directly and removal is O(1) (the usual
peeling-decoder trick).

RNG: numpy Philox (counter-based, philox4x64-10). Trial seeds derive from
the master seed via SeedSequence(entropy=seed, spawn_key=(trial,)), so
results do not depend on worker count.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .topology import NetworkTopology, TargetDegreeVector

RNG_ID = "numpy-philox4x64-10"


def _make_rng(seed) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class FrameResult:
    """Outcome of one simulated frame."""

    t: int
    retrieved_per_group: np.ndarray
    n_users: int
    throughput: float
    terminated_by: str

    @property
    def n_ret(self) -> int:
        return int(self.retrieved_per_group.sum())

    def plr_groups(self, topology: NetworkTopology) -> np.ndarray:
        counts = np.array([g.num_users for g in topology.groups], dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            plr = 1.0 - self.retrieved_per_group / counts
        return np.where(counts > 0, plr, 1.0)

    @property
    def plr(self) -> float:
        return 1.0 - self.n_ret / self.n_users


class _Peeler:
    """Bucket state shared by all simulation modes."""

    def __init__(self, topology: NetworkTopology):
        self.m = topology.num_bs
        self.group_of = np.repeat(
            np.arange(topology.num_groups),
            [g.num_users for g in topology.groups],
        )
        self.bs0 = [tuple(j - 1 for j in g.bs_set) for g in topology.groups]
        n = len(self.group_of)
        self.alive = np.ones(n, dtype=bool)
        self.user_buckets: list[list[int]] = [[] for _ in range(n)]
        self.count: list[int] = []
        self.idsum: list[int] = []
        self.retrieved_per_group = np.zeros(topology.num_groups, dtype=np.int64)
        self.n_ret = 0
        self.retrieved_log: list[int] = []
        self.queue: deque[int] = deque()

    def open_slot(self) -> int:
        base = len(self.count)
        self.count.extend([0] * self.m)
        self.idsum.extend([0] * self.m)
        return base

    def add(self, uid: int, base: int):
        for b0 in self.bs0[self.group_of[uid]]:
            b = base + b0
            self.count[b] += 1
            self.idsum[b] += uid
            self.user_buckets[uid].append(b)

    def seal_slot(self, base: int):
        for b in range(base, base + self.m):
            if self.count[b] == 1:
                self.queue.append(b)
        self._drain()

    def _drain(self):
        count, idsum, queue = self.count, self.idsum, self.queue
        while queue:
            b = queue.popleft()
            if count[b] != 1:
                continue
            uid = idsum[b]
            if not self.alive[uid]:
                continue
            self.alive[uid] = False
            self.retrieved_per_group[self.group_of[uid]] += 1
            self.n_ret += 1
            self.retrieved_log.append(uid)
            for ob in self.user_buckets[uid]:
                count[ob] -= 1
                idsum[ob] -= uid
                if count[ob] == 1:
                    queue.append(ob)
            self.user_buckets[uid].clear()


class _AliveSet:
    """Per-group alive-user pools supporting O(1) removal and k-sampling."""

    def __init__(self, topology: NetworkTopology):
        self.members = []
        self.pos = {}
        start = 0
        for g in topology.groups:
            ids = list(range(start, start + g.num_users))
            self.members.append(ids)
            for k, uid in enumerate(ids):
                self.pos[uid] = k
            start += g.num_users
        self.sizes = np.array([g.num_users for g in topology.groups], dtype=np.int64)

    def sample(self, group: int, k: int, rng: np.random.Generator) -> list[int]:
        pool = self.members[group]
        n = len(pool)
        if k >= n:
            return list(pool)
        picked = []
        taken = set()
        while len(picked) < k:
            j = int(rng.integers(n))
            if j not in taken:
                taken.add(j)
                picked.append(pool[j])
        return picked

    def remove(self, uid: int, group: int):
        pool = self.members[group]
        j = self.pos.pop(uid)
        last = pool.pop()
        if last != uid:
            pool[j] = last
            self.pos[last] = j
        self.sizes[group] -= 1


def _frameless_run(
    topology: NetworkTopology,
    degrees,
    seed,
    *,
    threshold: int | None,
    slot_cap: int,
) -> FrameResult:
    if not isinstance(degrees, TargetDegreeVector):
        degrees = TargetDegreeVector(tuple(degrees))
    p = np.array(degrees.probabilities(topology))
    rng = _make_rng(seed)
    peel = _Peeler(topology)
    alive = _AliveSet(topology)
    n_users = topology.num_users
    t = 0
    consumed = 0
    while t < slot_cap:
        base = peel.open_slot()
        arrivals = rng.binomial(alive.sizes, p)
        for g in np.flatnonzero(arrivals):
            for uid in alive.sample(int(g), int(arrivals[g]), rng):
                peel.add(uid, base)
        peel.seal_slot(base)
        t += 1
        # Retrieved users stop being sampled: their remaining replicas are
        # known to the BSs and pre-subtracted.
        log = peel.retrieved_log
        while consumed < len(log):
            uid = log[consumed]
            alive.remove(uid, int(peel.group_of[uid]))
            consumed += 1
        if threshold is not None and peel.n_ret >= threshold:
            return FrameResult(
                t=t,
                retrieved_per_group=peel.retrieved_per_group,
                n_users=n_users,
                throughput=peel.n_ret / t,
                terminated_by="threshold",
            )
    return FrameResult(
        t=t,
        retrieved_per_group=peel.retrieved_per_group,
        n_users=n_users,
        throughput=peel.n_ret / t,
        terminated_by="slot_cap" if threshold is not None else "fixed",
    )


def run_frame(
    topology: NetworkTopology,
    degrees,
    alpha: float,
    seed,
    slot_cap: int | None = None,
) -> FrameResult:
    """Frameless frame: terminate once floor(alpha*N) packets are retrieved
    (or at slot_cap, flagged in the result)."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    n = topology.num_users
    threshold = math.floor(alpha * n)
    if threshold < 1:
        raise ValueError(f"floor(alpha*N) = {threshold}; nothing to wait for")
    if slot_cap is None:
        slot_cap = math.ceil(10 * n / topology.num_bs)
    if slot_cap < 1:
        raise ValueError("slot_cap must be >= 1")
    return _frameless_run(
        topology, degrees, seed, threshold=threshold, slot_cap=slot_cap
    )


def run_fixed_frame(topology: NetworkTopology, degrees, t_slots: int, seed) -> FrameResult:
    """Frameless transmission over exactly t_slots, no threshold stop."""
    if t_slots < 1:
        raise ValueError(f"frame length must be >= 1, got {t_slots}")
    return _frameless_run(
        topology, degrees, seed, threshold=None, slot_cap=t_slots
    )


def run_spatio_temporal(
    topology: NetworkTopology, replica_dist: dict, t_slots: int, seed
) -> FrameResult:
    """Framed baseline: each user draws a replica count from replica_dist
    ({degree: probability}) and places that many copies in distinct slots."""
    if t_slots < 1:
        raise ValueError(f"frame length must be >= 1, got {t_slots}")
    degs = sorted(replica_dist)
    probs = np.array([replica_dist[s] for s in degs], dtype=float)
    if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("replica distribution must be a probability mass")
    if degs and (degs[0] < 1 or degs[-1] > t_slots):
        raise ValueError(f"replica degrees must lie in 1..T={t_slots}")
    rng = _make_rng(seed)
    peel = _Peeler(topology)
    n_users = topology.num_users
    bases = [peel.open_slot() for _ in range(t_slots)]
    draws = rng.choice(len(degs), size=n_users, p=probs)
    for uid in range(n_users):
        s = degs[int(draws[uid])]
        slots = set()
        while len(slots) < s:
            slots.add(int(rng.integers(t_slots)))
        for slot in sorted(slots):
            peel.add(uid, bases[slot])
    for b in range(len(peel.count)):
        if peel.count[b] == 1:
            peel.queue.append(b)
    peel._drain()
    return FrameResult(
        t=t_slots,
        retrieved_per_group=peel.retrieved_per_group,
        n_users=n_users,
        throughput=peel.n_ret / t_slots,
        terminated_by="fixed",
    )


@dataclass(frozen=True)
class SimulationSpec:
    """What to simulate, sufficient to derive every trial deterministically."""

    topology: NetworkTopology
    mode: str = "frameless"  # frameless | fixed | spatio
    degrees: tuple[float, ...] | None = None
    alpha: float = 0.8
    t_slots: int | None = None
    slot_cap: int | None = None
    replica_dist: tuple[tuple[int, float], ...] | None = None
    master_seed: int = 0

    def trial_seed(self, trial: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(trial,)
        )

    def run_trial(self, trial: int) -> FrameResult:
        seed = self.trial_seed(trial)
        if self.mode == "frameless":
            return run_frame(
                self.topology, self.degrees, self.alpha, seed, self.slot_cap
            )
        if self.mode == "fixed":
            return run_fixed_frame(self.topology, self.degrees, self.t_slots, seed)
        if self.mode == "spatio":
            return run_spatio_temporal(
                self.topology, dict(self.replica_dist), self.t_slots, seed
            )
        raise ValueError(f"unknown simulation mode {self.mode!r}")


def _trial_task(args):
    spec, trial = args
    return spec.run_trial(trial)


@dataclass
class MonteCarloResult:
    spec: SimulationSpec
    trials: int
    t: np.ndarray
    n_ret: np.ndarray
    throughput: np.ndarray
    plr_groups: np.ndarray
    terminated_by: list[str] = field(repr=False, default_factory=list)

    @property
    def mean_throughput(self) -> float:
        return math.fsum(self.throughput) / self.trials

    @property
    def stderr_throughput(self) -> float:
        if self.trials < 2:
            return 0.0
        return float(np.std(self.throughput, ddof=1) / math.sqrt(self.trials))

    @property
    def mean_plr(self) -> float:
        n = self.spec.topology.num_users
        return math.fsum(1.0 - self.n_ret / n) / self.trials

    @property
    def mean_plr_groups(self) -> np.ndarray:
        return self.plr_groups.mean(axis=0)

    @property
    def mean_t(self) -> float:
        return math.fsum(self.t) / self.trials

    def csv_header(self) -> str:
        n_groups = self.plr_groups.shape[1]
        cols = ",".join(f"plr_g{i + 1}" for i in range(n_groups))
        return f"trial,seed,T,n_ret,throughput,{cols}"

    def csv_rows(self):
        for k in range(self.trials):
            seed = int(self.spec.trial_seed(k).generate_state(1, np.uint64)[0])
            plrs = ",".join(repr(float(v)) for v in self.plr_groups[k])
            yield (
                f"{k},{seed},{int(self.t[k])},{int(self.n_ret[k])},"
                f"{float(self.throughput[k])!r},{plrs}"
            )

    def summary(self) -> dict:
        return {
            "trials": self.trials,
            "rng": RNG_ID,
            "master_seed": self.spec.master_seed,
            "mean_throughput": self.mean_throughput,
            "stderr_throughput": self.stderr_throughput,
            "mean_plr": self.mean_plr,
            "mean_plr_groups": [float(v) for v in self.mean_plr_groups],
            "mean_t": self.mean_t,
            "terminated_by": {
                kind: self.terminated_by.count(kind)
                for kind in sorted(set(self.terminated_by))
            },
        }


def monte_carlo(
    spec: SimulationSpec, trials: int, workers: int = 1
) -> MonteCarloResult:
    """Run independent trials; aggregation order is fixed by trial index,
    so the result is identical for any worker count."""
    if trials < 1:
        raise ValueError("need at least one trial")
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    _trial_task,
                    ((spec, k) for k in range(trials)),
                    chunksize=max(1, trials // (4 * workers)),
                )
            )
    else:
        results = [spec.run_trial(k) for k in range(trials)]
    return MonteCarloResult(
        spec=spec,
        trials=trials,
        t=np.array([r.t for r in results], dtype=np.int64),
        n_ret=np.array([r.n_ret for r in results], dtype=np.int64),
        throughput=np.array([r.throughput for r in results]),
        plr_groups=np.array([r.plr_groups(spec.topology) for r in results]),
        terminated_by=[r.terminated_by for r in results],
    )
