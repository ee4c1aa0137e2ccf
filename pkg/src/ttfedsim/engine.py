"""Run orchestration: tier construction and the four training loops.

The time-triggered loop advances in fixed rounds of delta_t seconds and
merges due tiers at each boundary. The three baselines run on a
continuous clock: synchronous rounds (max over users), a per-arrival
event queue, or per-tier synchronous rounds with asynchronous merges.
Schedule timing uses nominal link delays (mean fading, equal bandwidth
shares) so cadences are deterministic; realized fading only decides
whether an upload survives. All randomness comes from per-purpose
sub-streams of the master seed, so trajectories are reproducible
bit-for-bit regardless of execution order.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import allocator, wireless
from .aggregation import (
    TierSchedule,
    fedavg_aggregate,
    fedasync_aggregate,
    fedat_aggregate,
    ttfed_global,
    ttfed_intra_tier,
    ttfed_tier_weights,
)
from .config import ScenarioConfig
from .datagen import (
    LabeledDataset,
    PartitionSpec,
    load_idx,
    partition,
    synthetic_digits,
    training_subset,
)
from .learner import MlpArch, evaluate, init_params, local_update
from .streams import (
    TAG_CHANNEL,
    TAG_CPU,
    TAG_INIT,
    TAG_PARTITION,
    TAG_PLACEMENT,
    TAG_TRAIN,
    derive_seed,
    substream,
)
from .wireless import ChannelParams, ComputeProfile

_TIME_EPS = 1e-9


@dataclass
class EvalPoint:
    time_s: float
    round: int
    accuracy: float
    loss: float
    uplink_msgs: int
    downlink_broadcasts: int
    downlink_unicasts: int
    success_users: int
    failed_users: int


@dataclass
class RunMetrics:
    algorithm: str
    num_tiers: int
    delta_t: float
    round_time: float  # T, slowest user's nominal cycle
    evals: list[EvalPoint] = field(default_factory=list)
    uplink_msgs: int = 0
    downlink_broadcasts: int = 0
    downlink_unicasts: int = 0
    success_total: int = 0
    failed_total: int = 0
    round_success: list[int] = field(default_factory=list)
    round_failed: list[int] = field(default_factory=list)
    zero_weight_uploads: int = 0
    substituted_samples: int = 0

    def record(self, time_s: float, round_idx: int, accuracy: float, loss: float) -> None:
        self.evals.append(
            EvalPoint(
                time_s=time_s,
                round=round_idx,
                accuracy=accuracy,
                loss=loss,
                uplink_msgs=self.uplink_msgs,
                downlink_broadcasts=self.downlink_broadcasts,
                downlink_unicasts=self.downlink_unicasts,
                success_users=self.success_total,
                failed_users=self.failed_total,
            )
        )

    @property
    def final_accuracy(self) -> float:
        return self.evals[-1].accuracy if self.evals else float("nan")

    def first_reaching(self, target: float) -> EvalPoint | None:
        for point in self.evals:
            if point.accuracy >= target:
                return point
        return None


def count_comm(
    metrics: RunMetrics, targets: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8)
) -> dict[float, dict | None]:
    """Cumulative message counts at the first evaluation meeting each target.

    A broadcast counts once regardless of audience size. Unreached targets
    map to None.
    """
    summary: dict[float, dict | None] = {}
    for target in targets:
        point = metrics.first_reaching(target)
        if point is None:
            summary[target] = None
        else:
            summary[target] = {
                "time_s": point.time_s,
                "round": point.round,
                "messages": point.uplink_msgs
                + point.downlink_broadcasts
                + point.downlink_unicasts,
            }
    return summary


@dataclass
class Scenario:
    """Everything a training loop needs, fully materialized."""

    config: ScenarioConfig
    params: ChannelParams
    arch: MlpArch
    distances: np.ndarray  # per user, meters
    profiles: list[ComputeProfile]
    shard_images: list[np.ndarray]
    shard_labels: list[np.ndarray]
    data_sizes: np.ndarray  # per user, samples
    test_images: np.ndarray
    test_labels: np.ndarray
    schedule: TierSchedule
    tau_cp: np.ndarray  # per user, seconds
    nominal_cycle: np.ndarray  # per user t_u at equal-share bandwidth
    substituted_samples: int

    @property
    def budget_s(self) -> float:
        cfg = self.config
        if cfg.time_budget_s is not None:
            return cfg.time_budget_s
        return cfg.rounds * self.schedule.delta_t


def place_users(num_users: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Distances of users placed uniformly over a disk (angle irrelevant)."""
    if num_users < 1:
        raise ValueError(f"num_users must be >= 1, got {num_users}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    return radius * np.sqrt(rng.random(num_users))


def _ceil_with_boundary(x: float) -> int:
    """ceil(x), except values within 1e-9 relative of an integer round down.

    A cycle that fits an interval exactly belongs to that interval, and
    float noise must not bump it into the next tier.
    """
    nearest = round(x)
    if nearest >= 1 and abs(x - nearest) <= 1e-9 * max(1.0, abs(x)):
        return int(nearest)
    return int(math.ceil(x))


def build_tiers(
    profiles: list[ComputeProfile],
    distances: np.ndarray,
    params: ChannelParams,
    delta_t_s: float | None = None,
    delta_t_frac: float | None = None,
) -> TierSchedule:
    """Group users by how many global rounds one local cycle needs.

    The nominal cycle t_u = compute time + upload time at equal-share
    bandwidth B/U under mean fading. T = max t_u; the interval is either
    given in seconds or as a fraction of T; user u joins tier
    ceil(t_u / delta_t) and M = ceil(T / delta_t).
    """
    num_users = len(profiles)
    if num_users == 0:
        raise ValueError("no users")
    share = params.total_bandwidth / num_users
    cycle = np.array(
        [
            wireless.compute_delay(p)
            + wireless.comm_delay(
                share, wireless.path_loss(float(d), params.path_loss_exponent), params
            )
            for p, d in zip(profiles, distances)
        ]
    )
    slowest = float(cycle.max())
    if delta_t_s is not None:
        delta = delta_t_s
    elif delta_t_frac is not None:
        delta = delta_t_frac * slowest
    else:
        raise ValueError("either delta_t_s or delta_t_frac is required")
    num_tiers = _ceil_with_boundary(slowest / delta)
    tier_of = {
        u: min(num_tiers, _ceil_with_boundary(float(cycle[u]) / delta))
        for u in range(num_users)
    }
    data_per_tier: dict[int, float] = {m: 0.0 for m in range(1, num_tiers + 1)}
    for u, p in enumerate(profiles):
        data_per_tier[tier_of[u]] += p.dataset_size
    return TierSchedule(
        num_tiers=num_tiers,
        tier_of=tier_of,
        data_per_tier=data_per_tier,
        delta_t=delta,
        round_time=slowest,
    )


def _load_datasets(cfg: ScenarioConfig) -> tuple[LabeledDataset, LabeledDataset]:
    if cfg.data_source == "idx":
        train_full = load_idx(cfg.train_images_path, cfg.train_labels_path)
        train = training_subset(train_full, cfg.train_per_class)
        test = load_idx(cfg.test_images_path, cfg.test_labels_path)
        return train, test
    return synthetic_digits(cfg.train_per_class, cfg.test_per_class, cfg.data_seed)


def setup_scenario(
    cfg: ScenarioConfig, data: tuple[LabeledDataset, LabeledDataset] | None = None
) -> Scenario:
    """Materialize users, shards, channel and tier structure for a config."""
    cfg.validate()
    train, test = data if data is not None else _load_datasets(cfg)
    arch = MlpArch(in_dim=train.images.shape[1], hidden=cfg.hidden_width, out_dim=10)
    params = cfg.channel_params(model_bits=float(arch.param_count * cfg.bits_per_param))
    distances = place_users(cfg.users, cfg.radius_m, substream(cfg.seed, TAG_PLACEMENT))
    shards = partition(
        train,
        PartitionSpec(
            num_users=cfg.users,
            zipf_eta=cfg.zipf_eta,
            dirichlet_theta=cfg.dirichlet_theta,
            seed=derive_seed(cfg.seed, TAG_PARTITION),
        ),
    )
    if cfg.cpu_freq_max_hz is not None:
        freqs = substream(cfg.seed, TAG_CPU).uniform(
            cfg.cpu_freq_hz, cfg.cpu_freq_max_hz, cfg.users
        )
    else:
        freqs = np.full(cfg.users, cfg.cpu_freq_hz)
    profiles = [
        ComputeProfile(
            cpu_freq=float(freqs[u]),
            cycles_per_sample=cfg.cycles_per_sample,
            local_epochs=cfg.local_epochs,
            dataset_size=shards[u].size,
        )
        for u in range(cfg.users)
    ]
    schedule = build_tiers(
        profiles, distances, params, delta_t_s=cfg.delta_t_s, delta_t_frac=cfg.delta_t_frac
    )
    share = params.total_bandwidth / cfg.users
    nominal_cycle = np.array(
        [
            wireless.compute_delay(profiles[u])
            + wireless.comm_delay(
                share,
                wireless.path_loss(float(distances[u]), params.path_loss_exponent),
                params,
            )
            for u in range(cfg.users)
        ]
    )
    return Scenario(
        config=cfg,
        params=params,
        arch=arch,
        distances=distances,
        profiles=profiles,
        shard_images=[train.images[s.indices] for s in shards],
        shard_labels=[train.labels[s.indices] for s in shards],
        data_sizes=np.array([s.size for s in shards], dtype=np.float64),
        test_images=test.images,
        test_labels=test.labels,
        schedule=schedule,
        tau_cp=np.array([wireless.compute_delay(p) for p in profiles]),
        nominal_cycle=nominal_cycle,
        substituted_samples=sum(s.substituted for s in shards),
    )


def _eval_stride(expected_events: int, cfg: ScenarioConfig) -> int:
    if expected_events <= 0:
        return 1
    thin = math.ceil(expected_events / cfg.max_evals)
    return max(cfg.eval_every, thin, 1)


def _train_user(sc: Scenario, u: int, w_src: np.ndarray, dispatch_idx: int) -> np.ndarray:
    rng = substream(sc.config.seed, TAG_TRAIN, u, dispatch_idx)
    return local_update(
        w_src, sc.shard_images[u], sc.shard_labels[u], sc.config.train_config(), rng, sc.arch
    )


def _fading(sc: Scenario, u: int, round_idx: int) -> float:
    return wireless.draw_fading(substream(sc.config.seed, TAG_CHANNEL, u, round_idx))


def run_ttfed(
    cfg: ScenarioConfig,
    scenario: Scenario | None = None,
    trace: list[np.ndarray] | None = None,
) -> RunMetrics:
    """Fixed-interval loop: plan, draw outcomes and merge every delta_t."""
    sc = scenario if scenario is not None else setup_scenario(cfg)
    schedule, params = sc.schedule, sc.params
    num_tiers = schedule.num_tiers
    delta = schedule.delta_t
    rounds = int(math.floor(sc.budget_s / delta + _TIME_EPS))
    metrics = RunMetrics("ttfed", num_tiers, delta, schedule.round_time)
    metrics.substituted_samples = sc.substituted_samples
    stride = _eval_stride(rounds, cfg)

    w = init_params(derive_seed(cfg.seed, TAG_INIT), sc.arch)
    history: dict[int, np.ndarray] = {0: w}
    acc, loss = evaluate(w, sc.test_images, sc.test_labels, sc.arch)
    metrics.record(0.0, 0, acc, loss)

    equal_weight = cfg.policy == "equal_weight"
    for k in range(1, rounds + 1):
        metrics.downlink_broadcasts += 1  # dispatch to tiers with (k-1) % m == 0
        weights = (
            np.full(num_tiers, 1.0 / num_tiers) if equal_weight else ttfed_tier_weights(k, num_tiers)
        )
        due = schedule.due_tiers(k)
        fading = {}
        qualified = []
        for m in due:
            for u in schedule.users_in(m):
                fading[u] = _fading(sc, u, k)
                gain = wireless.path_loss(float(sc.distances[u]), params.path_loss_exponent)
                if cfg.scheduling_fading == "realization":
                    gain *= fading[u]
                q = allocator.qualify(
                    user_id=u,
                    tier=m,
                    data_size=float(sc.data_sizes[u]),
                    alpha=float(weights[m - 1]),
                    slack=m * delta - float(sc.tau_cp[u]),
                    gain_power=gain,
                    distance=float(sc.distances[u]),
                    params=params,
                )
                if q is not None:
                    qualified.append(q)
        if cfg.policy == "equal_bandwidth":
            plan = allocator.equal_share_plan(qualified, params.total_bandwidth, params)
        else:
            plan = allocator.select_users(qualified, params.total_bandwidth, cfg.greedy_skip)

        uploads: dict[int, list[tuple[float, np.ndarray]]] = {m: [] for m in due}
        n_ok = n_fail = 0
        for u in plan.selected:  # ascending user id
            metrics.uplink_msgs += 1
            ok = wireless.success_given_fading(
                fading[u], plan.bandwidth[u], float(sc.distances[u]), params
            )
            if ok:
                m = schedule.tier_of[u]
                local = _train_user(sc, u, history[k - m], k - m)
                uploads[m].append((float(sc.data_sizes[u]), local))
                n_ok += 1
            else:
                n_fail += 1
        metrics.success_total += n_ok
        metrics.failed_total += n_fail
        metrics.round_success.append(n_ok)
        metrics.round_failed.append(n_fail)

        intra = {m: ttfed_intra_tier(lst) for m, lst in uploads.items() if lst}
        for m in due:
            if weights[m - 1] == 0.0 and uploads[m]:
                metrics.zero_weight_uploads += len(uploads[m])
        w = ttfed_global(k, num_tiers, intra, w_prev=w, weights=weights)
        history[k] = w
        for old in [r for r in history if r < k + 1 - num_tiers]:
            del history[old]
        if trace is not None:
            trace.append(w.copy())
        if k % stride == 0 or k == rounds:
            acc, loss = evaluate(w, sc.test_images, sc.test_labels, sc.arch)
            metrics.record(k * delta, k, acc, loss)
    return metrics


def run_fedavg(
    cfg: ScenarioConfig,
    scenario: Scenario | None = None,
    trace: list[np.ndarray] | None = None,
) -> RunMetrics:
    """Synchronous loop: every round waits for the slowest user."""
    sc = scenario if scenario is not None else setup_scenario(cfg)
    params = sc.params
    share = params.total_bandwidth / cfg.users
    round_len = float(sc.nominal_cycle.max())
    rounds = int(math.floor(sc.budget_s / round_len + _TIME_EPS))
    metrics = RunMetrics("fedavg", sc.schedule.num_tiers, sc.schedule.delta_t, round_len)
    metrics.substituted_samples = sc.substituted_samples
    stride = _eval_stride(rounds, cfg)

    w = init_params(derive_seed(cfg.seed, TAG_INIT), sc.arch)
    acc, loss = evaluate(w, sc.test_images, sc.test_labels, sc.arch)
    metrics.record(0.0, 0, acc, loss)

    for j in range(1, rounds + 1):
        metrics.downlink_broadcasts += 1
        uploads = []
        n_ok = n_fail = 0
        for u in range(cfg.users):
            metrics.uplink_msgs += 1
            ok = wireless.success_given_fading(
                _fading(sc, u, j), share, float(sc.distances[u]), params
            )
            if ok:
                local = _train_user(sc, u, w, j - 1)
                uploads.append((float(sc.data_sizes[u]), local))
                n_ok += 1
            else:
                n_fail += 1
        metrics.success_total += n_ok
        metrics.failed_total += n_fail
        metrics.round_success.append(n_ok)
        metrics.round_failed.append(n_fail)
        if uploads:
            w = fedavg_aggregate(uploads)
        if trace is not None:
            trace.append(w.copy())
        if j % stride == 0 or j == rounds:
            acc, loss = evaluate(w, sc.test_images, sc.test_labels, sc.arch)
            metrics.record(j * round_len, j, acc, loss)
    return metrics


def run_fedasync(cfg: ScenarioConfig, scenario: Scenario | None = None) -> RunMetrics:
    """Per-arrival loop: each upload mixes straight into the global model."""
    sc = scenario if scenario is not None else setup_scenario(cfg)
    params = sc.params
    share = params.total_bandwidth / cfg.users
    budget = sc.budget_s
    cycle = sc.nominal_cycle
    expected = int(sum(math.floor(budget / t + _TIME_EPS) for t in cycle))
    metrics = RunMetrics("fedasync", sc.schedule.num_tiers, sc.schedule.delta_t, sc.schedule.round_time)
    metrics.substituted_samples = sc.substituted_samples
    stride = _eval_stride(expected, cfg)

    w = init_params(derive_seed(cfg.seed, TAG_INIT), sc.arch)
    acc, loss = evaluate(w, sc.test_images, sc.test_labels, sc.arch)
    metrics.record(0.0, 0, acc, loss)
    metrics.downlink_broadcasts += 1  # initial model distribution

    dispatched = [w] * cfg.users
    heap = [(float(cycle[u]), u, 1) for u in range(cfg.users)]
    heapq.heapify(heap)
    arrivals = 0
    last_time = 0.0
    recorded_at = 0
    while heap and heap[0][0] <= budget + _TIME_EPS:
        t, u, c = heapq.heappop(heap)
        arrivals += 1
        last_time = t
        metrics.uplink_msgs += 1
        ok = wireless.success_given_fading(
            _fading(sc, u, c), share, float(sc.distances[u]), params
        )
        if ok:
            local = _train_user(sc, u, dispatched[u], c - 1)
            w = fedasync_aggregate(w, local, cfg.psi)
            metrics.success_total += 1
            metrics.round_success.append(1)
            metrics.round_failed.append(0)
        else:
            metrics.failed_total += 1
            metrics.round_success.append(0)
            metrics.round_failed.append(1)
        metrics.downlink_unicasts += 1  # server answers with the current global
        dispatched[u] = w
        heapq.heappush(heap, (t + float(cycle[u]), u, c + 1))
        if arrivals % stride == 0:
            acc, loss = evaluate(w, sc.test_images, sc.test_labels, sc.arch)
            metrics.record(t, arrivals, acc, loss)
            recorded_at = arrivals
    if arrivals and recorded_at != arrivals:
        acc, loss = evaluate(w, sc.test_images, sc.test_labels, sc.arch)
        metrics.record(last_time, arrivals, acc, loss)
    return metrics


def run_fedat(cfg: ScenarioConfig, scenario: Scenario | None = None) -> RunMetrics:
    """Tiered loop: synchronous rounds inside each tier, async global merges.

    The server holds one model per tier plus the global one. Tier weights
    swap the cumulative update counts (the busiest tier's count goes to
    the slowest tier), restricted to tiers that actually have users.
    """
    sc = scenario if scenario is not None else setup_scenario(cfg)
    params = sc.params
    schedule = sc.schedule
    share = params.total_bandwidth / cfg.users
    budget = sc.budget_s
    active = [m for m in range(1, schedule.num_tiers + 1) if schedule.users_in(m)]
    tier_users = {m: schedule.users_in(m) for m in active}
    tier_len = {m: max(float(sc.nominal_cycle[u]) for u in tier_users[m]) for m in active}
    expected = int(sum(math.floor(budget / tier_len[m] + _TIME_EPS) for m in active))
    metrics = RunMetrics("fedat", schedule.num_tiers, schedule.delta_t, schedule.round_time)
    metrics.substituted_samples = sc.substituted_samples
    stride = _eval_stride(expected, cfg)

    w0 = init_params(derive_seed(cfg.seed, TAG_INIT), sc.arch)
    w = w0
    acc, loss = evaluate(w, sc.test_images, sc.test_labels, sc.arch)
    metrics.record(0.0, 0, acc, loss)
    metrics.downlink_broadcasts += 1  # initial model distribution

    tier_models = {m: w0 for m in active}
    dispatched = {m: w0 for m in active}
    counts = {m: 0 for m in active}
    heap = [(tier_len[m], m, 1) for m in active]
    heapq.heapify(heap)
    merges = 0
    last_time = 0.0
    recorded_at = 0
    while heap and heap[0][0] <= budget + _TIME_EPS:
        t, m, c = heapq.heappop(heap)
        merges += 1
        last_time = t
        uploads = []
        n_ok = n_fail = 0
        for u in tier_users[m]:
            metrics.uplink_msgs += 1
            ok = wireless.success_given_fading(
                _fading(sc, u, c), share, float(sc.distances[u]), params
            )
            if ok:
                local = _train_user(sc, u, dispatched[m], c - 1)
                uploads.append((float(sc.data_sizes[u]), local))
                n_ok += 1
            else:
                n_fail += 1
        metrics.success_total += n_ok
        metrics.failed_total += n_fail
        metrics.round_success.append(n_ok)
        metrics.round_failed.append(n_fail)
        if uploads:
            tier_models[m] = fedavg_aggregate(uploads)
        counts[m] += 1
        total = sum(counts.values())
        weights = [counts[active[len(active) - 1 - i]] / total for i in range(len(active))]
        w = fedat_aggregate([tier_models[m2] for m2 in active], weights)
        dispatched[m] = w
        metrics.downlink_unicasts += len(tier_users[m])
        heapq.heappush(heap, (t + tier_len[m], m, c + 1))
        if merges % stride == 0:
            acc, loss = evaluate(w, sc.test_images, sc.test_labels, sc.arch)
            metrics.record(t, merges, acc, loss)
            recorded_at = merges
    if merges and recorded_at != merges:
        acc, loss = evaluate(w, sc.test_images, sc.test_labels, sc.arch)
        metrics.record(last_time, merges, acc, loss)
    return metrics


_RUNNERS = {
    "ttfed": run_ttfed,
    "fedavg": run_fedavg,
    "fedasync": run_fedasync,
    "fedat": run_fedat,
}


def run(cfg: ScenarioConfig, scenario: Scenario | None = None) -> RunMetrics:
    """Dispatch to the configured algorithm's loop.

    A pre-built scenario may be shared across algorithms for a fair
    comparison, but must come from a config identical in everything
    except the algorithm field.
    """
    try:
        runner = _RUNNERS[cfg.algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {cfg.algorithm!r}") from None
    return runner(cfg, scenario)
