"""Schedule-driven agent simulation of geo-social misinformation spread.

Agents follow a fixed multi-day routine over three day slots (morning,
midday, evening). Two agents are co-located when they occupy the same place
in the same slot of the same routine day. Misinformation spreads with an SI
process through co-location and through a social friendship network.

Each world owns a fixed set of tracked agents for each network (uniform node
sampling), so every episode of a world shares the same observed networks and
only the seeds and the spread differ.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dataset import write_dataset
from .diffusion import DiffusionSample, substream
from .graph import BridgeLinks, CrossNetwork, Network, bridge_transfer, structural_features, write_id_map

log = logging.getLogger(__name__)

PLACE_TYPES = ("work", "restaurant", "recreation")
SLOTS = 3  # morning, midday, evening
HOME = -1  # slot spent at home: no co-location contact


@dataclass(frozen=True)
class ScheduleConfig:
    agents_per_workplace: float = 4.0
    agents_per_restaurant: float = 2.5
    agents_per_recreation: float = 4.5
    favorite_restaurants: int = 3
    favorite_recreation: int = 2
    work_prob: float = 0.9          # attends the workplace on a given day
    meal_prob: float = 0.5          # eats at a favorite restaurant at midday
    recreation_prob: float = 0.3    # visits a favorite recreation site in the evening
    routine_days: int = 5
    social_mean_degree: float = 16.75
    local_friend_fraction: float = 0.6  # share of friendships formed at shared places
    p_coloc: float = 0.055
    p_social: float = 0.033
    observe_rate_coloc: float = 0.352
    observe_rate_social: float = 0.378

    def __post_init__(self):
        for key in ("work_prob", "meal_prob", "recreation_prob", "local_friend_fraction",
                    "p_coloc", "p_social", "observe_rate_coloc", "observe_rate_social"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{key} must lie in [0, 1], got {v}")
        for key in ("agents_per_workplace", "agents_per_restaurant", "agents_per_recreation"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be > 0")
        if self.favorite_restaurants < 1 or self.favorite_recreation < 1:
            raise ValueError("each agent needs at least one favorite restaurant and recreation site")
        if self.routine_days < 1:
            raise ValueError("routine_days must be >= 1")
        if self.social_mean_degree < 0:
            raise ValueError("social_mean_degree must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Agent:
    home: int
    workplace: int
    restaurants: tuple[int, ...]
    recreation: tuple[int, ...]
    friends: tuple[int, ...]


@dataclass(eq=False)
class World:
    """Agents and places stored column-wise; ``agent(i)`` gives a row view."""

    n_agents: int
    place_type: np.ndarray          # (n_places,) index into PLACE_TYPES
    home: np.ndarray                # (n,)
    workplace: np.ndarray           # (n,) place ids
    restaurants: np.ndarray         # (n, favorite_restaurants) place ids
    recreation: np.ndarray          # (n, favorite_recreation) place ids
    routine: np.ndarray             # (routine_days, SLOTS, n) place id or HOME
    social: Network
    config: ScheduleConfig
    rng_seed: int
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_places(self) -> int:
        return len(self.place_type)

    def agent(self, i: int) -> Agent:
        return Agent(int(self.home[i]), int(self.workplace[i]), tuple(self.restaurants[i].tolist()),
                     tuple(self.recreation[i].tolist()), tuple(self.social.neighbors(i).tolist()))

    def violations(self) -> list[str]:
        out = []
        n_pl = self.n_places
        for name, ids in (("workplace", self.workplace), ("restaurants", self.restaurants),
                          ("recreation", self.recreation)):
            if ids.size and (ids.min() < 0 or ids.max() >= n_pl):
                out.append(f"{name} references an unknown place")
        if self.workplace.size and np.any(self.place_type[self.workplace] != 0):
            out.append("an agent's workplace is not a work place")
        r = self.routine
        if r.size and (r.min() < HOME or r.max() >= n_pl):
            out.append("routine references an unknown place")
        a = self.social.adjacency
        if (a != a.T).nnz:
            out.append("friendship is not symmetric")
        out.extend(self.social.violations())
        return out

    @property
    def social_matrix(self) -> sp.csr_matrix:
        if "social" not in self._cache:
            a = self.social.adjacency
            self._cache["social"] = ((a + a.T) > 0).astype(np.float64).tocsr()
        return self._cache["social"]

    @property
    def complete_coloc(self) -> Network:
        if "coloc" not in self._cache:
            self._cache["coloc"] = _coloc_network(self.routine, self.n_agents)
        return self._cache["coloc"]

    def observed_ids(self, which: str, rate: float) -> np.ndarray:
        """Tracked agents of ``which`` ("coloc" or "social"); nested in ``rate``."""
        key = {"coloc": 1, "social": 2}[which]
        u = substream(self.rng_seed, 90, key).random(self.n_agents)
        return np.flatnonzero(u < rate)

    def observed_network(self, which: str, rate: float) -> tuple[Network, np.ndarray]:
        ck = ("obs", which, float(rate))
        if ck not in self._cache:
            full = self.complete_coloc if which == "coloc" else self.social
            ids = self.observed_ids(which, rate)
            self._cache[ck] = (induced_subgraph(full, ids, name=f"observed_{which}"), ids)
        return self._cache[ck]


@dataclass
class DayEvents:
    day: int
    newly_infected: np.ndarray      # agent ids
    coloc_exposures: int            # susceptible-infectious same-slot meetings
    social_exposures: int           # susceptible-infectious friendships


@dataclass
class Episode:
    ground_truth_seeds: np.ndarray
    spread_set: np.ndarray
    complete_coloc: Network
    observed_coloc: Network
    complete_social: Network
    observed_social: Network
    bridges: BridgeLinks
    day_log: list[np.ndarray]
    coloc_ids: np.ndarray           # observed co-location index -> agent id
    social_ids: np.ndarray          # observed social index -> agent id
    rng_seed: int = 0

    def violations(self) -> list[str]:
        out = []
        if not np.isin(self.ground_truth_seeds, self.spread_set).all():
            out.append("seeds are not a subset of the spread set")
        for obs, full, ids in ((self.observed_coloc, self.complete_coloc, self.coloc_ids),
                               (self.observed_social, self.complete_social, self.social_ids)):
            full_edges = full.edge_set()
            mapped = {(int(min(ids[u], ids[v])), int(max(ids[u], ids[v]))) for u, v in obs.edges}
            if not mapped <= full_edges:
                out.append(f"{obs.name} has edges missing from the complete network")
        src, tgt = self.bridges.source, self.bridges.target
        if np.any(self.coloc_ids[src] != self.social_ids[tgt]):
            out.append("a bridge links two different agents")
        return out


# ------------------------------------------------------------------ world


def induced_subgraph(net: Network, ids: np.ndarray, name: str = "") -> Network:
    """Subgraph on ``ids`` (sorted agent ids), relabelled to ``0..len(ids)-1``."""
    ids = np.asarray(ids, dtype=np.int64)
    index = np.full(net.num_nodes, -1, dtype=np.int64)
    index[ids] = np.arange(len(ids))
    e = net.edges
    if len(e):
        keep = (index[e[:, 0]] >= 0) & (index[e[:, 1]] >= 0)
        e = index[e[keep]]
    return Network(len(ids), e, directed=net.directed, name=name)


def _place_counts(n_agents: int, cfg: ScheduleConfig, n_places) -> tuple[int, int, int]:
    if n_places is None:
        counts = (n_agents / cfg.agents_per_workplace, n_agents / cfg.agents_per_restaurant,
                  n_agents / cfg.agents_per_recreation)
        return tuple(max(1, int(round(c))) for c in counts)
    if isinstance(n_places, int):
        weights = np.array([1 / cfg.agents_per_workplace, 1 / cfg.agents_per_restaurant,
                            1 / cfg.agents_per_recreation])
        if n_places < 3:
            raise ValueError(f"need at least one place of each type, got n_places={n_places}")
        counts = np.maximum(1, np.floor(n_places * weights / weights.sum()).astype(int))
        counts[0] += n_places - counts.sum()
        return tuple(int(c) for c in counts)
    counts = tuple(int(c) for c in n_places)
    if len(counts) != 3 or min(counts) < 1:
        raise ValueError(f"n_places must give a positive count per place type, got {n_places}")
    return counts


def _clique_pairs(groups: np.ndarray, members: np.ndarray) -> np.ndarray:
    """All unordered pairs of ``members`` sharing a value in ``groups``."""
    if members.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    order = np.argsort(groups, kind="stable")
    g, m = groups[order], members[order]
    starts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
    sizes = np.diff(np.r_[starts, len(g)])
    out = []
    for s in np.unique(sizes):
        if s < 2:
            continue
        st = starts[sizes == s]
        block = m[st[:, None] + np.arange(s)[None, :]]
        i, j = np.triu_indices(s, 1)
        out.append(np.stack([block[:, i].ravel(), block[:, j].ravel()], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=np.int64)


def _dedup_pairs(pairs: np.ndarray, n: int) -> np.ndarray:
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    keep = lo != hi
    codes = np.unique(lo[keep] * n + hi[keep])
    return np.stack([codes // n, codes % n], axis=1)


def _coloc_network(routine: np.ndarray, n: int) -> Network:
    pairs = []
    agents = np.arange(n)
    for day in range(routine.shape[0]):
        for slot in range(SLOTS):
            where = routine[day, slot]
            present = where != HOME
            pairs.append(_clique_pairs(where[present], agents[present]))
    return Network(n, _dedup_pairs(np.concatenate(pairs), n), name="complete_coloc")


def _social_network(n: int, workplace, restaurants, recreation, cfg: ScheduleConfig,
                    rng: np.random.Generator) -> Network:
    """Friendships at shared places (workplace or a favorite site) plus random long-range ties."""
    target = int(round(n * cfg.social_mean_degree / 2))
    if n < 2 or target == 0:
        return Network(n, np.zeros((0, 2), dtype=np.int64), name="complete_social")
    target = min(target, n * (n - 1) // 2)
    # place -> member list over all affiliations
    affil = np.concatenate([workplace[:, None], restaurants, recreation], axis=1)
    owner = np.repeat(np.arange(n), affil.shape[1])
    place = affil.ravel()
    order = np.argsort(place, kind="stable")
    place_sorted, owner_sorted = place[order], owner[order]
    first = np.searchsorted(place_sorted, place, side="left")
    count = np.searchsorted(place_sorted, place, side="right") - first
    edges = np.zeros((0, 2), dtype=np.int64)
    n_local = int(round(target * cfg.local_friend_fraction))
    for _ in range(50):
        have = len(edges)
        if have >= target:
            break
        need = target - have
        batch = int(need * 1.3) + 16
        local_share = max(0.0, min(1.0, (n_local - min(have, n_local)) / need))
        n_loc = int(round(batch * local_share))
        k = rng.integers(len(place), size=n_loc)
        partner = owner_sorted[first[k] + (rng.random(n_loc) * count[k]).astype(np.int64)]
        loc = np.stack([owner[k], partner], axis=1)
        rnd = rng.integers(n, size=(batch - n_loc, 2))
        cand = np.concatenate([edges, loc, rnd])
        merged = _dedup_pairs(cand, n)
        if len(merged) > target:
            # keep existing edges and a random subset of the new ones
            new = np.setdiff1d(merged[:, 0] * n + merged[:, 1], edges[:, 0] * n + edges[:, 1])
            new = rng.permutation(new)[:target - len(edges)]
            codes = np.sort(np.concatenate([edges[:, 0] * n + edges[:, 1], new]))
            merged = np.stack([codes // n, codes % n], axis=1)
        edges = merged
    return Network(n, edges, name="complete_social")


def init_world(n_agents: int = 15000, n_places=None, schedule_cfg: ScheduleConfig | None = None,
               rng_seed: int = 0) -> World:
    """Build a world.

    ``n_places`` is None (sizes from the per-place agent ratios), a total
    split across the three place types, or a ``(work, restaurant,
    recreation)`` triple.
    """
    cfg = schedule_cfg or ScheduleConfig()
    if n_agents < 1:
        raise ValueError(f"n_agents must be >= 1, got {n_agents}")
    n_work, n_rest, n_rec = _place_counts(n_agents, cfg, n_places)
    place_type = np.repeat(np.arange(3), [n_work, n_rest, n_rec])
    rng = substream(rng_seed, 80)
    n = n_agents
    home = np.arange(n)  # one household per agent; homes host no contacts
    workplace = rng.integers(n_work, size=n)
    restaurants = n_work + rng.integers(n_rest, size=(n, cfg.favorite_restaurants))
    recreation = n_work + n_rest + rng.integers(n_rec, size=(n, cfg.favorite_recreation))

    routine = np.full((cfg.routine_days, SLOTS, n), HOME, dtype=np.int64)
    rows = np.arange(n)
    for day in range(cfg.routine_days):
        at_work = rng.random(n) < cfg.work_prob
        eats_out = rng.random(n) < cfg.meal_prob
        plays = rng.random(n) < cfg.recreation_prob
        pick_r = restaurants[rows, rng.integers(cfg.favorite_restaurants, size=n)]
        pick_c = recreation[rows, rng.integers(cfg.favorite_recreation, size=n)]
        routine[day, 0] = np.where(at_work, workplace, HOME)
        routine[day, 1] = np.where(eats_out, pick_r, np.where(at_work, workplace, HOME))
        routine[day, 2] = np.where(plays, pick_c, HOME)

    social = _social_network(n, workplace, restaurants, recreation, cfg, substream(rng_seed, 81))
    return World(n, place_type, home, workplace, restaurants, recreation, routine, social, cfg, rng_seed)


# ------------------------------------------------------------------ dynamics


def step_day(world: World, infected: np.ndarray, day: int, rng: np.random.Generator):
    """One SI day. Returns ``(new infection state, DayEvents)``.

    Transmission uses the infectious set at the start of the day: every
    infectious agent independently infects each susceptible agent sharing a
    slot with probability ``p_coloc`` and each susceptible friend with
    probability ``p_social``.
    """
    infected = np.asarray(infected, dtype=bool)
    if infected.shape != (world.n_agents,):
        raise ValueError(f"infection state has shape {infected.shape} for {world.n_agents} agents")
    cfg = world.config
    if not infected.any():
        return infected.copy(), DayEvents(day, np.zeros(0, dtype=np.int64), 0, 0)
    sched = world.routine[day % world.routine.shape[0]]
    susceptible = ~infected
    coloc_contacts = np.zeros(world.n_agents)
    for slot in range(SLOTS):
        where = sched[slot]
        present = where != HOME
        k = np.bincount(where[present & infected], minlength=world.n_places)
        contacts = np.where(present, k[np.where(present, where, 0)], 0)
        coloc_contacts += contacts
    social_contacts = world.social_matrix @ infected.astype(np.float64)
    escape = (1.0 - cfg.p_coloc) ** coloc_contacts * (1.0 - cfg.p_social) ** social_contacts
    u = rng.random(world.n_agents)
    new = susceptible & (u >= escape)
    events = DayEvents(day, np.flatnonzero(new), int(coloc_contacts[susceptible].sum()),
                       int(social_contacts[susceptible].sum()))
    return infected | new, events


def run_episode(world: World, n_seeds: int = 5, days: int = 5, observe_rate_coloc: float | None = None,
                observe_rate_social: float | None = None, rng_seed: int = 0) -> Episode:
    if n_seeds < 1 or days < 1:
        raise ValueError("n_seeds and days must be >= 1")
    if n_seeds > world.n_agents:
        raise ValueError(f"cannot seed {n_seeds} of {world.n_agents} agents")
    cfg = world.config
    rate_c = cfg.observe_rate_coloc if observe_rate_coloc is None else observe_rate_coloc
    rate_s = cfg.observe_rate_social if observe_rate_social is None else observe_rate_social
    for r in (rate_c, rate_s):
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"observe rates must lie in [0, 1], got {r}")
    rng = substream(world.rng_seed, 82, rng_seed)
    seeds = np.sort(rng.choice(world.n_agents, size=n_seeds, replace=False))
    state = np.zeros(world.n_agents, dtype=bool)
    state[seeds] = True
    day_log = []
    for day in range(days):
        state, ev = step_day(world, state, day, rng)
        day_log.append(ev.newly_infected)
    obs_c, ids_c = world.observed_network("coloc", rate_c)
    obs_s, ids_s = world.observed_network("social", rate_s)
    common, ic, is_ = np.intersect1d(ids_c, ids_s, return_indices=True)
    bridges = BridgeLinks(np.stack([ic, is_], axis=1))
    return Episode(seeds, np.flatnonzero(state), world.complete_coloc, obs_c, world.social, obs_s,
                   bridges, day_log, ids_c, ids_s, rng_seed)


def _episode_worker(args):
    n_agents, n_places, cfg, world_seed, seeds, n_seeds, days = args
    world = init_world(n_agents, n_places, cfg, world_seed)
    return [_summary(run_episode(world, n_seeds, days, rng_seed=s)) for s in seeds]


def _summary(ep: Episode) -> tuple:
    return ep.ground_truth_seeds, ep.spread_set, ep.day_log


def run_episodes(world: World, n_episodes: int, n_seeds: int = 5, days: int = 5, first_seed: int = 0,
                 workers: int = 1) -> list[Episode]:
    """``n_episodes`` episodes with episode seeds ``first_seed, first_seed+1, ...``.

    Episodes are independent streams, so results do not depend on ``workers``.
    """
    seeds = list(range(first_seed, first_seed + n_episodes))
    if workers <= 1 or n_episodes < 2:
        return [run_episode(world, n_seeds, days, rng_seed=s) for s in seeds]
    chunks = [seeds[i::workers] for i in range(workers)]
    n_places = tuple(np.bincount(world.place_type, minlength=3).tolist())
    jobs = [(world.n_agents, n_places, world.config, world.rng_seed, c, n_seeds, days) for c in chunks if c]
    by_seed = {}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for chunk, res in zip([c for c in chunks if c], pool.map(_episode_worker, jobs)):
            by_seed.update(zip(chunk, res))
    out = []
    obs_c, ids_c = world.observed_network("coloc", world.config.observe_rate_coloc)
    obs_s, ids_s = world.observed_network("social", world.config.observe_rate_social)
    _, ic, is_ = np.intersect1d(ids_c, ids_s, return_indices=True)
    bridges = BridgeLinks(np.stack([ic, is_], axis=1))
    for s in seeds:
        gt, spread, log_ = by_seed[s]
        out.append(Episode(gt, spread, world.complete_coloc, obs_c, world.social, obs_s, bridges,
                           log_, ids_c, ids_s, s))
    return out


# ------------------------------------------------------------------ export


def episode_seeds(ep: Episode, mode: str) -> np.ndarray:
    """Agent ids used as seeds: ground truth (D0) or ground truth plus day-1 infections (D1)."""
    if mode == "D0":
        return ep.ground_truth_seeds
    if mode == "D1":
        first = ep.day_log[0] if ep.day_log else np.zeros(0, dtype=np.int64)
        return np.union1d(ep.ground_truth_seeds, first)
    raise ValueError(f"unknown seed mode {mode!r}; expected D0 or D1")


def episode_sample(ep: Episode, mode: str) -> DiffusionSample:
    n_c, n_s = ep.observed_coloc.num_nodes, ep.observed_social.num_nodes
    x_s = np.isin(ep.coloc_ids, episode_seeds(ep, mode)).astype(float)
    y_s = np.isin(ep.coloc_ids, ep.spread_set).astype(float)
    y_t = np.isin(ep.social_ids, ep.spread_set).astype(float)
    x_t = bridge_transfer(y_s, ep.bridges, n_s)
    assert x_s.shape == (n_c,)
    return DiffusionSample(x_s, y_s, x_t, y_t)


def episodes_cross(episodes: list[Episode]) -> CrossNetwork:
    first = episodes[0]
    for ep in episodes[1:]:
        if not (np.array_equal(ep.coloc_ids, first.coloc_ids) and np.array_equal(ep.social_ids, first.social_ids)):
            raise ValueError("episodes must share their observed networks to form one dataset")
    return CrossNetwork(first.observed_coloc, first.observed_social, first.bridges,
                        structural_features(first.observed_coloc), structural_features(first.observed_social))


def export_episodes(episodes: list[Episode], mode: str, out_dir, meta: dict | None = None) -> Path:
    """Write episodes as one cross-network dataset (co-location source, social target)."""
    if not episodes:
        raise ValueError("no episodes to export")
    cross = episodes_cross(episodes)
    samples, warnings = [], []
    for i, ep in enumerate(episodes):
        s = episode_sample(ep, mode)
        n_seed = len(episode_seeds(ep, mode))
        seen = int(s.x_s.sum())
        if seen == 0:
            warnings.append(f"sample {i}: none of the {n_seed} seeds is in the observed co-location network")
        elif seen < n_seed:
            log.debug("sample %d: %d of %d seeds observed", i, seen, n_seed)
        samples.append(s)
    for w in warnings:
        log.warning(w)
    info = dict(meta or {})
    info.update(kind="agents", seed_mode=mode, direction="physical->social", warnings=warnings,
                seeds_observed=[int(s.x_s.sum()) for s in samples],
                spread_sizes=[int(len(ep.spread_set)) for ep in episodes],
                episode_seeds=[int(ep.rng_seed) for ep in episodes])
    d = write_dataset(out_dir, cross, samples, info)
    write_id_map(episodes[0].coloc_ids.tolist(), d / "source_ids.tsv")
    write_id_map(episodes[0].social_ids.tolist(), d / "target_ids.tsv")
    return d


# ------------------------------------------------------------------ calibration


def spread_band_rate(spreads, low: int = 50, high: int = 200) -> float:
    spreads = np.asarray(spreads)
    return float(np.mean((spreads >= low) & (spreads <= high))) if spreads.size else 0.0


def calibrate(n_agents: int, base: ScheduleConfig, scales, n_episodes: int = 50, n_seeds: int = 5,
              days: int = 5, rng_seed: int = 0, workers: int = 1) -> list[dict]:
    """Scale both transmission probabilities by each factor and report the spread statistics."""
    world = init_world(n_agents, None, base, rng_seed)
    rows = []
    for f in scales:
        cfg = ScheduleConfig(**{**base.to_dict(), "p_coloc": min(1.0, base.p_coloc * f),
                                "p_social": min(1.0, base.p_social * f)})
        w = World(world.n_agents, world.place_type, world.home, world.workplace, world.restaurants,
                  world.recreation, world.routine, world.social, cfg, world.rng_seed, world._cache)
        eps = run_episodes(w, n_episodes, n_seeds, days, workers=workers)
        sizes = np.array([len(e.spread_set) for e in eps])
        rows.append({"scale": float(f), "p_coloc": cfg.p_coloc, "p_social": cfg.p_social,
                     "mean_spread": float(sizes.mean()), "min_spread": int(sizes.min()),
                     "max_spread": int(sizes.max()), "in_band": spread_band_rate(sizes)})
    return rows
