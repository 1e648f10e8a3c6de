"""Per-slot joint offload-routing and cache-content solver.

The binary route/cache problem is relaxed to the unit box and solved by
cyclic block minimization of a proximal upper bound wrapped in an augmented
Lagrangian (one multiplier per route-sum equality, one per inequality).
The relaxed point is then threshold-rounded, routes are restored to
one-per-task by argmax, and a deterministic repair drives the violation
degrees to zero before the solution is accepted via the integrality gap.

Blocks follow the variable relationships: one offload-indicator block per
home-UAV group, one destination block per task, one cache block per UAV.
Inner minimization is projected subgradient descent with a spectral step
and backtracking on the unit box; the hot loops run on plain Python floats
over precompiled per-block views because blocks are tiny and numpy
overhead dominates otherwise. A deterministic single-move/exchange descent
pass then polishes the rounded assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (HOME, LOCAL, MBS, PEER, Decision, Route, Scenario,
                    SlotState, link_rate, ISD_UAV, UAV_MBS, UAV_UAV)

_TIE_TOL = 1e-12


@dataclass
class Sp1Params:
    prox_sigma0: float = 1.0
    penalty_sigma: float = 10.0
    round_delta: float = 0.5
    gap_weight: float = 1.0
    eps1: float = 1e-3
    eps2: float = 1e-3
    max_iters: int = 200
    inner_steps: int = 500
    inner_grad_tol: float = 1e-6


@dataclass
class Multipliers:
    mu: np.ndarray     # equality multipliers, free sign
    lam: np.ndarray    # inequality multipliers, clamped nonnegative


@dataclass
class ReferenceShares:
    """Fixed bandwidth fractions and CPU rates the relaxed problem prices
    routes with. Selected routes carry their current allocation; unselected
    candidates get an equal share of the resource they would claim."""
    theta_access: dict[int, float]
    theta_inter: dict[tuple[int, int], float]
    theta_mbs: dict[int, float]
    cpu_uav: dict[tuple[int, int], float]
    cpu_mbs: dict[int, float]


def reference_shares(scenario: Scenario, state: SlotState,
                     decision: Decision | None = None) -> ReferenceShares:
    tasks = sorted(state.tasks)
    n_tasks = max(1, len(tasks))
    U = scenario.uav_count
    group: dict[int, list[int]] = {u: [] for u in range(U)}
    for k in tasks:
        group[int(scenario.home[k])].append(k)

    th_acc: dict[int, float] = {}
    th_int: dict[tuple[int, int], float] = {}
    th_mbs: dict[int, float] = {}
    f_uav: dict[tuple[int, int], float] = {}
    f_mbs: dict[int, float] = {}

    pairs = max(1, U * (U - 1))
    for u in range(U):
        share = 1.0 / max(1, len(group[u]))
        for k in group[u]:
            th_acc[k] = share
        for v in range(U):
            if v != u:
                th_int[(u, v)] = 1.0 / pairs
        th_mbs[u] = 1.0 / U
    for k in tasks:
        hu = int(scenario.home[k])
        for u in range(U):
            if u == hu:
                f_uav[(k, u)] = scenario.uavs[u].cpu_hz / max(1, len(group[u]))
            else:
                f_uav[(k, u)] = scenario.uavs[u].cpu_hz / n_tasks
        f_mbs[k] = scenario.mbs.cpu_hz / n_tasks

    if decision is not None:
        for k, r in decision.routes.items():
            if r.kind == LOCAL:
                continue
            hu = int(scenario.home[k])
            got = decision.theta_access.get(k, 0.0)
            if got > 0.0:
                th_acc[k] = got
            if r.kind == PEER:
                got = decision.theta_inter.get((hu, int(r.target)), 0.0)
                if got > 0.0:
                    th_int[(hu, int(r.target))] = got
            if r.kind == MBS:
                got = decision.theta_mbs.get(hu, 0.0)
                if got > 0.0:
                    th_mbs[hu] = got
            falloc = decision.cpu_alloc_hz.get(k, 0.0)
            if falloc > 0.0:
                if r.kind == MBS:
                    f_mbs[k] = falloc
                else:
                    f_uav[(k, int(r.target))] = falloc
    return ReferenceShares(th_acc, th_int, th_mbs, f_uav, f_mbs)


# ---------------------------------------------------------------------------
# instance structure

@dataclass
class _LinRow:
    """const + sum(coef * v[idx]) compared against 0."""
    idx: np.ndarray
    coef: np.ndarray
    const: float
    name: str

    def value(self, v: np.ndarray) -> float:
        return self.const + float(self.coef @ v[self.idx])


@dataclass
class _ModeGapRow:
    """v[x] - max(v[ys]) <= 0; with no remote options the row pins x at 0."""
    x: int
    ys: np.ndarray
    name: str

    def value(self, v: np.ndarray) -> float:
        best = float(np.max(v[self.ys])) if self.ys.size else 0.0
        return float(v[self.x]) - best


@dataclass
class _DeadlineRow:
    """Task delay minus its deadline; the delay is affine in (x, y) plus a
    hinge on each cache entry that would need a fresh fill."""
    idx: np.ndarray
    coef: np.ndarray
    const: float
    kidx: np.ndarray
    kprev: np.ndarray
    kcoef: np.ndarray
    name: str

    def value(self, v: np.ndarray) -> float:
        val = self.const + float(self.coef @ v[self.idx])
        if self.kidx.size:
            val += float(np.maximum(v[self.kidx] - self.kprev, 0.0) @ self.kcoef)
        return val


@dataclass
class _TaskVars:
    isd: int
    home: int
    x: int                      # offload-indicator variable id
    y: list[int]                # destination variable ids
    routes: list[Route]         # destination routes, aligned with y
    coefs: list[float]          # fixed-share delay per destination, seconds
    local_s: float | None      # local delay, None when local is banned


@dataclass
class _Block:
    name: str
    varids: np.ndarray


class Sp1Instance:
    """Relaxed per-slot routing/caching problem at fixed shares/positions."""

    def __init__(self, scenario: Scenario, state: SlotState,
                 shares: ReferenceShares, positions: np.ndarray,
                 allow_local: bool = True):
        self.scenario = scenario
        self.state = state
        self.shares = shares
        self.positions = np.asarray(positions, dtype=float)
        self.allow_local = allow_local
        self.cache_fill_s = (scenario.radio.content_size_bits
                             / scenario.radio.backhaul_avg_bps)
        self.dropped: list[int] = []    # tasks with no finite route at all
        self.deadline_unmeetable: list[int] = []
        self._build()
        self._compile_blocks()

    # -- construction ------------------------------------------------------

    def _route_coefs(self, k: int):
        """Fixed-share delay of each remote destination for task k; returns
        (routes, coefs) keeping only finite options."""
        sc, st = self.scenario, self.state
        task = st.tasks[k]
        isd = sc.isds[k]
        hu = int(sc.home[k])
        uav = sc.uavs[hu]
        pos = self.positions
        d = task.size_bits
        acc = link_rate(ISD_UAV, isd.position_m, pos[hu],
                        min(1.0, self.shares.theta_access.get(k, 0.0)),
                        sc.radio, isd.tx_power_w, rx_height_m=uav.altitude_m)
        routes: list[Route] = []
        coefs: list[float] = []
        if acc <= 0.0:
            return routes, coefs
        base = d / acc
        f = self.shares.cpu_uav.get((k, hu), 0.0)
        if f > 0.0:
            routes.append(Route(HOME, hu))
            coefs.append(base + d * task.density / f)
        for v in range(sc.uav_count):
            if v == hu:
                continue
            th = min(1.0, self.shares.theta_inter.get((hu, v), 0.0))
            f = self.shares.cpu_uav.get((k, v), 0.0)
            if th <= 0.0 or f <= 0.0:
                continue
            try:
                rel = link_rate(UAV_UAV, pos[hu], pos[v], th, sc.radio,
                                uav.tx_power_w)
            except ValueError:
                continue
            if rel <= 0.0:
                continue
            routes.append(Route(PEER, v))
            coefs.append(base + d / rel + d * task.density / f)
        th = min(1.0, self.shares.theta_mbs.get(hu, 0.0))
        f = self.shares.cpu_mbs.get(k, 0.0)
        if th > 0.0 and f > 0.0:
            rel = link_rate(UAV_MBS, pos[hu], sc.mbs.position_m, th, sc.radio,
                            uav.tx_power_w, tx_height_m=uav.altitude_m,
                            rx_height_m=sc.mbs.height_m)
            if rel > 0.0:
                routes.append(Route(MBS))
                coefs.append(base + d / rel + d * task.density / f)
        return routes, coefs

    def _build(self):
        sc, st = self.scenario, self.state
        U = sc.uav_count
        self.tasks: list[_TaskVars] = []
        nv = 0
        for k in sorted(st.tasks):
            routes, coefs = self._route_coefs(k)
            local_s = None
            if self.allow_local:
                task = st.tasks[k]
                local_s = task.size_bits * task.density / sc.isds[k].cpu_hz
            # routes already slower than the deadline can never be selected
            # by a deadline-feasible assignment; drop them while an option
            # that meets the deadline remains. With local computing banned
            # the macro-station route always stays: it is the one escape
            # needing no cache slot when a crowded row must shed tasks.
            deadline = st.tasks[k].deadline_s
            best = min([c for c in coefs] + ([local_s] if local_s is not None
                                             else []), default=math.inf)
            if best <= deadline:
                keep = [(r, c) for r, c in zip(routes, coefs)
                        if c <= deadline
                        or (r.kind == MBS and not self.allow_local)]
                routes = [r for r, _ in keep]
                coefs = [c for _, c in keep]
            if not routes and local_s is None:
                self.dropped.append(k)
                continue
            tv = _TaskVars(isd=k, home=int(sc.home[k]), x=nv,
                           y=list(range(nv + 1, nv + 1 + len(routes))),
                           routes=routes, coefs=coefs, local_s=local_s)
            nv += 1 + len(routes)
            self.tasks.append(tv)
        # cache variables cover only the services demanded this slot; the
        # LRU assembly carries undemanded entries across slots on its own
        demanded = sorted({st.tasks[tv.isd].service_id for tv in self.tasks})
        self.svc_col = {s: c for c, s in enumerate(demanded)}
        self.demanded = demanded
        nz = len(demanded)
        self.z_of = np.arange(nv, nv + U * nz).reshape(U, nz)
        nv += U * nz
        self.nvar = nv
        self.zprev = st.prev_cache.astype(float)
        zprev_red = self.zprev[:, demanded] if nz else np.zeros((U, 0))

        self.lb = np.zeros(nv)
        self.ub = np.ones(nv)
        if not self.allow_local:
            for tv in self.tasks:
                self.lb[tv.x] = 1.0

        # objective: f = fconst + fcoef . v + sum hinge(z - zprev) * kcoef
        fcoef = np.zeros(nv)
        fconst = 0.0
        for tv in self.tasks:
            if tv.local_s is not None:
                fconst += tv.local_s
                fcoef[tv.x] -= tv.local_s
            for yi, c in zip(tv.y, tv.coefs):
                fcoef[yi] += c
        svc_count = np.zeros(nz)
        for tv in self.tasks:
            svc_count[self.svc_col[st.tasks[tv.isd].service_id]] += 1.0
        kcoef = np.zeros(nv)
        kprev = np.zeros(nv)
        for u in range(U):
            for c in range(nz):
                zi = self.z_of[u, c]
                kcoef[zi] = svc_count[c] * self.cache_fill_s
                kprev[zi] = zprev_red[u, c]
        self.fcoef, self.fconst = fcoef, fconst
        self.kcoef, self.kprev = kcoef, kprev
        kz = self.z_of.ravel()
        self._zids = kz[self.kcoef[kz] > 0.0]

        self._build_rows()
        # blocks: offload indicators per home group, destinations per task,
        # cache row per UAV
        blocks: list[_Block] = []
        for u in range(U):
            ids = [tv.x for tv in self.tasks if tv.home == u]
            if ids:
                blocks.append(_Block(f"x[{u}]", np.array(ids)))
        for tv in self.tasks:
            if tv.y:
                blocks.append(_Block(f"y[{tv.isd}]", np.array(tv.y)))
        if nz:
            for u in range(U):
                blocks.append(_Block(f"z[{u}]", self.z_of[u].copy()))
        self.blocks = blocks

    def _build_rows(self):
        sc, st = self.scenario, self.state
        U = sc.uav_count
        h_rows: list[_LinRow] = []
        g_rows: list = []
        for tv in self.tasks:
            idx = np.array(tv.y + [tv.x])
            coef = np.array([1.0] * len(tv.y) + [-1.0])
            h_rows.append(_LinRow(idx, coef, 0.0, f"route_sum[{tv.isd}]"))
            g_rows.append(_LinRow(idx.copy(), coef.copy(), 0.0,
                                  f"sum_le[{tv.isd}]"))
            g_rows.append(_ModeGapRow(tv.x, np.array(tv.y, dtype=int),
                                      f"mode_gap[{tv.isd}]"))
        for tv in self.tasks:
            col = self.svc_col[st.tasks[tv.isd].service_id]
            for yi, r in zip(tv.y, tv.routes):
                u = r.executes_on_uav()
                if u is not None:
                    g_rows.append(_LinRow(np.array([yi, self.z_of[u, col]]),
                                          np.array([1.0, -1.0]), 0.0,
                                          f"service[{tv.isd},{u}]"))
        if self.demanded:
            for u in range(U):
                cap = float(sc.uavs[u].cache_slots)
                g_rows.append(_LinRow(self.z_of[u].copy(),
                                      np.full(len(self.demanded), 1.0 / cap),
                                      -1.0, f"cache_cap[{u}]"))
        # capacity forms at the fixed shares, normalized to unit scale
        for u in range(U):
            ids, co = [], []
            for tv in self.tasks:
                if tv.home == u and tv.y:
                    ids.append(tv.x)
                    co.append(self.shares.theta_access.get(tv.isd, 0.0))
            if ids:
                g_rows.append(_LinRow(np.array(ids), np.array(co), -1.0,
                                      f"bw_access[{u}]"))
        for tv in self.tasks:
            ids = [yi for yi, r in zip(tv.y, tv.routes) if r.kind == PEER]
            if ids:
                co = [self.shares.theta_inter.get((tv.home, int(r.target)), 0.0)
                      for yi, r in zip(tv.y, tv.routes) if r.kind == PEER]
                g_rows.append(_LinRow(np.array(ids), np.array(co), -1.0,
                                      f"bw_inter[{tv.isd}]"))
            ids = [yi for yi, r in zip(tv.y, tv.routes) if r.kind == MBS]
            if ids:
                g_rows.append(_LinRow(np.array(ids),
                                      np.array([self.shares.theta_mbs.get(tv.home, 0.0)]),
                                      -1.0, f"bw_mbs[{tv.isd}]"))
        for u in range(U):
            ids, co = [], []
            for tv in self.tasks:
                for yi, r in zip(tv.y, tv.routes):
                    if r.executes_on_uav() == u:
                        ids.append(yi)
                        co.append(self.shares.cpu_uav.get((tv.isd, u), 0.0)
                                  / sc.uavs[u].cpu_hz)
            if ids:
                g_rows.append(_LinRow(np.array(ids), np.array(co), -1.0,
                                      f"cpu_uav[{u}]"))
        ids, co = [], []
        for tv in self.tasks:
            for yi, r in zip(tv.y, tv.routes):
                if r.kind == MBS:
                    ids.append(yi)
                    co.append(self.shares.cpu_mbs.get(tv.isd, 0.0)
                              / sc.mbs.cpu_hz)
        if ids:
            g_rows.append(_LinRow(np.array(ids), np.array(co), -1.0, "cpu_mbs"))
        for tv in self.tasks:
            task = st.tasks[tv.isd]
            # a task no option can finish on time would pin its deadline
            # multiplier at infinity; leave the row out and flag the task
            best = tv.local_s if tv.local_s is not None else math.inf
            for r, c in zip(tv.routes, tv.coefs):
                u = r.executes_on_uav()
                fill = u is not None and not self.zprev[u, task.service_id]
                best = min(best, c + (self.cache_fill_s if fill else 0.0))
            if best > task.deadline_s:
                self.deadline_unmeetable.append(tv.isd)
                continue
            idx = [tv.x] + tv.y
            coef = [0.0 if tv.local_s is None else -tv.local_s] + tv.coefs
            const = (0.0 if tv.local_s is None else tv.local_s) - task.deadline_s
            col = self.svc_col[task.service_id]
            kidx = self.z_of[:, col].copy()
            g_rows.append(_DeadlineRow(np.array(idx), np.array(coef), const,
                                       kidx, self.zprev[:, task.service_id].copy(),
                                       np.full(U, self.cache_fill_s),
                                       f"deadline[{tv.isd}]"))
        self.h_rows = h_rows
        self.g_rows = g_rows

    # -- whole-vector evaluations -------------------------------------------

    def objective(self, v: np.ndarray) -> float:
        val = self.fconst + float(self.fcoef @ v)
        z = self._zids
        if z.size:
            val += float(np.maximum(v[z] - self.kprev[z], 0.0) @ self.kcoef[z])
        return val

    def h_values(self, v: np.ndarray) -> np.ndarray:
        return np.array([r.value(v) for r in self.h_rows])

    def g_values(self, v: np.ndarray) -> np.ndarray:
        return np.array([r.value(v) for r in self.g_rows])

    def initial_point(self, decision: Decision | None = None) -> np.ndarray:
        """Relaxed starting point mirroring a binary decision (previous
        cache plus any routes the decision already selects)."""
        v = np.zeros(self.nvar)
        for s, col in self.svc_col.items():
            v[self.z_of[:, col]] = self.zprev[:, s]
        v[self.lb > 0.0] = 1.0
        if decision is not None:
            for tv in self.tasks:
                r = decision.routes.get(tv.isd)
                if r is None or r.kind == LOCAL:
                    continue
                v[tv.x] = 1.0
                for yi, cand in zip(tv.y, tv.routes):
                    if cand == r:
                        v[yi] = 1.0
            for s, col in self.svc_col.items():
                v[self.z_of[:, col]] = np.maximum(
                    v[self.z_of[:, col]],
                    np.asarray(decision.cache[:, s], dtype=float))
        return v

    def objective_of(self, routes: dict[int, Route],
                     cache: np.ndarray) -> float:
        """Instance objective at a binary assignment."""
        v = np.zeros(self.nvar)
        for tv in self.tasks:
            r = routes.get(tv.isd, Route(LOCAL))
            if r.kind != LOCAL:
                v[tv.x] = 1.0
                for yi, cand in zip(tv.y, tv.routes):
                    if cand == r:
                        v[yi] = 1.0
        cache = np.asarray(cache, dtype=float)
        for s, col in self.svc_col.items():
            v[self.z_of[:, col]] = cache[:, s]
        return self.objective(v)

    def cache_from_vector(self, v: np.ndarray, delta: float) -> np.ndarray:
        """Full-width boolean cache matrix from the relaxed point: demanded
        services threshold at delta, everything else keeps its previous
        contents."""
        cache = self.state.prev_cache.copy()
        for s, col in self.svc_col.items():
            cache[:, s] = v[self.z_of[:, col]] >= delta
        return cache

    def transfer_point(self, other: "Sp1Instance",
                       other_v: np.ndarray) -> np.ndarray:
        """Map a relaxed point from a structurally different instance of
        the same slot (route pruning can change the variable layout) onto
        this one by variable identity; unmapped entries keep greedy values."""
        v = self.greedy_point()
        src = {}
        for tv in other.tasks:
            src[("x", tv.isd)] = other_v[tv.x]
            for yi, r in zip(tv.y, tv.routes):
                src[("y", tv.isd, r.kind, r.target)] = other_v[yi]
        for s, col in other.svc_col.items():
            for u in range(other.zprev.shape[0]):
                src[("z", u, s)] = other_v[other.z_of[u, col]]
        for tv in self.tasks:
            got = src.get(("x", tv.isd))
            if got is not None:
                v[tv.x] = got
            for yi, r in zip(tv.y, tv.routes):
                got = src.get(("y", tv.isd, r.kind, r.target))
                if got is not None:
                    v[yi] = got
        for s, col in self.svc_col.items():
            for u in range(self.zprev.shape[0]):
                got = src.get(("z", u, s))
                if got is not None:
                    v[self.z_of[u, col]] = got
        return np.clip(v, self.lb, self.ub)

    def greedy_point(self) -> np.ndarray:
        """One-hot start: each task on its cheapest option (fill cost
        included), cache raised to cover the picks. Shortens the distance
        the proximal block steps must travel."""
        v = np.zeros(self.nvar)
        for s, col in self.svc_col.items():
            v[self.z_of[:, col]] = self.zprev[:, s]
        v[self.lb > 0.0] = 1.0
        for tv in self.tasks:
            sid = self.state.tasks[tv.isd].service_id
            best_c = tv.local_s if tv.local_s is not None else math.inf
            best_yi = None
            for yi, r, c in zip(tv.y, tv.routes, tv.coefs):
                u = r.executes_on_uav()
                if u is not None and not self.zprev[u, sid]:
                    c = c + self.cache_fill_s
                if c < best_c - _TIE_TOL:
                    best_c, best_yi = c, yi
            if best_yi is not None:
                v[tv.x] = 1.0
                v[best_yi] = 1.0
                r = tv.routes[tv.y.index(best_yi)]
                u = r.executes_on_uav()
                if u is not None:
                    v[self.z_of[u, self.svc_col[sid]]] = 1.0
        return v

    def route_delay(self, tv: _TaskVars, route: Route,
                    fill: bool) -> float:
        """Executed-form delay of one task on one route at the fixed shares."""
        if route.kind == LOCAL:
            base = tv.local_s if tv.local_s is not None else math.inf
            return base
        for cand, coef in zip(tv.routes, tv.coefs):
            if cand == route:
                return coef + (self.cache_fill_s if fill else 0.0)
        return math.inf

    # -- per-block compiled views -------------------------------------------

    def _compile_blocks(self):
        """Precompute, for every block, the touched rows and the local
        positions of the block's variables inside them."""
        pos_of = {}
        for bi, blk in enumerate(self.blocks):
            pos_of[bi] = {int(g): i for i, g in enumerate(blk.varids)}
        self._entry = []
        for bi, blk in enumerate(self.blocks):
            posmap = pos_of[bi]
            hrows = []
            for j, row in enumerate(self.h_rows):
                local = [(posmap[int(g)], float(c))
                         for g, c in zip(row.idx, row.coef) if int(g) in posmap]
                if local:
                    hrows.append((j, row, local))
            grows = []
            for j, row in enumerate(self.g_rows):
                if isinstance(row, _ModeGapRow):
                    if int(row.x) in posmap:
                        grows.append((j, row, "gap_x", posmap[int(row.x)]))
                    else:
                        ys = [(posmap[int(g)],) for g in row.ys
                              if int(g) in posmap]
                        if ys:
                            grows.append((j, row, "gap_y",
                                          [p for (p,) in ys]))
                    continue
                if isinstance(row, _DeadlineRow):
                    local = [(posmap[int(g)], float(c))
                             for g, c in zip(row.idx, row.coef)
                             if int(g) in posmap]
                    kl = [(posmap[int(g)], float(p), float(c))
                          for g, p, c in zip(row.kidx, row.kprev, row.kcoef)
                          if int(g) in posmap]
                    if local or kl:
                        grows.append((j, row, "dead", (local, kl)))
                    continue
                local = [(posmap[int(g)], float(c))
                         for g, c in zip(row.idx, row.coef) if int(g) in posmap]
                if local:
                    grows.append((j, row, "lin", local))
            fc = [float(self.fcoef[g]) for g in blk.varids]
            kn = [(i, float(self.kprev[g]), float(self.kcoef[g]))
                  for i, g in enumerate(blk.varids)
                  if self.kcoef[g] > 0.0]
            self._entry.append((hrows, grows, fc, kn))


def build_sp1(scenario: Scenario, state: SlotState, shares: ReferenceShares,
              positions: np.ndarray, allow_local: bool = True) -> Sp1Instance:
    """Materialize the relaxed routing/caching problem for one slot at the
    given fixed bandwidth/CPU shares and UAV positions."""
    return Sp1Instance(scenario, state, shares, positions, allow_local)


def zero_multipliers(inst: Sp1Instance) -> Multipliers:
    return Multipliers(mu=np.zeros(len(inst.h_rows)),
                       lam=np.zeros(len(inst.g_rows)))


# ---------------------------------------------------------------------------
# augmented Lagrangian machinery

def penalty_value(inst: Sp1Instance, v: np.ndarray, mult: Multipliers,
                  sigma: float) -> float:
    return penalty_from_rows(inst.h_values(v), inst.g_values(v), mult, sigma)


def penalty_from_rows(h: np.ndarray, g: np.ndarray, mult: Multipliers,
                      sigma: float) -> float:
    val = float(mult.mu @ h) + 0.5 * sigma * float(h @ h)
    t = mult.lam + sigma * g
    lam2 = mult.lam ** 2
    val += float(np.sum(np.where(t > 0.0, t * t - lam2, -lam2))) / (2.0 * sigma)
    return val


def augmented_lagrangian(inst: Sp1Instance, point: np.ndarray,
                         anchor: np.ndarray, block_index: int,
                         mult: Multipliers, params: Sp1Params) -> float:
    """Value of the proximal upper-bound Lagrangian for one block: the
    objective at (block of `point`, rest of `anchor`) plus the proximal
    pull toward the anchor block, the quadratic equality penalties, and the
    clamped inequality penalties."""
    blk = inst.blocks[block_index]
    merged = np.array(anchor, dtype=float, copy=True)
    merged[blk.varids] = point[blk.varids]
    delta = merged[blk.varids] - anchor[blk.varids]
    val = inst.objective(merged)
    val += 0.5 * params.prox_sigma0 * float(delta @ delta)
    val += penalty_value(inst, merged, mult, params.penalty_sigma)
    return val


def lagrangian_value(inst: Sp1Instance, v: np.ndarray, mult: Multipliers,
                     sigma: float) -> float:
    """Objective plus penalty terms at a point (no proximal part)."""
    return inst.objective(v) + penalty_value(inst, v, mult, sigma)


def block_minimize(inst: Sp1Instance, block_index: int, anchor: np.ndarray,
                   mult: Multipliers, params: Sp1Params,
                   rowvals: tuple[np.ndarray, np.ndarray] | None = None
                   ) -> np.ndarray:
    """Approximately minimize the block's proximal Lagrangian over the unit
    box, never above its anchor value. Returns a full vector copy with the
    block updated.

    When current h/g row values are passed in, entry constants come from
    them arithmetically and the touched entries are updated in place on
    exit, so a full sweep never runs inside the block loop.
    """
    blk = inst.blocks[block_index]
    hrows, grows, fc, kinks = inst._entry[block_index]
    v = np.array(anchor, dtype=float, copy=True)
    n = blk.varids.size
    xb = [float(v[g]) for g in blk.varids]
    ab = list(xb)
    lbs = [float(inst.lb[g]) for g in blk.varids]
    ubs = [float(inst.ub[g]) for g in blk.varids]
    sigma = params.penalty_sigma
    sigma0 = params.prox_sigma0
    mu = mult.mu
    lam = mult.lam
    hv = rowvals[0] if rowvals is not None else None
    gv = rowvals[1] if rowvals is not None else None

    # entry constants: row value minus the block contribution
    hdata = []
    for j, row, local in hrows:
        full = float(hv[j]) if hv is not None else row.value(v)
        base = full - sum(c * xb[p] for p, c in local)
        hdata.append((float(mu[j]), local, base, j))
    gdata = []
    for j, row, kind, payload in grows:
        lamj = float(lam[j])
        if kind == "lin":
            full = float(gv[j]) if gv is not None else row.value(v)
            base = full - sum(c * xb[p] for p, c in payload)
            gdata.append(("lin", lamj, payload, base, j))
        elif kind == "gap_x":
            if gv is not None:
                base = float(gv[j]) - xb[payload]
            else:
                best = float(np.max(v[row.ys])) if row.ys.size else 0.0
                base = -best
            gdata.append(("gap_x", lamj, payload, base, j))
        elif kind == "gap_y":
            if gv is not None:
                base = float(gv[j]) + max(xb[p] for p in payload)
            else:
                base = float(v[row.x])
            gdata.append(("gap_y", lamj, payload, base, j))
        else:
            local, kl = payload
            full = float(gv[j]) if gv is not None else row.value(v)
            base = full - sum(c * xb[p] for p, c in local)
            base -= sum(c * max(xb[p] - zp, 0.0) for p, zp, c in kl)
            gdata.append(("dead", lamj, (local, kl), base, j))

    def value(x):
        val = 0.0
        for i in range(n):
            d = x[i] - ab[i]
            val += fc[i] * x[i] + 0.5 * sigma0 * d * d
        for i, zp, kc in kinks:
            if x[i] > zp:
                val += kc * (x[i] - zp)
        for muj, local, base, _ in hdata:
            h = base
            for p, c in local:
                h += c * x[p]
            val += muj * h + 0.5 * sigma * h * h
        for kind, lamj, payload, base, _ in gdata:
            if kind == "lin":
                g = base
                for p, c in payload:
                    g += c * x[p]
            elif kind == "gap_x":
                g = x[payload] + base
            elif kind == "gap_y":
                g = base - max(x[p] for p in payload)
            else:
                local, kl = payload
                g = base
                for p, c in local:
                    g += c * x[p]
                for p, zp, c in kl:
                    if x[p] > zp:
                        g += c * (x[p] - zp)
            t = lamj + sigma * g
            if t > 0.0:
                val += (t * t - lamj * lamj) / (2.0 * sigma)
            else:
                val -= lamj * lamj / (2.0 * sigma)
        return val

    def gradient(x):
        grad = [fc[i] + sigma0 * (x[i] - ab[i]) for i in range(n)]
        for i, zp, kc in kinks:
            if x[i] > zp:
                grad[i] += kc
        for muj, local, base, _ in hdata:
            h = base
            for p, c in local:
                h += c * x[p]
            w = muj + sigma * h
            for p, c in local:
                grad[p] += w * c
        for kind, lamj, payload, base, _ in gdata:
            if kind == "lin":
                g = base
                for p, c in payload:
                    g += c * x[p]
                w = lamj + sigma * g
                if w > 0.0:
                    for p, c in payload:
                        grad[p] += w * c
            elif kind == "gap_x":
                g = x[payload] + base
                w = lamj + sigma * g
                if w > 0.0:
                    grad[payload] += w
            elif kind == "gap_y":
                pbest = payload[0]
                best = x[pbest]
                for p in payload[1:]:
                    if x[p] > best:
                        best, pbest = x[p], p
                w = lamj + sigma * (base - best)
                if w > 0.0:
                    grad[pbest] -= w
            else:
                local, kl = payload
                g = base
                for p, c in local:
                    g += c * x[p]
                for p, zp, c in kl:
                    if x[p] > zp:
                        g += c * (x[p] - zp)
                w = lamj + sigma * g
                if w > 0.0:
                    for p, c in local:
                        grad[p] += w * c
                    for p, zp, c in kl:
                        if x[p] > zp:
                            grad[p] += w * c
        return grad

    fval = value(xb)
    step = 1.0
    prev_x = None
    prev_g = None
    for _ in range(params.inner_steps):
        grad = gradient(xb)
        # projected-gradient stationarity measure on the box
        pg = 0.0
        for i in range(n):
            t = xb[i] - grad[i]
            if t < lbs[i]:
                t = lbs[i]
            elif t > ubs[i]:
                t = ubs[i]
            d = xb[i] - t
            pg += d * d
        if pg <= params.inner_grad_tol ** 2:
            break
        # spectral (Barzilai-Borwein) step against the ill-conditioned
        # penalty Hessian, safeguarded by Armijo backtracking below
        if prev_x is not None:
            num = den = 0.0
            for i in range(n):
                dx = xb[i] - prev_x[i]
                dg = grad[i] - prev_g[i]
                num += dx * dx
                den += dx * dg
            if den > 1e-16:
                step = min(max(num / den, 1e-8), 1e3)
            else:
                step = min(step * 2.0, 1e3)
        prev_x = list(xb)
        prev_g = grad
        improved = False
        while step > 1e-14:
            xn = [0.0] * n
            for i in range(n):
                t = xb[i] - step * grad[i]
                if t < lbs[i]:
                    t = lbs[i]
                elif t > ubs[i]:
                    t = ubs[i]
                xn[i] = t
            decr = sum(grad[i] * (xb[i] - xn[i]) for i in range(n))
            if decr <= 0.0:
                break
            fn = value(xn)
            if fn <= fval - 1e-4 * decr:
                xb, fval = xn, fn
                improved = True
                break
            step *= 0.5
        if not improved:
            break

    if not math.isfinite(fval):
        raise FloatingPointError(f"non-finite block objective in {blk.name}")
    v[blk.varids] = xb
    if rowvals is not None:
        for _, local, base, j in hdata:
            hv[j] = base + sum(c * xb[p] for p, c in local)
        for kind, _, payload, base, j in gdata:
            if kind == "lin":
                gv[j] = base + sum(c * xb[p] for p, c in payload)
            elif kind == "gap_x":
                gv[j] = xb[payload] + base
            elif kind == "gap_y":
                gv[j] = base - max(xb[p] for p in payload)
            else:
                local, kl = payload
                g = base + sum(c * xb[p] for p, c in local)
                g += sum(c * (xb[p] - zp) for p, zp, c in kl if xb[p] > zp)
                gv[j] = g
    return v


def update_multipliers(mult: Multipliers, v: np.ndarray, inst: Sp1Instance,
                       sigma: float, h: np.ndarray | None = None,
                       g: np.ndarray | None = None) -> Multipliers:
    """Classic ascent step: equality multipliers move by sigma*h, inequality
    multipliers move by sigma*g and clamp at zero."""
    h = inst.h_values(v) if h is None else h
    g = inst.g_values(v) if g is None else g
    return Multipliers(mu=mult.mu + sigma * h,
                       lam=np.maximum(0.0, mult.lam + sigma * g))


def residual(inst: Sp1Instance, v: np.ndarray, mult: Multipliers,
             sigma: float, h: np.ndarray | None = None,
             g: np.ndarray | None = None) -> float:
    """Feasibility/complementarity residual: root sum of squared equality
    values and clamped inequality terms max(g, -lam/sigma)."""
    h = inst.h_values(v) if h is None else h
    g = inst.g_values(v) if g is None else g
    terms = np.maximum(g, -mult.lam / sigma)
    return math.sqrt(float(h @ h) + float(terms @ terms))


# ---------------------------------------------------------------------------
# rounding, integrality gap, repair

@dataclass
class RoundedSolution:
    routes: dict[int, Route]
    cache: np.ndarray           # (U, S) bool
    gap: float
    deltas: tuple[float, float, float]
    relaxed_objective: float
    hopeless: list[int] = field(default_factory=list)


def _argmax_route(inst: Sp1Instance, tv: _TaskVars, v: np.ndarray) -> Route:
    """Highest-weight option for one task; ties prefer local, then the
    lowest fixed-share delay, then the home UAV."""
    best_w = -math.inf
    best: tuple[float, int, Route] | None = None   # (delay, order, route)
    options: list[tuple[float, float, int, Route]] = []
    if tv.local_s is not None:
        options.append((1.0 - float(v[tv.x]), -math.inf, 0, Route(LOCAL)))
    for order, (yi, r, c) in enumerate(zip(tv.y, tv.routes, tv.coefs)):
        rank = 1 if r.kind == HOME else (2 if r.kind == PEER else 3)
        options.append((float(v[yi]), c, rank * 1000 + order, r))
    for w, delay, order, r in options:
        if w > best_w + _TIE_TOL:
            best_w, best = w, (delay, order, r)
        elif abs(w - best_w) <= _TIE_TOL and best is not None:
            if (delay, order) < (best[0], best[1]):
                best = (delay, order, r)
    assert best is not None
    return best[2]


def _deltas(inst: Sp1Instance, routes: dict[int, Route], cache: np.ndarray,
            skip_deadline: set[int] | None = None) -> tuple[float, float, float]:
    """Maximum violation degrees of cache capacity, deadlines, and the
    service-availability implication for a binary assignment. Tasks flagged
    unmeetable at build time never count toward the deadline degree."""
    if skip_deadline is None:
        skip_deadline = set(inst.deadline_unmeetable)
    else:
        skip_deadline = set(skip_deadline) | set(inst.deadline_unmeetable)
    sc, st = inst.scenario, inst.state
    d1 = 0.0
    for u in range(sc.uav_count):
        d1 = max(d1, float(np.count_nonzero(cache[u]) - sc.uavs[u].cache_slots))
    d2 = 0.0
    d3 = 0.0
    for tv in inst.tasks:
        r = routes.get(tv.isd, Route(LOCAL))
        task = st.tasks[tv.isd]
        u = r.executes_on_uav()
        if u is not None and not cache[u, task.service_id]:
            d3 = 1.0
        fill = u is not None and not inst.zprev[u, task.service_id]
        if tv.isd not in skip_deadline:
            t = inst.route_delay(tv, r, fill)
            d2 = max(d2, t - task.deadline_s)
    return max(0.0, d1), max(0.0, d2), max(0.0, d3)


def integrality_gap(relaxed_objective: float, deltas, weight: float) -> float:
    total = sum(deltas)
    if total <= 0.0:
        return 1.0
    if relaxed_objective <= 0.0:
        return 0.0
    return relaxed_objective / (relaxed_objective + weight * total)


def round_and_gap(inst: Sp1Instance, v: np.ndarray,
                  params: Sp1Params) -> RoundedSolution:
    """Threshold-round the relaxed point, restore one route per task by
    argmax, and score the result with the integrality gap."""
    routes: dict[int, Route] = {}
    for tv in inst.tasks:
        routes[tv.isd] = _argmax_route(inst, tv, v)
    cache = inst.cache_from_vector(v, params.round_delta)
    deltas = _deltas(inst, routes, cache)
    gap = integrality_gap(inst.objective(v), deltas, params.gap_weight)
    return RoundedSolution(routes=routes, cache=cache, gap=gap, deltas=deltas,
                           relaxed_objective=inst.objective(v))


_ROUTE_RANK = {LOCAL: 0, HOME: 1, PEER: 2, MBS: 3}


def _repair(inst: Sp1Instance, routes: dict[int, Route], cache: np.ndarray,
            v: np.ndarray) -> tuple[dict[int, Route], np.ndarray, list[int]]:
    """Deterministically drive the violation degrees to zero.

    Cache-capacity conflicts are resolved by least-regret displacement: the
    task whose best still-feasible alternative costs the least extra delay
    moves there. Late tasks move to their fastest deadline-meeting option;
    tasks with no such option are flagged hopeless and kept on their
    fastest route. The returned cache holds every required service plus the
    most popular previous contents that still fit.
    """
    sc, st = inst.scenario, inst.state
    pop = sc.services.popularity
    routes = dict(routes)
    by_isd = {tv.isd: tv for tv in inst.tasks}
    hopeless: list[int] = list(inst.deadline_unmeetable)

    def required() -> dict[int, set[int]]:
        req: dict[int, set[int]] = {u: set() for u in range(sc.uav_count)}
        for k, r in routes.items():
            u = r.executes_on_uav()
            if u is not None:
                req[u].add(st.tasks[k].service_id)
        return req

    def delay_of(tv: _TaskVars, r: Route) -> float:
        u = r.executes_on_uav()
        fill = u is not None and not inst.zprev[u, st.tasks[tv.isd].service_id]
        return inst.route_delay(tv, r, fill)

    def options_fitting(tv: _TaskVars, req: dict[int, set[int]],
                        exclude_uav: int | None = None):
        """Candidate (route, delay) pairs whose cache rows stay within
        capacity if tv moved there."""
        out = []
        if tv.local_s is not None:
            out.append((Route(LOCAL), tv.local_s))
        s = st.tasks[tv.isd].service_id
        for r in tv.routes:
            u = r.executes_on_uav()
            if u is None:
                out.append((r, delay_of(tv, r)))
                continue
            if exclude_uav is not None and u == exclude_uav:
                continue
            if len(req[u] | {s}) <= sc.uavs[u].cache_slots:
                out.append((r, delay_of(tv, r)))
        return out

    def pick(options):
        return min(options,
                   key=lambda rc: (rc[1], _ROUTE_RANK[rc[0].kind],
                                   -1 if rc[0].target is None
                                   else rc[0].target))

    # 1) cache capacity: displace least-regret tasks off overloaded rows
    for _ in range(3 * len(inst.tasks) + 3):
        req = required()
        over = next((u for u in range(sc.uav_count)
                     if len(req[u]) > sc.uavs[u].cache_slots), None)
        if over is None:
            break
        move = None   # (regret, isd, route)
        for k in sorted(k for k, r in routes.items()
                        if r.executes_on_uav() == over):
            tv = by_isd[k]
            opts = options_fitting(tv, req, exclude_uav=over)
            if not opts:
                continue
            r_new, d_new = pick(opts)
            regret = d_new - delay_of(tv, routes[k])
            if move is None or (regret, k) < (move[0], move[1]):
                move = (regret, k, r_new)
        if move is None:
            # no candidate had a fitting alternative; the macro station
            # takes the overflow (never needs a cache slot)
            forced = False
            for k in sorted(k for k, r in routes.items()
                            if r.executes_on_uav() == over):
                tv = by_isd[k]
                mbs = next((r for r in tv.routes if r.kind == MBS), None)
                if mbs is not None:
                    routes[k] = mbs
                    forced = True
                    break
                if tv.local_s is not None:
                    routes[k] = Route(LOCAL)
                    forced = True
                    break
            if not forced:
                break
            continue
        routes[move[1]] = move[2]

    # 2) deadlines, worst violation first, never re-crowding a cache row
    for _ in range(3 * len(inst.tasks) + 3):
        req = required()
        worst_k, worst_e = None, 1e-12
        for tv in inst.tasks:
            if tv.isd in hopeless:
                continue
            e = delay_of(tv, routes[tv.isd]) - st.tasks[tv.isd].deadline_s
            if e > worst_e:
                worst_k, worst_e = tv.isd, e
        if worst_k is None:
            break
        tv = by_isd[worst_k]
        opts = options_fitting(tv, req)
        meeting = [(r, d) for r, d in opts
                   if d <= st.tasks[worst_k].deadline_s]
        if meeting:
            routes[worst_k] = pick(meeting)[0]
        else:
            if opts:
                routes[worst_k] = pick(opts)[0]
            hopeless.append(worst_k)

    # 3) cache contents: required services plus the most popular previous
    # entries that still fit
    out = _cache_for(inst, required())
    return routes, out, hopeless


def _cache_for(inst: Sp1Instance, req: dict[int, set[int]]) -> np.ndarray:
    """Cache rows holding the required services, topped up with the most
    popular previous contents still fitting."""
    sc = inst.scenario
    pop = sc.services.popularity
    out = np.zeros_like(inst.zprev, dtype=bool)
    for u in range(sc.uav_count):
        keep = sorted(req.get(u, set()))
        prev = [s for s in np.flatnonzero(inst.zprev[u]) if s not in keep]
        prev.sort(key=lambda s: (-pop[s], s))
        room = sc.uavs[u].cache_slots - len(keep)
        for s in keep + prev[:max(0, room)]:
            out[u, s] = True
    return out


def _polish(inst: Sp1Instance, routes: dict[int, Route],
            max_sweeps: int = 8) -> tuple[dict[int, Route], np.ndarray]:
    """Deterministic single-move descent on the binary assignment: move one
    task to another cache-feasible option when that lowers (late-task
    count, objective) lexicographically. Rounds the relaxation's local
    stationary points off the occasional poor corner."""
    sc, st = inst.scenario, inst.state
    by_isd = {tv.isd: tv for tv in inst.tasks}

    def required(rt: dict[int, Route]) -> dict[int, set[int]]:
        req: dict[int, set[int]] = {u: set() for u in range(sc.uav_count)}
        for k, r in rt.items():
            u = r.executes_on_uav()
            if u is not None:
                req[u].add(st.tasks[k].service_id)
        return req

    def score(rt: dict[int, Route]) -> tuple[int, float, np.ndarray]:
        cache = _cache_for(inst, required(rt))
        obj = inst.objective_of(rt, cache)
        late = 0
        for tv in inst.tasks:
            r = rt[tv.isd]
            u = r.executes_on_uav()
            fill = u is not None and not inst.zprev[u,
                                                   st.tasks[tv.isd].service_id]
            if inst.route_delay(tv, r, fill) \
                    > st.tasks[tv.isd].deadline_s + 1e-9:
                late += 1
        return late, obj, cache

    def feasible(rt: dict[int, Route]) -> bool:
        req = required(rt)
        return all(len(req[u]) <= sc.uavs[u].cache_slots for u in req)

    def all_options(tv: _TaskVars):
        options = list(tv.routes)
        if tv.local_s is not None:
            options.append(Route(LOCAL))
        return options

    cur = dict(routes)
    late, obj, cache = score(cur)
    for _ in range(max_sweeps):
        improved = False
        for k in sorted(cur):
            tv = by_isd[k]
            for r in all_options(tv):
                if r == cur[k]:
                    continue
                cand = dict(cur)
                cand[k] = r
                if not feasible(cand):
                    continue
                c_late, c_obj, c_cache = score(cand)
                if (c_late, c_obj) < (late, obj - 1e-12):
                    cur, late, obj, cache = cand, c_late, c_obj, c_cache
                    improved = True
        if improved:
            continue
        # exchange move: a task blocked out of a full cache row displaces
        # one of the row's current holders to that holder's best other spot
        for k_in in sorted(cur):
            tv_in = by_isd[k_in]
            req = required(cur)
            for r_in in tv_in.routes:
                u = r_in.executes_on_uav()
                if u is None or cur[k_in].executes_on_uav() == u:
                    continue
                s_in = st.tasks[k_in].service_id
                if len(req[u] | {s_in}) <= sc.uavs[u].cache_slots:
                    continue   # a single move already covers this
                holders = sorted(t for t, r in cur.items()
                                 if r.executes_on_uav() == u and t != k_in)
                for k_out in holders:
                    tv_out = by_isd[k_out]
                    for r_out in all_options(tv_out):
                        if r_out.executes_on_uav() == u:
                            continue
                        cand = dict(cur)
                        cand[k_in] = r_in
                        cand[k_out] = r_out
                        if not feasible(cand):
                            continue
                        c_late, c_obj, c_cache = score(cand)
                        if (c_late, c_obj) < (late, obj - 1e-12):
                            cur, late, obj, cache = (cand, c_late, c_obj,
                                                     c_cache)
                            improved = True
                            break
                    if improved:
                        break
                if improved:
                    break
            if improved:
                break
        if not improved:
            break
    return cur, cache


# ---------------------------------------------------------------------------
# full solve

@dataclass
class SolverReport:
    solver: str
    status: str
    iterations: int = 0
    objective_trace: list = field(default_factory=list)
    delta_trace: list = field(default_factory=list)      # |L change| per cycle
    residual_trace: list = field(default_factory=list)   # feasibility residual
    gap: float | None = None
    violations: tuple | None = None
    accepted: bool = True
    infeasible_tasks: list = field(default_factory=list)


@dataclass
class Sp1Result:
    routes: dict[int, Route]
    cache: np.ndarray
    relaxed: np.ndarray
    report: SolverReport
    multipliers: Multipliers | None = None


def solve_sp1(inst: Sp1Instance, params: Sp1Params | None = None,
              warm: Decision | None = None,
              warm_point: np.ndarray | None = None,
              warm_mult: Multipliers | None = None) -> Sp1Result:
    """Run the block-coordinate multiplier method on the relaxed instance,
    then round, repair, and score the binary solution. A warm point and
    multipliers from a structurally identical previous solve shortcut the
    early cycles."""
    params = params or Sp1Params()
    if not inst.tasks:
        report = SolverReport(solver="offload-cache", status="empty", gap=1.0,
                              violations=(0.0, 0.0, 0.0))
        return Sp1Result(routes={}, cache=inst.zprev.astype(bool),
                         relaxed=np.zeros(inst.nvar), report=report)

    if warm_point is not None and warm_point.shape == (inst.nvar,):
        v = np.clip(np.asarray(warm_point, dtype=float), inst.lb, inst.ub)
    elif warm is not None:
        v = inst.initial_point(warm)
    else:
        v = inst.greedy_point()
    if warm_mult is not None and warm_mult.mu.shape == (len(inst.h_rows),) \
            and warm_mult.lam.shape == (len(inst.g_rows),):
        mult = Multipliers(mu=warm_mult.mu.copy(),
                           lam=np.maximum(0.0, warm_mult.lam.copy()))
    else:
        mult = zero_multipliers(inst)
    sigma = params.penalty_sigma
    report = SolverReport(solver="offload-cache", status="stalled")
    l_prev = lagrangian_value(inst, v, mult, sigma)
    rowvals = (inst.h_values(v), inst.g_values(v))
    frozen = 0
    best_o2 = math.inf
    best_l = math.inf
    for it in range(params.max_iters):
        for bi in range(len(inst.blocks)):
            v = block_minimize(inst, bi, v, mult, params, rowvals=rowvals)
        # refresh the incrementally tracked row values once per cycle
        h = inst.h_values(v)
        g = inst.g_values(v)
        rowvals[0][:] = h
        rowvals[1][:] = g
        l_now = inst.objective(v) + penalty_from_rows(h, g, mult, sigma)
        omega1 = abs(l_now - l_prev)
        l_prev = l_now
        mult = update_multipliers(mult, v, inst, sigma, h=h, g=g)
        omega2 = residual(inst, v, mult, sigma, h=h, g=g)
        report.objective_trace.append(l_now)
        report.delta_trace.append(omega1)
        report.residual_trace.append(omega2)
        report.iterations = it + 1
        if omega1 <= params.eps1 and omega2 <= params.eps2:
            report.status = "converged"
            break
        # give up honestly once neither the residual nor the Lagrangian
        # value has improved for a while (subgradient steps cannot resolve
        # a kink the block minimum sits on; the multipliers just ramp)
        improved = False
        if omega2 < best_o2 - 1e-5:
            best_o2 = omega2
            improved = True
        if l_now < best_l - 0.1 * params.eps1:
            best_l = l_now
            improved = True
        frozen = 0 if improved else frozen + 1
        if frozen >= 12:
            break

    rounded = round_and_gap(inst, v, params)
    routes, cache = rounded.routes, rounded.cache
    hopeless = list(inst.deadline_unmeetable)
    if rounded.gap < 1.0:
        routes, cache, hopeless = _repair(inst, routes, cache, v)
    routes, cache = _polish(inst, routes)
    deltas = _deltas(inst, routes, cache, skip_deadline=set(hopeless))
    if sum(deltas) > 0.0 and inst.allow_local:
        # final guard: all-local is always cache- and route-feasible
        routes = {tv.isd: Route(LOCAL) for tv in inst.tasks}
        cache = inst.zprev.astype(bool)
        deltas = _deltas(inst, routes, cache, skip_deadline=set(hopeless))
        report.status = "fallback"
    gap = integrality_gap(rounded.relaxed_objective, deltas,
                          params.gap_weight)
    report.gap = gap
    report.violations = deltas
    report.infeasible_tasks = sorted(hopeless)
    report.accepted = (gap >= 1.0 and not hopeless)
    return Sp1Result(routes=routes, cache=cache, relaxed=v, report=report,
                     multipliers=mult)
