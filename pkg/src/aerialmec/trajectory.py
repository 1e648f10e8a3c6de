"""Per-slot UAV placement by successive convex approximation.

Each transmission rate is concave-bounded from below by its first-order
Taylor expansion in the squared sender-receiver distance; the surrogate
task delays (reciprocals of those bounds plus fixed compute terms) form a
convex objective over the intersection of per-UAV reachability balls and
linearized pairwise-separation half-spaces. The inner solve is projected
gradient descent with a spectral step, a log-barrier keeping every rate
bound positive, and an exterior penalty on surrogate deadline excess; the
outer loop re-anchors until the surrogate objective stalls.

Because every bound touches the true rate at its anchor and sits below it
everywhere, accepted iterates can only lower the true total delay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (ISD_UAV, LOCAL, LOG2E, MBS, PEER, UAV_MBS, UAV_UAV,
                    Decision, Scenario, SlotState, max_speed_within)
from .offloading import SolverReport


@dataclass
class Sp3Params:
    outer_iters: int = 30
    inner_steps: int = 300
    epsilon: float = 1e-3
    deadline_penalty: float = 100.0
    barrier_weight: float = 1e-6
    pocs_sweeps: int = 12
    energy_reserve_j: float = 5.0


@dataclass(frozen=True)
class LinkBound:
    """Taylor anchor of one link's rate in its squared distance."""
    kind: str
    uav: int
    other: int | None          # peer UAV for inter links
    point: np.ndarray | None   # fixed far endpoint (ISD or MBS)
    h2: float                  # squared vertical separation
    theta_bw: float            # theta * band, bits/s per log2 unit
    gamma: float               # tx power * beta0 / noise
    rate_anchor: float
    grad_anchor: float         # d rate / d (squared distance), negative
    d2_anchor: float


@dataclass
class TaylorAnchor:
    positions: np.ndarray
    links: list[LinkBound]


def rate_gradient(theta_bw: float, gamma: float, d2: float, h2: float) -> float:
    """Closed-form derivative of theta*B*log2(1 + gamma/(d2+h2)) in d2."""
    s = d2 + h2
    return -theta_bw * gamma * LOG2E / (s * (s + gamma))


def make_bound(kind: str, uav: int, anchor_positions: np.ndarray,
               scenario: Scenario, theta: float, other: int | None = None,
               point=None, isd: int | None = None) -> LinkBound:
    sc = scenario
    q = anchor_positions
    tx_uav = sc.uavs[uav]
    if kind == ISD_UAV:
        p = sc.isds[isd].position_m
        h2 = tx_uav.altitude_m ** 2
        bw = sc.radio.bw_access_hz
        power = sc.isds[isd].tx_power_w
        d2 = float(np.sum((q[uav] - p) ** 2))
        fixed = p
    elif kind == UAV_UAV:
        h2 = 0.0
        bw = sc.radio.bw_inter_uav_hz
        power = tx_uav.tx_power_w
        d2 = float(np.sum((q[uav] - q[other]) ** 2))
        fixed = None
    else:
        p = sc.mbs.position_m
        h2 = (tx_uav.altitude_m - sc.mbs.height_m) ** 2
        bw = sc.radio.bw_backhaul_hz
        power = tx_uav.tx_power_w
        d2 = float(np.sum((q[uav] - p) ** 2))
        fixed = p
    gamma = power * sc.radio.beta0 / sc.radio.noise_w
    theta_bw = theta * bw
    rate = theta_bw * math.log2(1.0 + gamma / (d2 + h2))
    grad = rate_gradient(theta_bw, gamma, d2, h2)
    return LinkBound(kind=kind, uav=uav, other=other, point=fixed, h2=h2,
                     theta_bw=theta_bw, gamma=gamma, rate_anchor=rate,
                     grad_anchor=grad, d2_anchor=d2)


def link_squared_distance(link: LinkBound, positions: np.ndarray) -> float:
    if link.kind == UAV_UAV:
        return float(np.sum((positions[link.uav] - positions[link.other]) ** 2))
    return float(np.sum((positions[link.uav] - link.point) ** 2))


def rate_lower_bound(link: LinkBound, positions: np.ndarray) -> float:
    """Global lower bound of the link rate at candidate positions, exact at
    the anchor. May go nonpositive far from the anchor; callers treat that
    as an infeasible marker."""
    d2 = link_squared_distance(link, positions)
    return link.rate_anchor + link.grad_anchor * (d2 - link.d2_anchor)


def true_rate(link: LinkBound, positions: np.ndarray) -> float:
    d2 = link_squared_distance(link, positions)
    return link.theta_bw * math.log2(1.0 + link.gamma / (d2 + link.h2))


def linearized_separation(q_u, q_v, anchor_u, anchor_v, dmin: float) -> float:
    """Signed slack of the linearized pairwise-separation constraint;
    nonnegative slack implies the true squared distance clears dmin^2."""
    a = np.asarray(anchor_u, dtype=float) - np.asarray(anchor_v, dtype=float)
    n2 = float(a @ a)
    if n2 <= 0.0:
        raise ValueError("coincident anchors: separation normal degenerate")
    d = np.asarray(q_u, dtype=float) - np.asarray(q_v, dtype=float)
    return 2.0 * float(a @ d) - n2 - dmin * dmin


# ---------------------------------------------------------------------------
# anchored problem assembly

@dataclass
class _SurrogateTerms:
    links: list[LinkBound]
    term_link: np.ndarray     # term index -> link index
    term_w: np.ndarray        # bits carried by the term
    task_ptr: np.ndarray      # CSR-style boundaries into the term arrays
    task_const: np.ndarray    # compute + fill seconds per covered task
    task_deadline: np.ndarray
    skipped_s: float          # delay of offloaded tasks the surrogate skips


def build_anchor(scenario: Scenario, state: SlotState, decision: Decision,
                 positions: np.ndarray) -> tuple[TaylorAnchor, _SurrogateTerms]:
    """Anchor every active link at the given positions and lay the per-task
    surrogate delay terms over them. Tasks riding a zero-bandwidth hop have
    no usable surrogate and are skipped (their delay cannot be reduced by
    motion when no band is assigned)."""
    sc = scenario
    q = np.asarray(positions, dtype=float)
    links: list[LinkBound] = []
    index: dict[tuple, int] = {}
    fill_s = sc.radio.content_size_bits / sc.radio.backhaul_avg_bps

    def link_id(key, maker) -> int | None:
        if key in index:
            return index[key]
        lb = maker()
        if lb.theta_bw <= 0.0:
            return None
        index[key] = len(links)
        links.append(lb)
        return index[key]

    term_link: list[int] = []
    term_w: list[float] = []
    ptr = [0]
    consts: list[float] = []
    deadlines: list[float] = []
    skipped = 0.0
    for k in sorted(decision.routes):
        r = decision.routes[k]
        if r.kind == LOCAL:
            continue
        task = state.tasks[k]
        hu = int(sc.home[k])
        d = task.size_bits
        ids = []
        li = link_id(("acc", k), lambda: make_bound(
            ISD_UAV, hu, q, sc, decision.theta_access.get(k, 0.0), isd=k))
        ids.append(li)
        if r.kind == PEER:
            v = int(r.target)
            ids.append(link_id(("int", hu, v), lambda: make_bound(
                UAV_UAV, hu, q, sc, decision.theta_inter.get((hu, v), 0.0),
                other=v)))
        elif r.kind == MBS:
            ids.append(link_id(("mbs", hu), lambda: make_bound(
                UAV_MBS, hu, q, sc, decision.theta_mbs.get(hu, 0.0))))
        const = 0.0
        exec_uav = r.executes_on_uav()
        if exec_uav is not None and not state.prev_cache[exec_uav, task.service_id]:
            const += fill_s
        f = decision.cpu_alloc_hz.get(k, 0.0)
        const += d * task.density / f if f > 0.0 else math.inf
        if any(i is None for i in ids) or math.isinf(const):
            skipped += math.inf if math.isinf(const) else 0.0
            continue
        for i in ids:
            term_link.append(i)
            term_w.append(d)
        ptr.append(len(term_link))
        consts.append(const)
        deadlines.append(task.deadline_s)

    terms = _SurrogateTerms(links=links, term_link=np.array(term_link, int),
                            term_w=np.array(term_w), task_ptr=np.array(ptr, int),
                            task_const=np.array(consts),
                            task_deadline=np.array(deadlines),
                            skipped_s=skipped)
    return TaylorAnchor(positions=q.copy(), links=links), terms


class _Surrogate:
    """Vectorized surrogate objective and gradient over UAV positions."""

    def __init__(self, terms: _SurrogateTerms, params: Sp3Params, nuav: int):
        self.t = terms
        self.params = params
        self.nuav = nuav
        L = terms.links
        self.fix_i = np.array([i for i, l in enumerate(L) if l.kind != UAV_UAV], int)
        self.pair_i = np.array([i for i, l in enumerate(L) if l.kind == UAV_UAV], int)
        self.fix_u = np.array([L[i].uav for i in self.fix_i], int)
        self.fix_p = (np.array([L[i].point for i in self.fix_i])
                      if self.fix_i.size else np.zeros((0, 2)))
        self.pair_u = np.array([L[i].uav for i in self.pair_i], int)
        self.pair_v = np.array([L[i].other for i in self.pair_i], int)
        self.Ra = np.array([l.rate_anchor for l in L])
        self.Ga = np.array([l.grad_anchor for l in L])
        self.d2a = np.array([l.d2_anchor for l in L])

    def bounds(self, Q: np.ndarray) -> np.ndarray:
        d2 = np.zeros(len(self.t.links))
        if self.fix_i.size:
            diff = Q[self.fix_u] - self.fix_p
            d2[self.fix_i] = np.sum(diff * diff, axis=1)
        if self.pair_i.size:
            diff = Q[self.pair_u] - Q[self.pair_v]
            d2[self.pair_i] = np.sum(diff * diff, axis=1)
        return self.Ra + self.Ga * (d2 - self.d2a)

    def task_delays(self, rhat: np.ndarray) -> np.ndarray:
        vals = self.t.term_w / rhat[self.t.term_link]
        return np.add.reduceat(vals, self.t.task_ptr[:-1]) + self.t.task_const

    def value(self, Q: np.ndarray) -> float:
        rhat = self.bounds(Q)
        if np.any(rhat <= 0.0):
            return math.inf
        td = self.task_delays(rhat)
        val = float(td.sum())
        exc = np.maximum(td - self.t.task_deadline, 0.0)
        val += self.params.deadline_penalty * float(exc @ exc)
        val -= self.params.barrier_weight * float(np.sum(np.log(rhat / self.Ra)))
        return val

    def plain_objective(self, Q: np.ndarray) -> float:
        """Surrogate total delay without penalty or barrier terms."""
        rhat = self.bounds(Q)
        if np.any(rhat <= 0.0):
            return math.inf
        return float(self.task_delays(rhat).sum())

    def true_objective(self, Q: np.ndarray) -> float:
        """Same delay terms under the exact rate expressions."""
        rates = np.array([true_rate(l, Q) for l in self.t.links])
        if np.any(rates <= 0.0):
            return math.inf
        vals = self.t.term_w / rates[self.t.term_link]
        td = np.add.reduceat(vals, self.t.task_ptr[:-1]) + self.t.task_const
        return float(td.sum())

    def gradient(self, Q: np.ndarray) -> np.ndarray:
        rhat = self.bounds(Q)
        td = self.task_delays(rhat)
        exc = np.maximum(td - self.t.task_deadline, 0.0)
        # d value / d task-delay, then push onto each term's link
        dtask = 1.0 + 2.0 * self.params.deadline_penalty * exc
        ntasks = td.shape[0]
        reps = np.diff(self.t.task_ptr)
        term_scale = np.repeat(dtask[:ntasks], reps)
        dlink = np.zeros(len(self.t.links))
        np.add.at(dlink, self.t.term_link,
                  term_scale * (-self.t.term_w / rhat[self.t.term_link] ** 2))
        dlink -= self.params.barrier_weight / rhat
        # chain through d rhat / d q
        grad = np.zeros((self.nuav, 2))
        if self.fix_i.size:
            w = (dlink[self.fix_i] * self.Ga[self.fix_i])[:, None]
            np.add.at(grad, self.fix_u, 2.0 * w * (Q[self.fix_u] - self.fix_p))
        if self.pair_i.size:
            w = (dlink[self.pair_i] * self.Ga[self.pair_i])[:, None]
            diff = Q[self.pair_u] - Q[self.pair_v]
            np.add.at(grad, self.pair_u, 2.0 * w * diff)
            np.add.at(grad, self.pair_v, -2.0 * w * diff)
        return grad


def _project(Q: np.ndarray, centers: np.ndarray, radii: np.ndarray,
             anchors: np.ndarray, dmin: float, sweeps: int) -> np.ndarray:
    """Alternating projections onto the reachability balls and the
    linearized separation half-spaces. Scalar math: the arrays are tiny and
    this sits inside the line search."""
    U = Q.shape[0]
    d2min = dmin * dmin
    qx = [float(Q[u, 0]) for u in range(U)]
    qy = [float(Q[u, 1]) for u in range(U)]
    cx = [float(centers[u, 0]) for u in range(U)]
    cy = [float(centers[u, 1]) for u in range(U)]
    ax = [[float(anchors[u, 0] - anchors[v, 0]) for v in range(U)]
          for u in range(U)]
    ay = [[float(anchors[u, 1] - anchors[v, 1]) for v in range(U)]
          for u in range(U)]
    for _ in range(sweeps):
        moved = False
        for u in range(U):
            dx = qx[u] - cx[u]
            dy = qy[u] - cy[u]
            nrm = math.sqrt(dx * dx + dy * dy)
            if nrm > radii[u]:
                s = radii[u] / nrm
                qx[u] = cx[u] + dx * s
                qy[u] = cy[u] + dy * s
                moved = True
        for u in range(U):
            for v in range(u + 1, U):
                nx, ny = ax[u][v], ay[u][v]
                n2 = nx * nx + ny * ny
                if n2 <= 0.0:
                    continue
                slack = 2.0 * (nx * (qx[u] - qx[v]) + ny * (qy[u] - qy[v])) \
                    - n2 - d2min
                if slack < 0.0:
                    t = -slack / (8.0 * n2)
                    qx[u] += 2.0 * t * nx
                    qy[u] += 2.0 * t * ny
                    qx[v] -= 2.0 * t * nx
                    qy[v] -= 2.0 * t * ny
                    moved = True
        if not moved:
            break
    return np.column_stack((qx, qy))


def _separation_ok(Q: np.ndarray, anchors: np.ndarray, dmin: float,
                   tol: float = 1e-7) -> bool:
    U = Q.shape[0]
    for u in range(U):
        for v in range(u + 1, U):
            a = anchors[u] - anchors[v]
            n2 = float(a @ a)
            if n2 <= 0.0:
                return False
            if 2.0 * float(a @ (Q[u] - Q[v])) - n2 - dmin * dmin < -tol:
                return False
    return True


def speed_limits(scenario: Scenario, params: Sp3Params) -> np.ndarray:
    """Per-UAV speed cap: the configured maximum, tightened so one slot of
    propulsion stays inside the energy budget less a compute/tx reserve."""
    caps = np.zeros(scenario.uav_count)
    for u, uav in enumerate(scenario.uavs):
        budget_w = (uav.energy_budget_j - params.energy_reserve_j) \
            / scenario.slot_len_s
        caps[u] = max_speed_within(budget_w, uav.propulsion, scenario.vmax_mps)
    return caps


def solve_sp3(scenario: Scenario, state: SlotState, decision: Decision,
              params: Sp3Params | None = None
              ) -> tuple[np.ndarray, SolverReport]:
    """Re-anchor, minimize the surrogate over the feasible set, repeat. The
    returned positions satisfy the true velocity and separation constraints
    or fall back to holding the slot-start positions."""
    params = params or Sp3Params()
    report = SolverReport(solver="trajectory", status="converged")
    sc = scenario
    centers = state.uav_positions
    radii = speed_limits(sc, params) * sc.slot_len_s
    Q = np.asarray(decision.positions, dtype=float).copy()

    g_prev = None
    for outer in range(params.outer_iters):
        _, terms = build_anchor(sc, state, decision, Q)
        if terms.task_ptr.size <= 1:
            report.status = "no-op" if outer == 0 else report.status
            break
        sur = _Surrogate(terms, params, sc.uav_count)
        anchors = Q.copy()
        fval = sur.value(Q)
        step = 1.0
        prev = None
        for _ in range(params.inner_steps):
            grad = sur.gradient(Q)
            if prev is not None:
                dx = Q - prev[0]
                dg = grad - prev[1]
                den = float(np.sum(dx * dg))
                num = float(np.sum(dx * dx))
                step = min(max(num / den, 1e-10), 1e8) if den > 1e-18 \
                    else min(step * 2.0, 1e8)
            prev = (Q.copy(), grad.copy())
            improved = False
            while step > 1e-16:
                cand = _project(Q - step * grad, centers, radii, anchors,
                                sc.dmin_m, params.pocs_sweeps)
                if _separation_ok(cand, anchors, sc.dmin_m):
                    fn = sur.value(cand)
                    if fn < fval - 1e-12:
                        Q, fval = cand, fn
                        improved = True
                        break
                step *= 0.5
            if not improved:
                break
        g_now = sur.plain_objective(Q)
        report.objective_trace.append(g_now)
        report.iterations = outer + 1
        if g_prev is not None and abs(g_prev - g_now) < params.epsilon:
            break
        g_prev = g_now
    else:
        if report.objective_trace:
            report.status = "stalled"

    # safety: never emit a step or spacing the true constraints reject
    ok = True
    for u in range(sc.uav_count):
        if float(np.linalg.norm(Q[u] - centers[u])) > radii[u] + 1e-6:
            ok = False
    for u in range(sc.uav_count):
        for v in range(u + 1, sc.uav_count):
            if float(np.linalg.norm(Q[u] - Q[v])) < sc.dmin_m - 1e-6:
                ok = False
    if not ok:
        report.status = "held"
        Q = centers.copy()
    return Q, report
