"""Discrete-event engine for the load / image / rearrange cycle, plus an analytic steady state.

Losses are Bernoulli draws per atom per phase. Only target-array atoms enter
the loss ledger; reservoir atoms are refreshed every cycle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .imaging import error_rates, sample_counts, classify
from .losses import (AlignmentState, handoff_legs, rearrangement_tweezer_response,
                     target_handoff_state, vacuum_survival)
from .params import config_hash, config_to_dict
from .rearrange import (OccupancyGrid, execute_plan, identify_vacancies, move_path,
                        path_length, plan_moves, schedule)
from .thermal import ThermalState, apply_cooling, apply_heating

LOSS_KEYS = ("vacuum", "handoff", "imaging_vacuum", "imaging_raman", "collision", "disturbance")
BURN_IN = 5
FILL_GOAL = 0.99


# ------------------------------------------------------------------ records

@dataclass
class CycleRecord:
    iteration: int
    pre_rearr_atoms: int
    pre_rearr_fill: float
    reservoir_atoms: int
    reservoir_detected: int
    moves: int
    transfers_in: int
    plan_duration_ms: float
    cycle_duration_ms: float
    atoms_start: int
    atoms_end: int
    true_pre_fill: float
    true_post_fill: float
    nbar_handoff: tuple
    losses_by_mechanism: dict
    post_rearr_atoms: int | None = None
    post_rearr_fill: float | None = None

    def balanced(self) -> bool:
        return self.atoms_end - self.atoms_start == self.transfers_in - sum(self.losses_by_mechanism.values())

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["nbar_handoff"] = list(self.nbar_handoff)
        return d


@dataclass
class RunRecord:
    config: object
    seed: int
    mode: str
    cycles: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def header(self) -> dict:
        return {"type": "header", "config_hash": config_hash(self.config), "seed": self.seed,
                "mode": self.mode, "config": config_to_dict(self.config)}

    def to_jsonl(self) -> str:
        lines = [self.header()]
        lines += [{"type": "cycle", **c.to_dict()} for c in self.cycles]
        lines.append({"type": "summary", **self.summary})
        return "".join(json.dumps(x, sort_keys=True) + "\n" for x in lines)

    def to_csv(self) -> str:
        out = [f"# config_hash={config_hash(self.config)} seed={self.seed} mode={self.mode}",
               "iteration,pre_fill,post_fill,atoms"]
        for c in self.cycles:
            post = "" if c.post_rearr_fill is None else repr(c.post_rearr_fill)
            out.append(f"{c.iteration},{c.pre_rearr_fill!r},{post},{c.pre_rearr_atoms}")
        return "\n".join(out) + "\n"


# ------------------------------------------------------------------- phases

def reservoir_fill_probability(config, mot_ms: float) -> float:
    collected = config.mot_load_rate_per_s * mot_ms * 1e-3 * config.transport_survival
    return config.lac_fill_probability * min(1.0, collected / config.reservoir_saturation_atoms)


def fill_reservoir(config, rng: np.random.Generator, mot_ms: float | None = None) -> np.ndarray:
    """Fresh reservoir occupancy; each site 0 or 1 atom after light-assisted collisions."""
    mot = config.timings.mot_load_ms if mot_ms is None else mot_ms
    if mot < 0:
        raise ValueError("MOT duration must be >= 0")
    return rng.random(config.reservoir_sites) < reservoir_fill_probability(config, mot)


@dataclass
class SimState:
    grid: OccupancyGrid
    iteration: int = 0
    target_spin: np.ndarray | None = None


def _survive(occ, p, rng):
    """Bernoulli survival of occupied sites; returns (new occ, number lost)."""
    if p >= 1.0:
        return occ, 0
    lost = occ & (rng.random(occ.size) >= p)
    return occ & ~lost, int(lost.sum())


def _image(occ, spin, model, rng):
    """Image an array of sites in the lattice. Returns calls, new occ, losses, new spin."""
    bright = occ if model.mode == "occupancy" else occ & (spin > 0)
    calls = classify(sample_counts(bright, model, rng), model.threshold)
    u = rng.random(occ.size)
    lost = occ & (u < model.loss_per_image)
    vac = lost & (u < model.loss_per_image * model.vacuum_fraction_of_loss)
    occ = occ & ~lost
    if model.mode == "spin_selective":
        flip = occ & (rng.random(occ.size) < model.spin_flip_probability)
        spin = np.where(flip, -spin, spin)
    return calls, occ, int(vac.sum()), int((lost & ~vac).sum()), spin


class _Legs(NamedTuple):
    target_in: np.ndarray
    target_out: np.ndarray
    reservoir_in: float
    reservoir_out: float
    state: ThermalState


def _handoff_legs(config, grid) -> _Legs:
    lp, th = config.losses, config.thermal
    state = apply_heating(target_handoff_state(th), config.timings.handoff_ms,
                          th.heating_time_constant_ms)
    drift = AlignmentState(lp.alignment_drift_um, 0.0, lp.lattice_period_um)
    legs = {w: handoff_legs(lp.target_depth_fraction, w, state, drift, lp) for w in (459, 423)}
    t_in = np.where(grid.target_zone == 459, legs[459][0], legs[423][0])
    t_out = np.where(grid.target_zone == 459, legs[459][1], legs[423][1])
    r_in, r_out = handoff_legs(lp.reservoir_depth_uK / lp.target_depth_nominal_uK, 459, state,
                               AlignmentState(0.0, 0.0, lp.lattice_period_um), lp)
    return _Legs(t_in, t_out, r_in, r_out, state)


def _leg(occ, p, rng):
    if np.isscalar(p):
        return _survive(occ, p, rng)
    lost = occ & (rng.random(occ.size) >= p)
    return occ & ~lost, int(lost.sum())


def run_cycle(state: SimState, config, rng: np.random.Generator, diagnostic_image: bool = False):
    """Advance one full cycle in place and return its record."""
    tm, im = config.timings, config.imaging
    grid = state.grid
    state.iteration += 1
    if state.target_spin is None:
        state.target_spin = np.full(grid.n_targets, 0.5)
    losses = dict.fromkeys(LOSS_KEYS, 0)
    start = int(grid.target_occ.sum())
    legs = _handoff_legs(config, grid)
    life = config.vacuum_lifetime_s
    duration = 0.0

    # (1) reservoir: MOT, transport, tweezer ramp, galvo, settle
    first = state.iteration == 1
    grid.reservoir_occ = fill_reservoir(config, rng)
    res_atoms = int(grid.reservoir_occ.sum())
    dt = tm.transport_ms + tm.tweezer_ramp_ms + tm.galvo_translate_ms + tm.settle_ms
    duration += dt + (tm.mot_load_ms if first else 0.0)
    grid.target_occ, n = _survive(grid.target_occ, vacuum_survival(dt, life), rng)
    losses["vacuum"] += n
    grid.reservoir_occ, _ = _survive(grid.reservoir_occ, vacuum_survival(dt, life), rng)

    # (2) handoff into the lattice and image
    grid.target_occ, n = _leg(grid.target_occ, legs.target_in, rng)
    losses["handoff"] += n
    grid.reservoir_occ, _ = _leg(grid.reservoir_occ, legs.reservoir_in, rng)
    true_pre = grid.fill()
    t_calls, grid.target_occ, nv, nr, state.target_spin = _image(grid.target_occ, state.target_spin, im, rng)
    losses["imaging_vacuum"] += nv
    losses["imaging_raman"] += nr
    res_spin = np.full(grid.reservoir_occ.size, 0.5)
    r_calls, grid.reservoir_occ, _, _, _ = _image(grid.reservoir_occ, res_spin, im, rng)
    duration += 2 * tm.handoff_ms + im.duration_ms

    # cooling, then back into the tweezers
    dt = tm.doppler_ms + tm.rsc_total_ms
    duration += dt
    grid.target_occ, n = _survive(grid.target_occ, vacuum_survival(dt, life), rng)
    losses["vacuum"] += n
    grid.reservoir_occ, _ = _survive(grid.reservoir_occ, vacuum_survival(dt, life), rng)
    grid.target_occ, n = _leg(grid.target_occ, legs.target_out, rng)
    losses["handoff"] += n
    grid.reservoir_occ, _ = _leg(grid.reservoir_occ, legs.reservoir_out, rng)

    # (3) rearrange from the image calls
    vac, src = identify_vacancies(grid, t_calls, r_calls)
    plan = plan_moves(grid, src, vac, config.planner.policy, config.losses.proximity_distance_um, t_calls)
    plan = schedule(plan, config.planner, tm.rearrange_fixed_overhead_ms)
    result = execute_plan(plan, grid, config, rng)
    for k, v in result.losses.items():
        losses[k] += v
    duration += plan.total_duration_ms
    # placed atoms come from freshly pumped reservoir atoms
    state.target_spin = np.where(grid.target_occ & ~np.isin(np.arange(grid.n_targets), vac),
                                 state.target_spin, 0.5)
    true_post = grid.fill()

    post_atoms = post_fill = None
    if diagnostic_image:
        grid.target_occ, n = _leg(grid.target_occ, legs.target_in, rng)
        losses["handoff"] += n
        calls, grid.target_occ, nv, nr, state.target_spin = _image(grid.target_occ, state.target_spin, im, rng)
        losses["imaging_vacuum"] += nv
        losses["imaging_raman"] += nr
        dt = tm.doppler_ms + tm.rsc_total_ms
        grid.target_occ, n = _survive(grid.target_occ, vacuum_survival(dt, life), rng)
        losses["vacuum"] += n
        grid.target_occ, n = _leg(grid.target_occ, legs.target_out, rng)
        losses["handoff"] += n
        duration += 2 * tm.handoff_ms + im.duration_ms + dt
        post_atoms = int(calls.sum())
        post_fill = post_atoms / grid.n_targets

    pre_atoms = int(t_calls.sum())
    rec = CycleRecord(
        iteration=state.iteration, pre_rearr_atoms=pre_atoms, pre_rearr_fill=pre_atoms / grid.n_targets,
        reservoir_atoms=res_atoms, reservoir_detected=int(r_calls.sum()), moves=len(plan),
        transfers_in=result.transfers_in, plan_duration_ms=plan.total_duration_ms,
        cycle_duration_ms=duration, atoms_start=start, atoms_end=int(grid.target_occ.sum()),
        true_pre_fill=true_pre, true_post_fill=true_post,
        nbar_handoff=(legs.state.nbar_x, legs.state.nbar_y, legs.state.nbar_z),
        losses_by_mechanism=losses, post_rearr_atoms=post_atoms, post_rearr_fill=post_fill)
    return state, rec


def initial_state(config, mode: str) -> SimState:
    grid = OccupancyGrid.from_config(config)
    if mode == "maintenance":
        grid.target_occ[:] = True
    elif mode != "loading":
        raise ValueError(f"unknown mode {mode!r}")
    return SimState(grid)


def run_simulation(config, n_cycles: int, mode: str = "loading", seed: int | None = None,
                   diagnostic_every: int = 0) -> RunRecord:
    """Iterate ``run_cycle``; a diagnostic image follows every ``diagnostic_every``-th rearrangement."""
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    seed = config.rng_seed if seed is None else seed
    rng = np.random.default_rng(seed)
    state = initial_state(config, mode)
    record = RunRecord(config, seed, mode)
    for k in range(1, n_cycles + 1):
        diag = diagnostic_every > 0 and k % diagnostic_every == 0
        state, rec = run_cycle(state, config, rng, diag)
        record.cycles.append(rec)
    record.summary = summarize(record)
    return record


# ------------------------------------------------------------------ summary

def _mean_sem(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return None, None
    sem = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), sem


def summarize(record: RunRecord) -> dict:
    cycles = record.cycles
    it = np.array([c.iteration for c in cycles])
    pre = np.array([c.pre_rearr_atoms for c in cycles], dtype=float)
    n_sites = record.config.target_sites

    slope = None
    early = pre / n_sites < 0.5
    if record.mode == "loading" and early.sum() >= 2:
        slope = float(np.polyfit(it[early], pre[early], 1)[0])

    to_fill = next((c.iteration for c in cycles if c.true_post_fill >= FILL_GOAL), None)
    if record.mode == "maintenance":
        start = BURN_IN
    else:
        start = to_fill if to_fill is not None else len(cycles)
    steady = cycles[start:]
    after_diag = {c.iteration + 1 for c in cycles if c.post_rearr_fill is not None}
    pre_m, pre_se = _mean_sem([c.pre_rearr_fill for c in steady if c.iteration not in after_diag])
    post_m, post_se = _mean_sem([c.post_rearr_fill for c in steady if c.post_rearr_fill is not None])

    totals = dict.fromkeys(LOSS_KEYS, 0)
    for c in cycles:
        for k, v in c.losses_by_mechanism.items():
            totals[k] += v
    # the two halves of imaging loss are one mechanism for ranking purposes
    dominant = None
    if any(totals.values()):
        dominant = max(LOSS_KEYS, key=lambda k: totals[k])
    return {
        "initial_slope_atoms_per_cycle": slope,
        "cycles_to_fill": to_fill,
        "steady_pre_fill": pre_m, "steady_pre_fill_sem": pre_se,
        "steady_post_fill": post_m, "steady_post_fill_sem": post_se,
        "mean_cycle_duration_ms": float(np.mean([c.cycle_duration_ms for c in cycles[1:] or cycles])),
        "loss_totals": totals,
        "dominant_loss": dominant,
        "bookkeeping_ok": all(c.balanced() for c in cycles),
    }


def render_summary(record: RunRecord) -> str:
    if not record.cycles:
        raise ValueError("empty record")
    s = record.summary or summarize(record)

    def fmt(m, se):
        return "n/a" if m is None else f"{m:.4f} +/- {se:.4f}"

    lines = [f"config {config_hash(record.config)}  seed {record.seed}  mode {record.mode}  "
             f"cycles {len(record.cycles)}"]
    slope = s["initial_slope_atoms_per_cycle"]
    lines.append("initial slope: " + ("n/a" if slope is None else f"{slope:.1f} atoms/cycle"))
    ctf = s["cycles_to_fill"]
    lines.append(f"cycles to {FILL_GOAL:.0%} fill: " + ("not reached" if ctf is None else str(ctf)))
    lines.append("steady-state pre-rearrangement fill: " + fmt(s["steady_pre_fill"], s["steady_pre_fill_sem"]))
    lines.append("steady-state post-rearrangement fill: " + fmt(s["steady_post_fill"], s["steady_post_fill_sem"]))
    lines.append(f"mean cycle duration: {s['mean_cycle_duration_ms']:.1f} ms")
    lines.append(f"dominant loss: {s['dominant_loss'] or 'none'}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------- analytic model

class CycleTiming(NamedTuple):
    duration_ms: float
    vacuum_exposed_ms: float
    plan_ms: float
    moves: float
    close_passes_per_atom: float


class SteadyState(NamedTuple):
    pre_fill: float
    post_fill: float
    supply_limited: bool
    expected_vacancies: float
    mean_supply: float
    plan_ms: float
    message: str


def _expected_move(config):
    """Mean path length and close passes of a move into a random target site.

    Each target draws its nearest occupied reservoir site, reservoir sites
    being independently occupied; competition between vacancies is ignored.
    """
    grid = OccupancyGrid.from_config(config)
    c = config.losses.proximity_distance_um
    p = reservoir_fill_probability(config, config.timings.mot_load_ms)
    if p <= 0:
        return 0.0, 0.0
    d = np.hypot(grid.target_xy[:, None, 0] - grid.reservoir_xy[None, :, 0],
                 grid.target_xy[:, None, 1] - grid.reservoir_xy[None, :, 1])
    order = np.argsort(d, axis=1, kind="stable")
    k = np.arange(order.shape[1])
    w = p * (1 - p) ** k
    w /= w.sum()
    lengths = np.empty(grid.n_targets)
    for t in range(grid.n_targets):
        ls = [path_length(move_path(grid.reservoir_xy[s], grid.target_xy[t], c)) for s in order[t, :12]]
        lengths[t] = np.dot(w[:12], ls) / w[:12].sum()
    # a horizontal corridor passes every site of the row closer to the reservoir
    cols = grid.target_xy[:, 0] / grid.spacing_um
    return float(lengths.mean()), float(cols.mean())


def steady_state_analytic(config) -> SteadyState:
    """Closed-form equilibrium fills using the same per-phase survivals as the engine.

    Returned fills are the image-measured pre- and post-rearrangement fills.
    """
    tm, im, lp = config.timings, config.imaging, config.losses
    grid = OccupancyGrid.from_config(config)
    life = config.vacuum_lifetime_s
    legs = _handoff_legs(config, grid)
    fp, fn = error_rates(im)
    l_img = im.loss_per_image
    pickup, disturb = rearrangement_tweezer_response(lp.rearr_depth_fraction, lp)
    mean_len, mean_passes = _expected_move(config)
    per_move = config.planner.pickup_ramp_ms + config.planner.release_ramp_ms + mean_len / config.planner.speed_um_per_ms

    v_res = vacuum_survival(tm.transport_ms + tm.tweezer_ramp_ms + tm.galvo_translate_ms + tm.settle_ms, life)
    v_cool = vacuum_survival(tm.doppler_ms + tm.rsc_total_ms, life)
    supply = (config.reservoir_sites * reservoir_fill_probability(config, tm.mot_load_ms)
              * v_res * legs.reservoir_in * (1 - l_img) * v_cool * legs.reservoir_out * pickup)

    zone_ids = np.unique(grid.target_zone)
    n = grid.n_targets
    plan_ms = tm.rearrange_fixed_overhead_ms
    for _ in range(50):
        v_plan = vacuum_survival(plan_ms, life)
        posts, pres, vacs, occs = [], [], [], []
        for z in zone_ids:
            sel = grid.target_zone == z
            s_in = float(legs.target_in[sel][0])
            s_out = float(legs.target_out[sel][0])
            # from just after rearrangement to the image, then to the start of the plan
            to_image = v_res * s_in
            after_image = (1 - l_img) * v_cool * s_out
            post = 1.0
            for _ in range(500):
                x = post * to_image                           # truly occupied at the image
                called_empty = x * fn + (1 - x) * (1 - fp)
                fill_rate = pickup * min(1.0, supply / max(n * called_empty, 1e-12))
                # atoms lost after the image leave vacancies the planner cannot see
                a = after_image * v_plan
                kept = x * (1 - fn) * a * (1 - disturb * mean_passes * called_empty)
                refill = ((1 - x) * (1 - fp) + x * fn * (1 - a)) * fill_rate
                new = kept + refill
                if abs(new - post) < 1e-15:
                    post = new
                    break
                post = new
            moves_frac = called_empty
            pre_true = post * to_image
            posts.append(post * s_in)
            pres.append(pre_true)
            vacs.append(moves_frac)
            occs.append(sel.mean())
        wts = np.array(occs)
        vac_frac = float(np.dot(wts, vacs))
        new_plan = tm.rearrange_fixed_overhead_ms + n * vac_frac * per_move
        if abs(new_plan - plan_ms) < 1e-9:
            break
        plan_ms = new_plan
    pre_true = float(np.dot(wts, pres))
    post_true = float(np.dot(wts, posts))
    pre = pre_true * (1 - fn) + (1 - pre_true) * fp
    post = post_true * (1 - fn) + (1 - post_true) * fp
    expected = n * vac_frac
    limited = supply <= expected
    msg = (f"supply-limited: mean supply {supply:.1f} <= expected vacancies {expected:.1f}"
           if limited else "")
    return SteadyState(pre, post, limited, expected, supply, plan_ms, msg)


def expected_cycle_timing(config) -> CycleTiming:
    """Duration and vacuum exposure of a target atom in a regular (non-first) cycle."""
    tm = config.timings
    ss = steady_state_analytic(config)
    _, passes = _expected_move(config)
    lattice = 2 * tm.handoff_ms + config.imaging.duration_ms
    res = tm.transport_ms + tm.tweezer_ramp_ms + tm.galvo_translate_ms + tm.settle_ms
    cool = tm.doppler_ms + tm.rsc_total_ms
    total = res + lattice + cool + ss.plan_ms
    moves = ss.expected_vacancies
    return CycleTiming(total, total - lattice, ss.plan_ms, moves,
                       moves * passes / config.target_sites)
