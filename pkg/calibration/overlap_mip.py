"""
Stage 2: joint (x, y, yaw) of all sensors and selection of feasible pole pairs.

Each candidate pair gets a binary a (1 = rejected) and split error variables
for the XY difference of its two base points in the vehicle frame. Rotations
are linearized at the Stage-1 yaws, so the whole problem is a MILP:

    min  sum(|delta| + |eps| + a) + rho * sum|theta - theta*|

with a = 0 forcing the errors to equal the residual, a = 1 forcing them to
zero, and |delta| + |eps| <= lambda for every candidate.
"""

from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from scipy import sparse

import config
from association import CandidatePair, VehicleGeometry, SensorConfig, subsample_indices
from calibration.branch_and_bound import (
    BnbResult,
    LinearModel,
    LpResult,
    SolveStatus,
    branch_and_bound,
    enumerate_binaries,
    fix_binaries,
    solve_lp,
)
from calibration.models import CalibrationSet, Stage
from calibration.settings import CalibrationSettings, resolve
from calibration.yaw_estimator import YawEstimate
from errors import EmptyCandidates, InvalidParams, MissingYaw, NodeLimit
from geometry import RigidTransform, wrap_angle
from monitoring import get_run_logger
from monitoring.reason_codes import EMPTY_CONSENSUS, MIP_GAP_LIMIT

POLISH_ROUNDS = 5


def linearization(theta_star: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Coefficients (m, b, m_bar, b_bar) with sin ~ m*theta + b and cos ~ m_bar*theta + b_bar."""
    theta_star = np.asarray(theta_star, dtype=float)
    m = np.cos(theta_star)
    b = np.sin(theta_star) - m * theta_star
    m_bar = -np.sin(theta_star)
    b_bar = np.cos(theta_star) - m_bar * theta_star
    return m, b, m_bar, b_bar


@dataclass(frozen=True)
class MipProblem:
    """
    One Stage-2 instance.

    q_a / q_b are candidate base points rotated by their sensor's roll and
    pitch guess (sensor frame otherwise); ia / ib index into sensor_ids.
    """
    sensor_ids: tuple[str, ...]
    theta_star: np.ndarray
    tilts: tuple[RigidTransform, ...]
    candidates: tuple[CandidatePair, ...]
    q_a: np.ndarray
    q_b: np.ndarray
    ia: np.ndarray
    ib: np.ndarray
    x_bounds: tuple[float, float]
    y_bounds: tuple[float, float]
    gamma: float
    lam: float
    big_m: float
    rho: float
    m: np.ndarray = field(init=False)
    b: np.ndarray = field(init=False)
    m_bar: np.ndarray = field(init=False)
    b_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidParams("lambda must be positive", stage="mip")
        if self.gamma <= 0:
            raise InvalidParams("gamma must be positive", stage="mip")
        if self.big_m <= self.lam:
            raise InvalidParams(f"big_M ({self.big_m}) must exceed lambda ({self.lam})", stage="mip")
        m, b, m_bar, b_bar = linearization(self.theta_star)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "m_bar", m_bar)
        object.__setattr__(self, "b_bar", b_bar)

    @property
    def num_sensors(self) -> int:
        return len(self.sensor_ids)

    @property
    def num_candidates(self) -> int:
        return len(self.candidates)

    # Column layout: [x, y, theta] per sensor, u per sensor, [d+, d-, e+, e-, a] per candidate.
    def col_pose(self, s: int) -> int:
        return 3 * s

    def col_u(self, s: int) -> int:
        return 3 * self.num_sensors + s

    def col_candidate(self, i: int) -> int:
        return 4 * self.num_sensors + 5 * i

    @property
    def binary_columns(self) -> np.ndarray:
        return np.array([self.col_candidate(i) + 4 for i in range(self.num_candidates)], dtype=int)

    def residual_terms(self, q: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, ...]:
        """(kx, cx, ky, cy) so that XY of a point = (x + kx*theta + cx, y + ky*theta + cy)."""
        m, b, mb, bb = self.m[s], self.b[s], self.m_bar[s], self.b_bar[s]
        qx, qy = q[:, 0], q[:, 1]
        return mb * qx - m * qy, bb * qx - b * qy, m * qx + mb * qy, b * qx + bb * qy

    def residuals(self, poses: np.ndarray) -> np.ndarray:
        """Linearized (delta, eps) residual of every candidate at poses (S,3) = [x, y, theta]."""
        poses = np.asarray(poses, dtype=float).reshape(self.num_sensors, 3)
        kxa, cxa, kya, cya = self.residual_terms(self.q_a, self.ia)
        kxb, cxb, kyb, cyb = self.residual_terms(self.q_b, self.ib)
        pa, pb = poses[self.ia], poses[self.ib]
        rx = (pa[:, 0] + kxa * pa[:, 2] + cxa) - (pb[:, 0] + kxb * pb[:, 2] + cxb)
        ry = (pa[:, 1] + kya * pa[:, 2] + cya) - (pb[:, 1] + kyb * pb[:, 2] + cyb)
        return np.column_stack([rx, ry])

    def candidate_big_m(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-candidate big-M for delta and eps from interval bounds over the pose box."""
        center = np.column_stack([
            np.full(self.num_sensors, 0.5 * sum(self.x_bounds)),
            np.full(self.num_sensors, 0.5 * sum(self.y_bounds)),
            self.theta_star,
        ])
        r0 = self.residuals(center)
        kxa, _, kya, _ = self.residual_terms(self.q_a, self.ia)
        kxb, _, kyb, _ = self.residual_terms(self.q_b, self.ib)
        spread_x = self.x_bounds[1] - self.x_bounds[0]
        spread_y = self.y_bounds[1] - self.y_bounds[0]
        mx = np.abs(r0[:, 0]) + spread_x + self.gamma * (np.abs(kxa) + np.abs(kxb)) + self.lam
        my = np.abs(r0[:, 1]) + spread_y + self.gamma * (np.abs(kya) + np.abs(kyb)) + self.lam
        return np.minimum(mx, self.big_m), np.minimum(my, self.big_m)

    def linear_model(self) -> LinearModel:
        """Sparse MILP in inequality form."""
        S, N = self.num_sensors, self.num_candidates
        ncols = 4 * S + 5 * N
        rows, cols, vals = [], [], []
        rhs = []

        def add_row(entries: list[tuple[int, float]], bound: float):
            r = len(rhs)
            for col, val in entries:
                if val != 0.0:
                    rows.append(r)
                    cols.append(col)
                    vals.append(val)
            rhs.append(bound)

        for s in range(S):
            th, u = self.col_pose(s) + 2, self.col_u(s)
            add_row([(th, 1.0), (u, -1.0)], float(self.theta_star[s]))
            add_row([(th, -1.0), (u, -1.0)], float(-self.theta_star[s]))

        kxa, cxa, kya, cya = self.residual_terms(self.q_a, self.ia)
        kxb, cxb, kyb, cyb = self.residual_terms(self.q_b, self.ib)
        mx, my = self.candidate_big_m()
        for i in range(N):
            pa, pb = self.col_pose(int(self.ia[i])), self.col_pose(int(self.ib[i]))
            base = self.col_candidate(i)
            dp, dm, ep, em, a = base, base + 1, base + 2, base + 3, base + 4
            # r_x = x_A - x_B + kxa*th_A - kxb*th_B + (cxa - cxb)
            rx_terms = [(pa, 1.0), (pb, -1.0), (pa + 2, kxa[i]), (pb + 2, -kxb[i])]
            ry_terms = [(pa + 1, 1.0), (pb + 1, -1.0), (pa + 2, kya[i]), (pb + 2, -kyb[i])]
            cx, cy = cxa[i] - cxb[i], cya[i] - cyb[i]
            add_row([(dp, 1.0), (dm, -1.0)] + _negated(rx_terms) + [(a, -mx[i])], cx)
            add_row([(dp, -1.0), (dm, 1.0)] + rx_terms + [(a, -mx[i])], -cx)
            add_row([(ep, 1.0), (em, -1.0)] + _negated(ry_terms) + [(a, -my[i])], cy)
            add_row([(ep, -1.0), (em, 1.0)] + ry_terms + [(a, -my[i])], -cy)
            add_row([(dp, 1.0), (dm, 1.0), (ep, 1.0), (em, 1.0), (a, self.lam)], self.lam)

        # pairs of identical (row, col) entries are summed by the COO -> CSR conversion
        a_ub = sparse.coo_matrix((vals, (rows, cols)), shape=(len(rhs), ncols)).tocsr()

        c = np.zeros(ncols)
        lower = np.zeros(ncols)
        upper = np.full(ncols, np.inf)
        for s in range(S):
            p = self.col_pose(s)
            lower[p:p + 3] = [self.x_bounds[0], self.y_bounds[0], self.theta_star[s] - self.gamma]
            upper[p:p + 3] = [self.x_bounds[1], self.y_bounds[1], self.theta_star[s] + self.gamma]
            c[self.col_u(s)] = self.rho
        for i in range(N):
            base = self.col_candidate(i)
            c[base:base + 5] = 1.0
            upper[base + 4] = 1.0
        return LinearModel(c, a_ub, np.array(rhs), lower, upper, self.binary_columns)

    def poses_from(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x[:3 * self.num_sensors]).reshape(self.num_sensors, 3)

    def column_names(self) -> list[str]:
        names = []
        safe = [re.sub(r"[^A-Za-z0-9_]", "_", sid) for sid in self.sensor_ids]
        for sid in safe:
            names += [f"x_{sid}", f"y_{sid}", f"th_{sid}"]
        names += [f"u_{sid}" for sid in safe]
        for i in range(self.num_candidates):
            names += [f"dp_{i}", f"dm_{i}", f"ep_{i}", f"em_{i}", f"a_{i}"]
        return names

    def subset(self, positions: Sequence[int]) -> "MipProblem":
        """Same sensors and parameters restricted to the candidates at the given positions."""
        keep = np.asarray(positions, dtype=int)
        return replace(
            self,
            candidates=tuple(self.candidates[i] for i in keep),
            q_a=self.q_a[keep],
            q_b=self.q_b[keep],
            ia=self.ia[keep],
            ib=self.ib[keep],
        )

    def objective_at(self, poses: np.ndarray, keep: np.ndarray) -> float:
        """Objective with the given poses and selection (keep = a is 0)."""
        poses = np.asarray(poses, dtype=float).reshape(self.num_sensors, 3)
        err = np.abs(self.residuals(poses)).sum(axis=1)
        reg = self.rho * np.abs(poses[:, 2] - self.theta_star).sum()
        return float(err[keep].sum() + np.count_nonzero(~keep) + reg)


@dataclass(frozen=True)
class MipSolution:
    poses: dict[str, tuple[float, float, float]]
    selected: tuple[int, ...]
    objective: float
    gap: float
    status: SolveStatus
    bound: float = 0.0
    nodes: int = 0
    runtime: float = 0.0
    residuals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def to_calibration(self, problem: MipProblem, base: Optional[CalibrationSet] = None) -> CalibrationSet:
        """xy-yaw calibrations: roll/pitch from the tilt guesses, z = 0."""
        transforms = dict(base.transforms) if base is not None else {}
        for s, sid in enumerate(problem.sensor_ids):
            x, y, theta = self.poses[sid]
            tilt = problem.tilts[s].euler
            transforms[sid] = RigidTransform.from_euler(tilt.roll, tilt.pitch, wrap_angle(theta), (x, y, 0.0))
        warnings = base.warnings if base is not None else ()
        return CalibrationSet(transforms, Stage.XY_YAW, base.timestamp if base is not None else None, warnings)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "bound": self.bound,
            "gap": self.gap,
            "nodes": self.nodes,
            "runtime": self.runtime,
            "selected": list(self.selected),
            "poses": {sid: list(p) for sid, p in self.poses.items()},
        }


@dataclass(frozen=True)
class EnumerationResult:
    """Exhaustive optimum plus the objective of every assignment (inf when infeasible)."""
    best: MipSolution
    objectives: np.ndarray
    assignments: np.ndarray

    @property
    def is_unique(self) -> bool:
        finite = np.sort(self.objectives[np.isfinite(self.objectives)])
        return len(finite) < 2 or finite[1] - finite[0] > 1e-6


def _negated(terms: list[tuple[int, float]]) -> list[tuple[int, float]]:
    return [(col, -val) for col, val in terms]


def _yaw_value(value: Union[float, YawEstimate, RigidTransform]) -> float:
    if isinstance(value, YawEstimate):
        return value.yaw
    if isinstance(value, RigidTransform):
        return value.yaw
    return float(value)


def default_big_m(vehicle: VehicleGeometry, max_range: float) -> float:
    return 2.0 * (max_range + vehicle.diagonal)


def build_mip(candidates: Sequence[CandidatePair],
              yaw_estimates: Mapping[str, Union[float, YawEstimate, RigidTransform]],
              vehicle: VehicleGeometry,
              settings: Optional[CalibrationSettings] = None,
              sensors: Optional[Sequence[SensorConfig]] = None) -> MipProblem:
    """
    Linearize every candidate at the Stage-1 yaws.

    Roll and pitch guesses come from sensors (when given) and are applied to
    the base points before the yaw; z stays at zero.

    Raises:
        EmptyCandidates: no candidates
        MissingYaw: a candidate references a sensor without a yaw estimate
    """
    cfg = resolve(settings)
    if not candidates:
        raise EmptyCandidates("no candidate pole pairs", stage="mip")

    sensor_ids: list[str] = []
    for cand in candidates:
        for sid in cand.sensor_pair:
            if sid not in yaw_estimates:
                raise MissingYaw(f"no yaw estimate for sensor {sid}", stage="mip")
            if sid not in sensor_ids:
                sensor_ids.append(sid)
    order = {sid: k for k, sid in enumerate(yaw_estimates)}
    sensor_ids.sort(key=lambda sid: order[sid])
    index = {sid: k for k, sid in enumerate(sensor_ids)}

    by_id = {s.id: s for s in sensors} if sensors else {}
    tilts = tuple(
        RigidTransform.from_euler(by_id[sid].roll_guess, by_id[sid].pitch_guess, 0.0) if sid in by_id
        else RigidTransform.identity()
        for sid in sensor_ids
    )
    max_range = max((s.max_range for s in sensors), default=None) if sensors else None

    ia = np.array([index[c.sensor_pair[0]] for c in candidates], dtype=int)
    ib = np.array([index[c.sensor_pair[1]] for c in candidates], dtype=int)
    base_a = np.stack([c.pole_a.base for c in candidates])
    base_b = np.stack([c.pole_b.base for c in candidates])
    tilt_mats = np.stack([t.rotation_matrix for t in tilts])
    q_a = np.einsum("nij,nj->ni", tilt_mats[ia], base_a)
    q_b = np.einsum("nij,nj->ni", tilt_mats[ib], base_b)

    big_m = cfg.mip.big_m
    if big_m is None:
        big_m = default_big_m(vehicle, max_range if max_range is not None else config.SENSOR_MAX_RANGE)

    return MipProblem(
        sensor_ids=tuple(sensor_ids),
        theta_star=np.array([_yaw_value(yaw_estimates[sid]) for sid in sensor_ids]),
        tilts=tilts,
        candidates=tuple(candidates),
        q_a=q_a,
        q_b=q_b,
        ia=ia,
        ib=ib,
        x_bounds=vehicle.x_bounds,
        y_bounds=vehicle.y_bounds,
        gamma=cfg.mip.gamma,
        lam=cfg.mip.lam,
        big_m=big_m,
        rho=cfg.mip.rho,
    )


def _solution_from(problem: MipProblem, x: np.ndarray, result: BnbResult) -> MipSolution:
    poses = problem.poses_from(x)
    a = x[problem.binary_columns]
    selected = tuple(problem.candidates[i].index for i in np.nonzero(a < 0.5)[0])
    return MipSolution(
        poses={sid: (float(p[0]), float(p[1]), float(p[2])) for sid, p in zip(problem.sensor_ids, poses)},
        selected=selected,
        objective=result.objective,
        gap=result.gap,
        status=result.status,
        bound=result.bound,
        nodes=result.nodes,
        runtime=result.runtime,
        residuals=problem.residuals(poses),
    )


def _round_and_polish(problem: MipProblem, model: LinearModel, x: np.ndarray) -> Optional[LpResult]:
    """
    Select candidates whose residual meets the lambda cap at the given poses,
    re-fit the poses on that selection and repeat until the selection settles.

    The poses that produced a selection are feasible for it, so every LP
    solved here is feasible.
    """
    best: Optional[LpResult] = None
    previous = None
    poses = problem.poses_from(x)
    for _ in range(POLISH_ROUNDS):
        res = problem.residuals(poses)
        keep = np.abs(res).sum(axis=1) <= problem.lam - 1e-9
        if previous is not None and np.array_equal(keep, previous):
            break
        previous = keep
        lo, hi = fix_binaries(model, (~keep).astype(float))
        result = solve_lp(model, lo, hi)
        if not result.feasible:
            break
        if best is None or result.objective < best.objective:
            best = result
        poses = problem.poses_from(result.x)
    return best


def _reject_all(problem: MipProblem, model: LinearModel) -> LpResult:
    """The always-feasible assignment a = 1 for every candidate."""
    lo, hi = fix_binaries(model, np.ones(problem.num_candidates))
    return solve_lp(model, lo, hi)


def _pose_vector(problem: MipProblem, model: LinearModel, poses: np.ndarray) -> np.ndarray:
    """Full column vector with the pose block set and clipped to the column bounds."""
    x = np.zeros(len(model.c))
    x[:3 * problem.num_sensors] = np.asarray(poses, dtype=float).ravel()
    return np.clip(x, model.lower, np.where(np.isfinite(model.upper), model.upper, x))


def solve_mip(problem: MipProblem, settings: Optional[CalibrationSettings] = None,
              node_limit: Optional[int] = None, time_limit: Optional[float] = None,
              strict: bool = False, seed: Optional[np.ndarray] = None) -> MipSolution:
    """
    Branch-and-bound on the candidate binaries.

    seed (S,3) are poses near the answer; the selection they induce, polished,
    starts the search as incumbent when it beats rejecting everything.
    Returns status GAP_LIMIT with the best incumbent when the node or time
    limit stops the search before the gap closes; with strict=True a
    NodeLimit error carrying that solution is raised instead.
    """
    cfg = resolve(settings)
    log = get_run_logger()
    model = problem.linear_model()
    incumbent = _reject_all(problem, model)
    assert incumbent.feasible, "rejecting every candidate must always be feasible"
    if seed is not None:
        seeded = _round_and_polish(problem, model, _pose_vector(problem, model, seed))
        if seeded is not None and seeded.objective < incumbent.objective:
            incumbent = seeded

    result = branch_and_bound(
        model,
        gap_tol=cfg.mip.gap_tol,
        node_limit=cfg.mip.node_limit if node_limit is None else node_limit,
        time_limit=cfg.mip.time_limit if time_limit is None else time_limit,
        heuristic=lambda x: _round_and_polish(problem, model, x),
        incumbent=incumbent,
    )
    assert result.x is not None, "branch-and-bound lost the all-rejected incumbent"
    solution = _solution_from(problem, result.x, result)
    if solution.status is SolveStatus.GAP_LIMIT:
        log.warn("mip", "gap_limit", reason_code=MIP_GAP_LIMIT,
                 reason=f"stopped after {result.nodes} nodes with gap {result.gap:.3g}",
                 outputs={"objective": result.objective, "bound": result.bound})
        if strict:
            error = NodeLimit(f"search stopped with gap {result.gap:.3g}", stage="mip")
            error.solution = solution
            raise error
    log.debug("mip", "solved", outputs={
        "status": solution.status.value,
        "selected": len(solution.selected),
        "candidates": problem.num_candidates,
        "nodes": result.nodes,
        "lp_solves": result.lp_solves,
    })
    return solution


def extract_feasible_pairs(solution: MipSolution, candidates: Sequence[CandidatePair]) -> list[CandidatePair]:
    """Candidates the solution selected (a = 0), indices preserved."""
    if solution.status is SolveStatus.INFEASIBLE:
        raise InvalidParams("cannot extract pairs from an infeasible solution", stage="mip")
    selected = set(solution.selected)
    return [cand for cand in candidates if cand.index in selected]


def seed_poses(problem: MipProblem, calib: CalibrationSet) -> np.ndarray:
    """(S,3) poses of a calibration guess, clipped into the vehicle box and the yaw trust region."""
    poses = np.zeros((problem.num_sensors, 3))
    for s, sid in enumerate(problem.sensor_ids):
        theta_star = float(problem.theta_star[s])
        if sid not in calib:
            poses[s] = [0.5 * sum(problem.x_bounds), 0.5 * sum(problem.y_bounds), theta_star]
            continue
        T = calib[sid]
        dyaw = float(np.clip(wrap_angle(T.yaw - theta_star), -problem.gamma, problem.gamma))
        poses[s] = [
            np.clip(T.translation[0], *problem.x_bounds),
            np.clip(T.translation[1], *problem.y_bounds),
            theta_star + dyaw,
        ]
    return poses


def consensus_core(problem: MipProblem, poses: np.ndarray, radius: float, cap: int) -> np.ndarray:
    """
    Positions of the candidates whose L1 residual at poses is within radius,
    at most cap per sensor pair (fixed stride, in candidate order).
    """
    err = np.abs(problem.residuals(poses)).sum(axis=1)
    near = np.nonzero(err <= radius)[0]
    core = []
    for a, b in sorted({(int(problem.ia[i]), int(problem.ib[i])) for i in near}):
        members = near[(problem.ia[near] == a) & (problem.ib[near] == b)]
        core.append(members[subsample_indices(len(members), cap)])
    return np.sort(np.concatenate(core)) if core else np.zeros(0, dtype=int)


def solve_seeded(problem: MipProblem, seed: np.ndarray,
                 settings: Optional[CalibrationSettings] = None) -> MipSolution:
    """
    Stage 2 around a pose guess.

    Branch-and-bound runs on the consensus core only: candidates that nearly
    agree at the seed, capped per sensor pair. Sensors the core does not
    reach keep their seed pose. Every candidate of the full problem is then
    classified at the core poses and the poses are polished on the full
    selection. Status, bound and node count describe the core search.
    """
    cfg = resolve(settings)
    log = get_run_logger()
    seed = np.asarray(seed, dtype=float).reshape(problem.num_sensors, 3)
    positions = consensus_core(problem, seed, cfg.mip.consensus_radius, cfg.mip.core_cap)
    if len(positions) == 0:
        log.warn("mip", "empty_consensus", reason_code=EMPTY_CONSENSUS,
                 reason=f"no candidate within {cfg.mip.consensus_radius} m of the seed; solving all candidates")
        return solve_mip(problem, cfg, seed=seed)

    core = problem.subset(positions)
    core_solution = solve_mip(core, cfg, seed=seed)
    poses = seed.copy()
    reached = np.zeros(problem.num_sensors, dtype=bool)
    reached[core.ia] = True
    reached[core.ib] = True
    for s, sid in enumerate(problem.sensor_ids):
        if reached[s]:
            poses[s] = core_solution.poses[sid]

    model = problem.linear_model()
    polished = _round_and_polish(problem, model, _pose_vector(problem, model, poses))
    if polished is not None:
        poses = problem.poses_from(polished.x)
        keep = polished.x[problem.binary_columns] < 0.5
        objective = polished.objective
    else:
        keep = np.abs(problem.residuals(poses)).sum(axis=1) <= problem.lam
        objective = problem.objective_at(poses, keep)
    log.debug("mip", "seeded", outputs={
        "core": len(positions),
        "candidates": problem.num_candidates,
        "selected": int(np.count_nonzero(keep)),
        "unreached": [sid for s, sid in enumerate(problem.sensor_ids) if not reached[s]],
    })
    return MipSolution(
        poses={sid: (float(p[0]), float(p[1]), float(p[2])) for sid, p in zip(problem.sensor_ids, poses)},
        selected=tuple(problem.candidates[i].index for i in np.nonzero(keep)[0]),
        objective=objective,
        gap=core_solution.gap,
        status=core_solution.status,
        bound=core_solution.bound,
        nodes=core_solution.nodes,
        runtime=core_solution.runtime,
        residuals=problem.residuals(poses),
    )


def enumerate_mip(problem: MipProblem) -> EnumerationResult:
    """Exhaustive search over all 2^n assignments with one LP each; first optimum wins ties."""
    if problem.num_candidates > 16:
        raise InvalidParams("enumeration is limited to 16 candidates", stage="mip")
    start = time.perf_counter()
    model = problem.linear_model()
    objectives, assignments = [], []
    best_x, best_obj = None, math.inf
    for values, lp in enumerate_binaries(model):
        assignments.append(values)
        objectives.append(lp.objective if lp.feasible else math.inf)
        if lp.feasible and lp.objective < best_obj - 1e-12:
            best_x, best_obj = lp.x, lp.objective
    summary = BnbResult(SolveStatus.OPTIMAL, best_x, best_obj, best_obj, 0.0,
                        len(assignments), len(assignments), time.perf_counter() - start)
    return EnumerationResult(
        best=_solution_from(problem, best_x, summary),
        objectives=np.array(objectives),
        assignments=np.array(assignments),
    )


def _format_terms(terms: Sequence[tuple[float, str]]) -> str:
    parts = []
    for coef, name in terms:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {abs(coef):.12g} {name}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def dump_lp(problem: MipProblem, path: str):
    """Write the instance in CPLEX LP text format (objective, constraints, bounds, binaries)."""
    model = problem.linear_model()
    names = problem.column_names()
    lines = ["\\ overlap selection MILP", "Minimize"]
    obj = [(float(c), names[j]) for j, c in enumerate(model.c) if c != 0.0]
    lines.append(" obj: " + (_format_terms(obj) if obj else "0 " + names[0]))
    lines.append("Subject To")
    a = model.a_ub.tocsr()
    for r in range(a.shape[0]):
        start, end = a.indptr[r], a.indptr[r + 1]
        terms = [(float(v), names[j]) for j, v in zip(a.indices[start:end], a.data[start:end])]
        lines.append(f" c{r}: {_format_terms(terms)} <= {model.b_ub[r]:.12g}")
    lines.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = model.lower[j], model.upper[j]
        hi_text = "+inf" if not np.isfinite(hi) else f"{hi:.12g}"
        lines.append(f" {lo:.12g} <= {name} <= {hi_text}")
    lines.append("Binaries")
    binaries = [names[j] for j in model.binary]
    for k in range(0, len(binaries), 8):
        lines.append(" " + " ".join(binaries[k:k + 8]))
    lines.append("End")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
