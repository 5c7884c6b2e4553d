"""Episode state, candidate construction, teacher actions and shaped rewards."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..metrics import SUCCESS_DISTANCE
from ..worldgen import EnvGraph, Path, wrap_angle

STOP = -1


def orientation(theta: float, phi: float) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)])


@dataclass
class Candidate:
    node: int               # STOP for the stop action
    view: int               # panorama view facing the candidate; 36 = none
    theta: float            # heading relative to the agent
    phi: float

    @property
    def orient(self) -> np.ndarray:
        if self.node == STOP:
            return np.zeros(4)
        return orientation(self.theta, self.phi)


class DTWTracker:
    """Incremental DTW of a growing predicted path against a fixed reference."""

    def __init__(self, ref, env: EnvGraph):
        self.ref = list(ref)
        self.geo = env.geodesic_matrix()
        self.row = None

    def push(self, node: int) -> float:
        d = self.geo[node, self.ref]
        m = len(self.ref)
        new = np.empty(m)
        if self.row is None:
            new[0] = d[0]
            for j in range(1, m):
                new[j] = d[j] + new[j - 1]
        else:
            new[0] = d[0] + self.row[0]
            for j in range(1, m):
                new[j] = d[j] + min(self.row[j - 1], self.row[j], new[j - 1])
        self.row = new
        return float(new[-1])

    def ndtw(self) -> float:
        return float(np.exp(-self.row[-1] / (len(self.ref) * SUCCESS_DISTANCE)))


@dataclass
class Episode:
    env: EnvGraph
    path: Path
    tokens: tuple[int, ...]
    language: str
    instr_id: str = ""
    split: str = "train"
    horizon: int | None = None
    ndtw_reward_clip: bool = False
    # runtime state
    node: int = field(init=False)
    heading: float = field(init=False)
    trajectory: list[int] = field(init=False)
    done: bool = field(init=False)
    stopped: bool = field(init=False)
    next_gt: int = field(init=False)
    rewards: list[float] = field(init=False)
    attention: list[np.ndarray] = field(init=False)
    records: list[dict] = field(init=False)

    def __post_init__(self):
        if self.horizon is None:
            self.horizon = 2 * len(self.path.nodes) + 4
        self.reset()

    def reset(self) -> "Episode":
        self.node = self.path.nodes[0]
        self.heading = self.path.start_heading
        self.trajectory = [self.node]
        self.done = False
        self.stopped = False
        self.next_gt = 1
        self.rewards = []
        self.attention = []
        self.records = []
        self._tracker = DTWTracker(self.path.nodes, self.env)
        self._tracker.push(self.node)
        self._ndtw = self._tracker.ndtw()
        return self

    @property
    def goal(self) -> int:
        return self.path.nodes[-1]

    @property
    def steps(self) -> int:
        return len(self.rewards)

    def candidates(self) -> list[Candidate]:
        cands = [Candidate(STOP, 36, 0.0, 0.0)]
        for w, h, e, m in self.env.neighbor_geometry(self.node):
            cands.append(Candidate(w, m, wrap_angle(h - self.heading), e))
        return cands

    def distance_to_goal(self, node: int | None = None) -> float:
        return float(self.env.geodesic_matrix()[self.node if node is None else node, self.goal])

    def step(self, cand: Candidate) -> float:
        """Execute a candidate, returning the shaped reward for the transition."""
        if self.done:
            raise RuntimeError("episode already finished")
        before = self.distance_to_goal()
        r_stop = 0.0
        if cand.node == STOP:
            self.stopped = True
            self.done = True
            r_stop = 3.0 if before < SUCCESS_DISTANCE else -3.0
            r_dist = 0.0
            r_ndtw = 0.0
        else:
            if cand.node not in self.env.neighbors(self.node):
                raise ValueError(f"{cand.node} is not adjacent to {self.node}")
            h, _ = self.env.heading_to(self.node, cand.node)
            self.node = cand.node
            self.heading = h
            self.trajectory.append(self.node)
            gt = self.path.nodes
            if self.next_gt < len(gt) and self.node == gt[self.next_gt]:
                self.next_gt += 1
            after = self.distance_to_goal()
            r_dist = float(np.sign(before - after))
            self._tracker.push(self.node)
            nd = self._tracker.ndtw()
            r_ndtw = nd - self._ndtw
            if self.ndtw_reward_clip:
                r_ndtw = max(r_ndtw, 0.0)
            self._ndtw = nd
        r = r_dist + r_ndtw + r_stop
        self.rewards.append(r)
        if not self.done and self.steps >= self.horizon:
            self.done = True
        return r

    def teacher(self) -> int:
        """Index into :meth:`candidates` of the teacher action."""
        cands = self.candidates()
        gt = self.path.nodes
        target_idx = min(self.next_gt, len(gt) - 1)
        if self.node == gt[-1] and self.next_gt >= len(gt):
            return 0
        if self.node == gt[self.next_gt - 1]:
            target = gt[self.next_gt]
            return next(i for i, c in enumerate(cands) if c.node == target)
        geo = self.env.geodesic_matrix()
        target = gt[target_idx]
        best = min(
            (i for i in range(1, len(cands))),
            key=lambda i: (geo[cands[i].node, target], cands[i].node),
        )
        return best


def teacher_action(episode: Episode) -> int:
    if episode.done:
        raise RuntimeError("episode already finished")
    return episode.teacher()


def shaped_reward(episode: Episode, step: int) -> float:
    """Reward recorded for transition ``step`` of an executed episode."""
    return episode.rewards[step]


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out
