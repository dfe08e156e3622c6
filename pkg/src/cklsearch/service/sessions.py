"""Interactive search sessions with a human answering the queries.

Engines wrap the search primitives in a target-free way: they emit the
next query, consume one answer at a time, and expose a belief summary.
All state is plain data so sessions can be snapshotted to JSON and
restored with identical subsequent behavior.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError
from ..geometry import Region, children, parent
from ..oracle import OracleModel
from ..search_continuous import (
    BELIEF_EXTENT_FACTOR,
    GridBelief,
    integration_decision,
    select_stage_query,
    update_belief,
)
from ..search_discrete import (
    DiscreteBelief,
    DiscreteSearchState,
    ItemSet,
    next_query,
    update_posterior,
)


class DiscreteSessionEngine:
    """Pairwise item search driven by user choices."""

    def __init__(self, items: ItemSet, gamma: float = 3.0, r: float = 2.0, state=None):
        if items.n < 2:
            raise InvalidInputError("need at least two items")
        self.items = items
        self.state = state or DiscreteSearchState.initial(items.n, r=r, gamma=gamma)
        self.terminal = None

    def current_query(self):
        i, j = next_query(self.state, self.items)
        return {"kind": "items", "a": self._item_ref(i), "b": self._item_ref(j)}

    def _item_ref(self, item_id):
        idx = self.items.index_of(item_id)
        url = None
        if self.items.display_urls is not None:
            url = self.items.display_urls[idx]
        return {"id": item_id, "display_url": url}

    def apply_answer(self, query, choice: str, is_target: bool):
        pair = (query["a"]["id"], query["b"]["id"])
        if choice not in pair:
            raise InvalidInputError(f"choice {choice!r} is not in the pending pair")
        if is_target:
            self.terminal = {"found": True, "target_id": choice, "steps": self.state.step + 1}
            return
        self.state = update_posterior(self.state, self.items, pair, choice)

    def belief_summary(self):
        probs = self.state.belief.probs
        order = np.argsort(-probs)[:5]
        return {
            "kind": "discrete",
            "top": [
                {"id": self.items.ids[int(k)], "prob": float(probs[int(k)])} for k in order
            ],
            "entropy": self.state.belief.entropy(),
        }

    def to_dict(self):
        return {
            "engine": "discrete",
            "items": self.items.to_manifest(),
            "gamma": self.state.gamma,
            "r": self.state.r,
            "probs": [float(p) for p in self.state.belief.probs],
            "used": sorted(self.state.used),
            "step": self.state.step,
            "history": [[list(q), a] for q, a in self.state.history],
            "terminal": self.terminal,
        }

    @staticmethod
    def from_dict(payload):
        items = ItemSet.from_manifest(payload["items"])
        state = DiscreteSearchState(
            belief=DiscreteBelief(np.array(payload["probs"], dtype=float)),
            used=frozenset(payload["used"]),
            step=int(payload["step"]),
            r=float(payload["r"]),
            gamma=float(payload["gamma"]),
            history=tuple((tuple(q), a) for q, a in payload["history"]),
        )
        engine = DiscreteSessionEngine(items, state=state)
        engine.terminal = payload.get("terminal")
        return engine


class ContinuousSessionEngine:
    """Staged region search driven by user choices; fixed to the
    integration criterion (the test-based one needs far too many answers
    for a human)."""

    def __init__(
        self,
        dim: int = 2,
        gamma: float = 8.0,
        omega_center=None,
        omega_edge: float = 1.0,
        query_budget: int = 200,
        alpha: float = 0.95,
        grid_resolution: int | None = None,
        max_queries_per_stage: int = 60,
        _restore=None,
    ):
        self.model = OracleModel(gamma=gamma, dim=dim)
        self.alpha = alpha
        self.resolution = grid_resolution or (32 if dim <= 3 else 12)
        self.max_queries_per_stage = max_queries_per_stage
        self.query_budget = query_budget
        if _restore is not None:
            r = _restore
            self.omega = Region(np.array(r["omega_center"]), float(r["omega_edge"]), 0)
            self.region = Region(
                np.array(r["region_center"]), float(r["region_edge"]), int(r["region_depth"])
            )
            self.stage = int(r["stage"])
            self.queries_in_stage = int(r["queries_in_stage"])
            self.total_queries = int(r["total_queries"])
            self.stage_log = list(r["stage_log"])
            fresh = GridBelief.uniform(self._extent(), self.resolution)
            self.belief = GridBelief(
                region=fresh.region,
                resolution=self.resolution,
                log_weights=np.array(r["log_weights"], dtype=float),
                centers=fresh.centers,
            )
        else:
            center = np.zeros(dim) if omega_center is None else np.asarray(omega_center, float)
            self.omega = Region(center=center, edge=omega_edge, depth=0)
            self.region = self.omega
            self.stage = 0
            self.queries_in_stage = 0
            self.total_queries = 0
            self.stage_log = []
            self.belief = GridBelief.uniform(self._extent(), self.resolution)

    def _extent(self):
        return Region(
            center=self.region.center,
            edge=BELIEF_EXTENT_FACTOR * self.region.edge,
            depth=self.region.depth,
        )

    @property
    def terminal(self):
        if self.total_queries >= self.query_budget:
            return {
                "found": False,
                "region_center": [float(c) for c in self.region.center],
                "region_edge": float(self.region.edge),
                "depth": int(self.region.depth),
                "queries": self.total_queries,
            }
        return None

    def current_query(self):
        qa, qb = select_stage_query(self.region, self.queries_in_stage)
        return {
            "kind": "points",
            "a": {"coords": [float(v) for v in qa]},
            "b": {"coords": [float(v) for v in qb]},
        }

    def apply_answer(self, query, choice: str, is_target: bool):
        if choice not in ("a", "b"):
            raise InvalidInputError("continuous choice must be 'a' or 'b'")
        qa = np.array(query["a"]["coords"], dtype=float)
        qb = np.array(query["b"]["coords"], dtype=float)
        self.belief = update_belief(self.belief, (qa, qb), choice == "a", self.model)
        self.queries_in_stage += 1
        self.total_queries += 1
        min_queries = 2 * self.model.dim
        decision = None
        if self.queries_in_stage >= min_queries:
            decision = integration_decision(self.belief, self.region, self.alpha)
            if decision.kind == "undecided":
                decision = None
        if decision is None and self.queries_in_stage >= self.max_queries_per_stage:
            from ..search_continuous import Decision

            decision = Decision("backtrack")
        if decision is not None:
            if decision.kind == "proceed":
                self.region = children(self.region)[decision.child_index]
            else:
                self.region = parent(self.region)
            self.stage_log.append(
                {
                    "stage": self.stage,
                    "decision": decision.kind,
                    "child_index": decision.child_index,
                    "queries_in_stage": self.queries_in_stage,
                    "cumulative_queries": self.total_queries,
                    "region_center": [float(c) for c in self.region.center],
                    "region_edge": float(self.region.edge),
                    "depth": int(self.region.depth),
                }
            )
            self.stage += 1
            self.queries_in_stage = 0
            self.belief = GridBelief.uniform(self._extent(), self.resolution)

    def belief_summary(self):
        return {
            "kind": "continuous",
            "region_center": [float(c) for c in self.region.center],
            "region_edge": float(self.region.edge),
            "depth": int(self.region.depth),
            "region_mass": self.belief.mass_in(self.region),
            "stage": self.stage,
            "queries_in_stage": self.queries_in_stage,
        }

    def to_dict(self):
        return {
            "engine": "continuous",
            "dim": self.model.dim,
            "gamma": self.model.gamma,
            "alpha": self.alpha,
            "grid_resolution": self.resolution,
            "max_queries_per_stage": self.max_queries_per_stage,
            "query_budget": self.query_budget,
            "omega_center": [float(c) for c in self.omega.center],
            "omega_edge": float(self.omega.edge),
            "region_center": [float(c) for c in self.region.center],
            "region_edge": float(self.region.edge),
            "region_depth": int(self.region.depth),
            "stage": self.stage,
            "queries_in_stage": self.queries_in_stage,
            "total_queries": self.total_queries,
            "stage_log": self.stage_log,
            "log_weights": [float(v) for v in self.belief.log_weights],
        }

    @staticmethod
    def from_dict(payload):
        return ContinuousSessionEngine(
            dim=int(payload["dim"]),
            gamma=float(payload["gamma"]),
            query_budget=int(payload["query_budget"]),
            alpha=float(payload["alpha"]),
            grid_resolution=int(payload["grid_resolution"]),
            max_queries_per_stage=int(payload["max_queries_per_stage"]),
            _restore=payload,
        )


@dataclass
class Session:
    session_id: str
    mode: str
    engine: object
    nonce: str
    history_length: int = 0
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)

    def pending_query(self):
        if self.engine.terminal is not None:
            return None
        query = self.engine.current_query()
        query["nonce"] = self.nonce
        return query

    def to_dict(self):
        return {
            "session_id": self.session_id,
            "mode": self.mode,
            "nonce": self.nonce,
            "history_length": self.history_length,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "engine_state": self.engine.to_dict(),
        }

    @staticmethod
    def from_dict(payload):
        engine_state = payload["engine_state"]
        if engine_state["engine"] == "discrete":
            engine = DiscreteSessionEngine.from_dict(engine_state)
        else:
            engine = ContinuousSessionEngine.from_dict(engine_state)
        return Session(
            session_id=payload["session_id"],
            mode=payload["mode"],
            engine=engine,
            nonce=payload["nonce"],
            history_length=int(payload["history_length"]),
            created_at=float(payload["created_at"]),
            updated_at=float(payload["updated_at"]),
        )


class SessionStore:
    """In-memory session map with optional JSON snapshots per transition."""

    def __init__(self, snapshot_dir=None):
        self._sessions: dict[str, Session] = {}
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None
        if self.snapshot_dir:
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.snapshot_dir.glob("*.json")):
                session = Session.from_dict(json.loads(path.read_text(encoding="utf-8")))
                self._sessions[session.session_id] = session

    def create(self, mode: str, engine) -> Session:
        session = Session(
            session_id=uuid.uuid4().hex,
            mode=mode,
            engine=engine,
            nonce=uuid.uuid4().hex,
        )
        self._sessions[session.session_id] = session
        self._snapshot(session)
        return session

    def get(self, session_id: str) -> Session | None:
        return self._sessions.get(session_id)

    def advance(self, session: Session, choice: str, is_target: bool):
        """Apply one answer to the pending query and rotate the nonce."""
        query = session.pending_query()
        if query is None:
            raise InvalidInputError("session is terminal")
        session.engine.apply_answer(query, choice, is_target)
        session.history_length += 1
        session.nonce = uuid.uuid4().hex
        session.updated_at = time.time()
        self._snapshot(session)

    def _snapshot(self, session: Session):
        if self.snapshot_dir:
            path = self.snapshot_dir / f"{session.session_id}.json"
            path.write_text(
                json.dumps(session.to_dict(), sort_keys=True), encoding="utf-8"
            )
