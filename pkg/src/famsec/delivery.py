"""Grid delivery task: a truck heads for a goal cell while a pursuer gives chase.

The joint state is ``(truck_cell, pursuer_cell)`` with cells indexed
``y * width + x``; two extra absorbing states mark delivery and capture.
Each step the truck moves first (with slip), then the pursuer moves. Capture
is checked after each sub-move and takes precedence over delivery.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ConfigError
from .mdp import Mdp

# (dx, dy); y grows northward.
MOVES = {"N": (0, 1), "S": (0, -1), "E": (1, 0), "W": (-1, 0), "stay": (0, 0)}
ACTIONS = ("N", "S", "E", "W", "stay")
PERPENDICULAR = {"N": ("E", "W"), "S": ("E", "W"), "E": ("N", "S"), "W": ("N", "S")}
PURSUER_PREFERENCE = ("N", "S", "E", "W")

FEATURE_NAMES = ("p_pursue", "slip", "goal_distance", "pursuer_distance", "capture_penalty")


def _coord(value, name):
    try:
        x, y = value
        if isinstance(x, bool) or isinstance(y, bool):
            raise TypeError
        return int(x), int(y)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an [x, y] pair of integers, got {value!r}", name) from None


def _real(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}", name)
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{name} must be finite", name)
    return value


@dataclass(frozen=True)
class TaskConfig:
    """Parameters of one delivery task instance.

    Defaults give a 10x10 grid with goal reward 100, capture reward -100,
    per-move cost -1 and discount 0.95.
    """

    width: int = 10
    height: int = 10
    adt_start: tuple = (0, 0)
    goal: tuple = (9, 9)
    mg_start: tuple = (9, 0)
    p_pursue: float = 0.5
    slip: float = 0.1
    step_cost: float = -1.0
    r_goal: float = 100.0
    r_capture: float = -100.0
    discount: float = 0.95
    seed: int = 0

    def __post_init__(self):
        for name in ("width", "height", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {v!r}", name)
            object.__setattr__(self, name, int(v))
        if self.width < 1 or self.height < 1:
            raise ConfigError("width and height must be >= 1", "width" if self.width < 1 else "height")
        for name in ("adt_start", "goal", "mg_start"):
            x, y = _coord(getattr(self, name), name)
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ConfigError(f"{name}={[x, y]} lies outside the {self.width}x{self.height} grid", name)
            object.__setattr__(self, name, (x, y))
        for name in ("p_pursue", "slip", "step_cost", "r_goal", "r_capture", "discount"):
            object.__setattr__(self, name, _real(getattr(self, name), name))
        if self.adt_start == self.goal:
            raise ConfigError("adt_start must differ from goal", "adt_start")
        if self.adt_start == self.mg_start:
            raise ConfigError("mg_start must differ from adt_start", "mg_start")
        if not 0.0 <= self.p_pursue <= 1.0:
            raise ConfigError(f"p_pursue must lie in [0, 1], got {self.p_pursue}", "p_pursue")
        if not 0.0 <= self.slip < 0.5:
            raise ConfigError(f"slip must lie in [0, 0.5), got {self.slip}", "slip")
        if self.step_cost > 0:
            raise ConfigError("step_cost must be nonpositive", "step_cost")
        if not self.r_goal > 0:
            raise ConfigError("r_goal must be positive", "r_goal")
        if not self.r_capture < 0:
            raise ConfigError("r_capture must be negative", "r_capture")
        if not 0.0 < self.discount < 1.0:
            raise ConfigError("discount must lie in (0, 1)", "discount")

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("task config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field {unknown[0]!r}", unknown[0])
        return cls(**data)

    def to_dict(self):
        d = asdict(self)
        for name in ("adt_start", "goal", "mg_start"):
            d[name] = list(d[name])
        return d

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return TaskConfig(**d)

    def mirrored(self):
        """Left-right mirror image of this task."""
        flip = lambda c: (self.width - 1 - c[0], c[1])  # noqa: E731
        return self.replace(adt_start=flip(self.adt_start), goal=flip(self.goal), mg_start=flip(self.mg_start))

    @property
    def n_cells(self):
        return self.width * self.height

    def cell_index(self, cell):
        return cell[1] * self.width + cell[0]

    def state_index(self, adt_cell, mg_cell):
        return self.cell_index(adt_cell) * self.n_cells + self.cell_index(mg_cell)

    @property
    def delivered_state(self):
        return self.n_cells * self.n_cells

    @property
    def captured_state(self):
        return self.n_cells * self.n_cells + 1

    @property
    def initial_state(self):
        return self.state_index(self.adt_start, self.mg_start)


def load_config(path):
    """Read a :class:`TaskConfig` from a JSON file."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return TaskConfig.from_dict(data)


def save_config(config, path):
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _step(cell, move, width, height):
    dx, dy = MOVES[move]
    x, y = cell[0] + dx, cell[1] + dy
    if 0 <= x < width and 0 <= y < height:
        return (x, y)
    return cell


def _manhattan(a, b):
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _truck_outcomes(cfg, cell, action):
    if action == "stay" or cfg.slip == 0.0:
        return {_step(cell, action, cfg.width, cfg.height): 1.0}
    out = {}
    for move, p in ((action, 1.0 - cfg.slip), *((m, cfg.slip / 2) for m in PERPENDICULAR[action])):
        nxt = _step(cell, move, cfg.width, cfg.height)
        out[nxt] = out.get(nxt, 0.0) + p
    return out


def _pursuer_outcomes(cfg, mg, target):
    legal = [m for m in PURSUER_PREFERENCE if _step(mg, m, cfg.width, cfg.height) != mg]
    out = {}
    if cfg.p_pursue > 0:
        d = _manhattan(mg, target)
        greedy = next(
            (m for m in legal if _manhattan(_step(mg, m, cfg.width, cfg.height), target) < d),
            None,
        )
        nxt = _step(mg, greedy, cfg.width, cfg.height) if greedy else mg
        out[nxt] = cfg.p_pursue
    if cfg.p_pursue < 1 and legal:
        share = (1.0 - cfg.p_pursue) / len(legal)
        for m in legal:
            nxt = _step(mg, m, cfg.width, cfg.height)
            out[nxt] = out.get(nxt, 0.0) + share
    elif cfg.p_pursue < 1:
        out[mg] = out.get(mg, 0.0) + 1.0 - cfg.p_pursue
    return out


def build_mdp(config):
    """Generate the joint truck/pursuer :class:`Mdp` for ``config``.

    Joint states where the truck already sits on the goal or on the pursuer
    cannot be reached from a valid start and are made absorbing.
    """
    cfg = config
    cells = [(x, y) for y in range(cfg.height) for x in range(cfg.width)]
    n_actions = len(ACTIONS)
    delivered, captured = cfg.delivered_state, cfg.captured_state
    r_step = cfg.step_cost
    r_delivered = cfg.step_cost + cfg.r_goal
    r_captured = cfg.step_cost + cfg.r_capture

    truck = {(c, a): _truck_outcomes(cfg, c, a) for c in cells for a in ACTIONS}
    pursuer_cache = {}

    def pursuer(mg, target):
        key = (mg, target)
        if key not in pursuer_cache:
            pursuer_cache[key] = _pursuer_outcomes(cfg, mg, target)
        return pursuer_cache[key]

    triplets = []
    terminals = {delivered, captured}
    for adt in cells:
        for mg in cells:
            s = cfg.state_index(adt, mg)
            if adt == cfg.goal or adt == mg:
                terminals.add(s)
                continue
            for a_idx, action in enumerate(ACTIONS):
                row = {}
                for adt2, p_adt in truck[(adt, action)].items():
                    if adt2 == mg:
                        row[captured] = row.get(captured, 0.0) + p_adt
                        continue
                    if adt2 == cfg.goal:
                        row[delivered] = row.get(delivered, 0.0) + p_adt
                        continue
                    for mg2, p_mg in pursuer(mg, adt2).items():
                        nxt = captured if mg2 == adt2 else cfg.state_index(adt2, mg2)
                        row[nxt] = row.get(nxt, 0.0) + p_adt * p_mg
                for nxt, p in row.items():
                    r = r_captured if nxt == captured else r_delivered if nxt == delivered else r_step
                    triplets.append((s, a_idx, nxt, p, r))
    return Mdp.from_triplets(
        n_states=cfg.n_cells * cfg.n_cells + 2,
        n_actions=n_actions,
        triplets=triplets,
        discount=cfg.discount,
        terminals=terminals,
        initial_state=cfg.initial_state,
    )


@dataclass(frozen=True)
class FeatureVector:
    values: tuple
    names: tuple = FEATURE_NAMES

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if len(values) != len(self.names):
            raise ValueError("feature values and names differ in length")
        if not all(np.isfinite(values)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))

    def as_array(self):
        return np.array(self.values)

    def to_dict(self):
        return {"names": list(self.names), "values": list(self.values)}

    @classmethod
    def from_dict(cls, data):
        return cls(values=tuple(data["values"]), names=tuple(data["names"]))


def features(config):
    """Surrogate input features for a task configuration."""
    return FeatureVector(
        values=(
            config.p_pursue,
            config.slip,
            _manhattan(config.adt_start, config.goal),
            _manhattan(config.mg_start, config.adt_start),
            abs(config.r_capture),
        )
    )


class DeliveryFeaturizer(TransformerMixin, BaseEstimator):
    """Stateless transformer from a sequence of :class:`TaskConfig` to a feature matrix."""

    def fit(self, X, y=None):
        self.n_features_out_ = len(FEATURE_NAMES)
        return self

    def transform(self, X):
        return np.array([features(c).values for c in X], dtype=float).reshape(-1, len(FEATURE_NAMES))

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian parameter sweep around a base configuration.

    ``parameters`` maps TaskConfig field names to lists of values; ``order``
    fixes the nesting (first name varies slowest).
    """

    base: TaskConfig
    parameters: dict
    order: tuple

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("sweep spec must be a JSON object")
        base = TaskConfig.from_dict(data.get("base", {}))
        params = data.get("parameters")
        if not isinstance(params, dict) or not params:
            raise ConfigError("sweep spec needs a non-empty 'parameters' object", "parameters")
        order = tuple(data.get("order", list(params)))
        if sorted(order) != sorted(params):
            raise ConfigError("'order' must list exactly the swept parameters", "order")
        valid = {f.name for f in fields(TaskConfig)}
        for name in order:
            if name not in valid:
                raise ConfigError(f"unknown sweep parameter {name!r}", name)
            if not isinstance(params[name], list) or not params[name]:
                raise ConfigError(f"sweep parameter {name!r} needs a non-empty list of values", name)
        return cls(base=base, parameters=dict(params), order=order)

    def to_dict(self):
        return {"base": self.base.to_dict(), "parameters": self.parameters, "order": list(self.order)}


def load_sweep(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return SweepSpec.from_dict(data)


def enumerate_configs(sweep):
    """All configurations of a sweep, in lexicographic order of ``sweep.order``."""
    if isinstance(sweep, dict):
        sweep = SweepSpec.from_dict(sweep)
    if not sweep.order or any(len(sweep.parameters[n]) == 0 for n in sweep.order):
        raise ConfigError("sweep grid is empty")
    out = []
    for combo in itertools.product(*(sweep.parameters[n] for n in sweep.order)):
        out.append(sweep.base.replace(**dict(zip(sweep.order, combo))))
    return out


def fixture_path(name):
    """Path of a bundled fixture file (e.g. ``"blocked.json"``)."""
    from importlib.resources import files

    return str(files("famsec").joinpath("fixtures", name))
