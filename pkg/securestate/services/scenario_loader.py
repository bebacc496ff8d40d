"""
Scenario files: YAML text -> validated ScenarioConfig -> ResolvedScenario.

Every failure is raised as ConfigError whose details carry the dotted
``field`` path and, when the YAML node can be located, its ``line``.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import ValidationError

from securestate.errors import ConfigError, DimensionError, ExpressionError
from securestate.schemas.scenario import ScenarioConfig
from securestate.services.builtins import get_builtin
from securestate.services.expressions import SignalExpression, parse_signal
from securestate.services.linsys import AttackScenario, LinearSystem, Trajectory, simulate

logger = logging.getLogger(__name__)


class _LineIndex:
    """Maps dotted config paths to 1-based YAML line numbers"""

    def __init__(self, root: Optional[yaml.Node]):
        self.root = root

    def line(self, path: Sequence[Any]) -> Optional[int]:
        node = self.root
        if node is None:
            return None
        found = node.start_mark.line + 1
        for part in path:
            child = None
            if isinstance(node, yaml.MappingNode):
                for key_node, value_node in node.value:
                    if str(key_node.value) == str(part):
                        child = value_node
                        break
            elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
                child = node.value[part]
            if child is None:
                break
            node = child
            found = node.start_mark.line + 1
        return found


def _detail(lines: _LineIndex, path: Sequence[Any], message: str, **extra) -> Dict[str, Any]:
    detail = {"field": ".".join(str(p) for p in path) or None, "message": message, **extra}
    line = lines.line(path)
    if line is not None:
        detail["line"] = line
    return detail


@dataclass(eq=False)
class ResolvedScenario:
    name: str
    config: ScenarioConfig
    system: LinearSystem
    x0: np.ndarray
    inputs: np.ndarray
    attack: AttackScenario
    signals: Dict[int, SignalExpression]
    K: int
    s: int
    source: Optional[Path] = None
    builtin: Optional[str] = None

    def trajectory(self, attack: Optional[AttackScenario] = None) -> Trajectory:
        return simulate(self.system, self.x0, self.inputs, attack or self.attack, self.K)

    def resolved_config(self) -> Dict[str, Any]:
        """The effective configuration; loading it again yields an equivalent scenario"""
        data = self.config.model_dump(mode="json", exclude_none=True)
        data["name"] = self.name
        data["method"]["s"] = self.s
        if self.system.p and self.config.input is None:
            data["input"] = self.inputs.tolist()
        return data


def _resolve_system(config: ScenarioConfig, lines: _LineIndex) -> Tuple[LinearSystem, Optional[str], Optional[str]]:
    if config.system.builtin:
        try:
            builtin = get_builtin(config.system.builtin)
        except ConfigError as exc:
            raise ConfigError([_detail(lines, ("system", "builtin"), d["message"]) for d in exc.details]) from exc
        return builtin.system, builtin.name, builtin.default_input
    try:
        system = LinearSystem.from_matrices(A=config.system.A, C=config.system.C, B=config.system.B)
    except DimensionError as exc:
        raise ConfigError([_detail(lines, ("system",), exc.message)]) from exc
    return system, None, None


def _resolve_inputs(config: ScenarioConfig, system: LinearSystem, default: Optional[str], lines: _LineIndex) -> np.ndarray:
    K = config.horizon
    source = config.input if config.input is not None else default
    if system.p == 0:
        if source not in (None, 0, 0.0, []):
            raise ConfigError([_detail(lines, ("input",), "system has no inputs (p = 0) but 'input' is set")])
        return np.zeros((K, 0))
    if source is None:
        raise ConfigError([_detail(lines, ("input",), f"system has p={system.p} inputs; 'input' is required")])

    if isinstance(source, (int, float)):
        return np.full((K, system.p), float(source))
    if isinstance(source, str):
        try:
            signal = parse_signal(source, "input")
            values = [signal(k) for k in range(K)]
        except ExpressionError as exc:
            raise ConfigError([_detail(lines, ("input",), d["message"], value=source) for d in exc.details]) from exc
        return np.repeat(np.array(values, dtype=float).reshape(K, 1), system.p, axis=1)

    rows = np.array(source, dtype=float)
    if rows.ndim == 1:
        rows = rows.reshape(-1, 1) if system.p == 1 else np.tile(rows, (K, 1))
    if rows.ndim != 2 or rows.shape[1] != system.p:
        raise ConfigError([_detail(lines, ("input",), f"inputs must be K×{system.p}, got shape {list(rows.shape)}")])
    if rows.shape[0] < K:
        raise ConfigError([_detail(lines, ("input",), f"need {K} input rows for horizon {K}, got {rows.shape[0]}")])
    return rows[:K]


def _resolve_attack(config: ScenarioConfig, q: int, lines: _LineIndex) -> Tuple[AttackScenario, Dict[int, SignalExpression]]:
    gamma = config.attack.gamma
    errors: List[Dict[str, Any]] = []
    if len(set(gamma)) != len(gamma):
        errors.append(_detail(lines, ("attack", "gamma"), f"duplicate sensors in {gamma}"))
    bad = [i for i in gamma if i < 1 or i > q]
    if bad:
        errors.append(_detail(lines, ("attack", "gamma"), f"sensors {bad} outside 1..{q}"))
    signals: Dict[int, SignalExpression] = {}
    for sensor, source in config.attack.signals.items():
        path = ("attack", "signals", sensor)
        if sensor not in gamma:
            errors.append(_detail(lines, path, f"signal given for sensor {sensor}, which is not in gamma"))
            continue
        try:
            expression = parse_signal(source, ".".join(str(p) for p in path))
            for k in range(config.horizon + 1):
                expression(k)
            signals[sensor] = expression
        except ExpressionError as exc:
            errors.extend(_detail(lines, path, d["message"], value=d.get("value")) for d in exc.details)
    if errors:
        raise ConfigError(errors)

    def signal(k: int, i: int) -> float:
        expression = signals.get(i)
        return expression(k) if expression is not None else 0.0

    return AttackScenario(gamma=tuple(gamma), signal=signal), signals


def resolve_scenario(config: ScenarioConfig, name: Optional[str] = None, root_node: Optional[yaml.Node] = None,
                     source: Optional[Path] = None) -> ResolvedScenario:
    lines = _LineIndex(root_node)
    system, builtin, default_input = _resolve_system(config, lines)

    x0 = np.array(config.x0, dtype=float)
    if x0.shape[0] != system.n:
        raise ConfigError([_detail(lines, ("x0",), f"x0 has length {x0.shape[0]}, system has n={system.n}")])
    inputs = _resolve_inputs(config, system, default_input, lines)
    attack, signals = _resolve_attack(config, system.q, lines)

    s = config.method.s if config.method.s is not None else len(attack.gamma)
    if s > system.q - 1:
        raise ConfigError([_detail(lines, ("method", "s"), f"s={s} leaves no trusted sensor among q={system.q}")])
    if config.method.kind == "known" and not attack.gamma and s:
        raise ConfigError([_detail(lines, ("method", "kind"), "method 'known' needs the attacked set gamma")])

    resolved_name = name or config.name or (source.stem if source else "scenario")
    logger.info(f"Resolved scenario {resolved_name}: n={system.n}, p={system.p}, q={system.q}, gamma={list(attack.gamma)}, K={config.horizon}")
    return ResolvedScenario(
        name=resolved_name,
        config=config,
        system=system,
        x0=x0,
        inputs=inputs,
        attack=attack,
        signals=signals,
        K=config.horizon,
        s=s,
        source=source,
        builtin=builtin,
    )


def parse_scenario(text: str, source: Optional[Path] = None) -> ResolvedScenario:
    try:
        root_node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        detail = {"field": None, "message": f"invalid YAML: {getattr(exc, 'problem', None) or exc}"}
        if mark is not None:
            detail["line"] = mark.line + 1
        raise ConfigError([detail]) from exc
    if not isinstance(data, dict):
        raise ConfigError([{"field": None, "message": "scenario file must be a mapping of sections", "line": 1}])

    lines = _LineIndex(root_node)
    try:
        config = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        details = [_detail(lines, error["loc"], error["msg"]) for error in exc.errors()]
        raise ConfigError(details) from exc
    return resolve_scenario(config, root_node=root_node, source=source)


def load_scenario(path: Union[str, Path]) -> ResolvedScenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([{"field": None, "message": f"cannot read scenario {path}: {exc.strerror}"}]) from exc
    return parse_scenario(text, source=path)
