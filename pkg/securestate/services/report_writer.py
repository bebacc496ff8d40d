"""
Report rendering.

machine: a YAML document of flat dotted keys with scalar or flow-style
array values (floats to ``float_digits`` significant digits), followed by
the nested ``resolved_config`` section. Identical inputs give identical
bytes; timings are left out unless ``machine_report_timings`` is set.

human: Jinja2 text templates under ``securestate/templates/reports``.
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterator, List, Optional, Tuple, Union

import yaml
from jinja2 import Environment, FileSystemLoader, StrictUndefined, select_autoescape
from pydantic import BaseModel

from securestate.config import settings

logger = logging.getLogger(__name__)

template_dir = Path(__file__).parent.parent / "templates" / "reports"
env = Environment(
    loader=FileSystemLoader(str(template_dir)),
    autoescape=select_autoescape(["html", "xml"]),
    undefined=StrictUndefined,
    trim_blocks=True,
    lstrip_blocks=True,
)

TEMPLATES = {
    "reconstruct": "reconstruct.txt.j2",
    "audit": "audit.txt.j2",
    "attack-synth": "synthesis.txt.j2",
}


def format_float(value: float, digits: Optional[int] = None) -> str:
    """YAML-parseable float with a fixed number of significant digits"""
    digits = settings.float_digits if digits is None else digits
    if math.isnan(value):
        return ".nan"
    if math.isinf(value):
        return ".inf" if value > 0 else "-.inf"
    text = format(value, f".{digits}g")
    if text == "-0":
        text = "0"
    mantissa, _, exponent = text.partition("e")
    if "." not in mantissa:
        mantissa += ".0"
    return f"{mantissa}e{exponent}" if exponent else mantissa


def format_scalar(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_scalar(item) for item in value) + "]"
    return json.dumps(str(value), ensure_ascii=False)


def _is_flow(value: Any) -> bool:
    """Lists of scalars (or of such lists) print inline"""
    if isinstance(value, dict):
        return False
    if isinstance(value, (list, tuple)):
        return all(_is_flow(item) for item in value)
    return True


def flatten(data: Any, prefix: str = "") -> Iterator[Tuple[str, Any]]:
    if isinstance(data, dict):
        if not data and prefix:
            yield prefix, []
        for key, value in data.items():
            yield from flatten(value, f"{prefix}.{key}" if prefix else str(key))
    elif isinstance(data, (list, tuple)) and not _is_flow(data):
        for index, item in enumerate(data):
            yield from flatten(item, f"{prefix}.{index}")
    else:
        yield prefix, data


def render_machine(report: BaseModel) -> str:
    exclude = {"resolved_config"}
    if not settings.machine_report_timings:
        exclude.add("timings")
    body = report.model_dump(mode="python", exclude=exclude)
    lines: List[str] = [f"{key}: {format_scalar(value)}" for key, value in flatten(body)]
    resolved = getattr(report, "resolved_config", None)
    if resolved is not None:
        lines.append(yaml.safe_dump({"resolved_config": resolved}, sort_keys=True, default_flow_style=None).rstrip("\n"))
    return "\n".join(lines) + "\n"


def _fmt(value: Any, digits: int = 6) -> str:
    if isinstance(value, float):
        return format(value, f".{digits}g")
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v, digits) for v in value) + "]"
    return str(value)


env.filters["num"] = _fmt


def render_human(report: BaseModel) -> str:
    command = getattr(report, "command", "reconstruct")
    template = env.get_template(TEMPLATES[command])
    return template.render(report=report)


def write_report(report: BaseModel, fmt: str = "human", out: Optional[Union[str, Path]] = None) -> str:
    text = render_machine(report) if fmt == "machine" else render_human(report)
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"Wrote {fmt} report to {path}")
    return text
