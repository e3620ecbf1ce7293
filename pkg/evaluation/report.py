import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import attrs
from jinja2 import Environment, select_autoescape

from evaluation.fidelity import MetricResult
from utils.exceptions import FormatError
from utils.figure_capture import FigureCapture
from utils.logger import logger
from utils.retry_mechanism import retry_on_exception

REPORT_FORMAT_VERSION = 1

_HTML_TEMPLATE = """<!DOCTYPE html>
<html>
<head><meta charset="utf-8"><title>netsynth {{ report.command }} report</title></head>
<body>
<h1>{{ report.command }} report</h1>
<p>Created {{ report.created }}</p>
<h2>Metrics</h2>
<table border="1">
<tr><th>metric</th><th>value</th><th>payload</th></tr>
{% for metric in report.metrics %}
<tr>
<td>{{ metric.name }}</td>
<td>{% if metric.scalar is not none %}{{ "%.6g"|format(metric.scalar) }}{% else %}-{% endif %}</td>
<td>{% if metric.curve is not none %}curve ({{ metric.curve[0]|length }} points){% endif %}
{% if metric.histogram is not none %}histogram ({{ metric.histogram[1]|length }} bins){% endif %}</td>
</tr>
{% endfor %}
</table>
{% for name, table in report.tables.items() %}
<h2>{{ name }}</h2>
<pre>{{ table|tojson(indent=2) }}</pre>
{% endfor %}
{% if report.plots %}
<h2>Plots</h2>
{% for plot in report.plots %}<p><a href="{{ plot }}">{{ plot }}</a></p>{% endfor %}
{% endif %}
<h2>Run</h2>
<pre>{{ report.metadata|tojson(indent=2) }}</pre>
</body>
</html>
"""


@attrs.define
class EvalReport:
    """Metric results, tables and plot paths of one evaluation command"""

    command: str
    metrics: List[MetricResult] = attrs.field(factory=list)
    tables: Dict[str, Any] = attrs.field(factory=dict)
    metadata: Dict[str, Any] = attrs.field(factory=dict)
    plots: List[str] = attrs.field(factory=list)
    created: str = attrs.field(factory=lambda: datetime.now().isoformat(timespec="seconds"))

    def metric(self, name: str) -> Optional[MetricResult]:
        return next((m for m in self.metrics if m.name == name), None)

    @property
    def metric_names(self) -> List[str]:
        return [m.name for m in self.metrics]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "command": self.command,
            "created": self.created,
            "metrics": [m.to_dict() for m in self.metrics],
            "tables": self.tables,
            "metadata": self.metadata,
            "plots": self.plots,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        if data.get("format_version") != REPORT_FORMAT_VERSION:
            raise FormatError(f"unsupported report format_version {data.get('format_version')}")
        try:
            return cls(
                command=data["command"],
                metrics=[MetricResult.from_dict(m) for m in data["metrics"]],
                tables=data.get("tables", {}),
                metadata=data.get("metadata", {}),
                plots=data.get("plots", []),
                created=data.get("created", ""),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"malformed report: {e}") from e

    @retry_on_exception()
    def save_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, ensure_ascii=False)
        logger.log_artifact("report", str(path))
        return path

    @classmethod
    def load_json(cls, path: Union[str, Path]) -> "EvalReport":
        try:
            with open(path, "r", encoding="utf-8") as handle:
                return cls.from_dict(json.load(handle))
        except FileNotFoundError as e:
            raise FormatError(f"report not found: {path}") from e
        except json.JSONDecodeError as e:
            raise FormatError(f"report is not valid JSON: {path}: {e}") from e

    def render_html(self) -> str:
        env = Environment(autoescape=select_autoescape(default=True))
        return env.from_string(_HTML_TEMPLATE).render(report=self.to_dict())

    @retry_on_exception()
    def save_html(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render_html(), encoding="utf-8")
        logger.log_artifact("html summary", str(path))
        return path

    def capture_plots(self, capture: FigureCapture) -> List[str]:
        """One plot per curve or histogram metric; real-data counterparts are overlaid when present"""
        for metric in self.metrics:
            if metric.curve is not None:
                curves = {"synthetic": metric.curve[1]}
                if "real_curve" in metric.details:
                    curves = {"real": metric.details["real_curve"], **curves}
                if metric.name in ("pearson", "memorization"):
                    samples = {"synthetic": metric.curve[0]}
                    if "real_values" in metric.details:
                        samples["real"] = metric.details["real_values"]
                    self.plots.append(capture.capture_cdfs(metric.name, samples))
                else:
                    self.plots.append(capture.capture_curves(metric.name, curves, x=metric.curve[0]))
            if metric.histogram is not None:
                counts = {"synthetic": metric.histogram[1]}
                if "real_counts" in metric.details:
                    counts = {"real": metric.details["real_counts"], **counts}
                self.plots.append(capture.capture_histograms(metric.name, metric.histogram[0], counts))
        return self.plots
