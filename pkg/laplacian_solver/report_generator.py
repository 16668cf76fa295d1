"""
Report generation module for solver runs
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from laplacian_solver.file_io import file_digest
from laplacian_solver.report_schema import ReportSchemaValidator, load_schema, result_digest

logger = logging.getLogger(__name__)


def to_plain(value: Any) -> Any:
    """Convert numpy scalars, arrays and tuples into JSON-ready Python values"""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


@dataclass
class RunReport:
    """Outcome of one CLI run; everything but ``timings`` is deterministic for a seed"""
    command: str
    config: Dict[str, Any]
    seed: int
    input_digest: Optional[str] = None
    timings: Dict[str, float] = field(default_factory=dict)
    counts: Dict[str, Any] = field(default_factory=dict)
    metrics: Dict[str, Any] = field(default_factory=dict)
    exit_status: int = 0

    def to_dict(self) -> Dict[str, Any]:
        report = to_plain({
            'schema_version': load_schema()['schema_version'],
            'command': self.command,
            'input_digest': self.input_digest,
            'config': self.config,
            'seed': self.seed,
            'timings': self.timings,
            'counts': self.counts,
            'metrics': self.metrics,
            'exit_status': self.exit_status,
        })
        report['result_digest'] = result_digest(report)
        return report


class ReportGenerator:
    """Writes run reports as JSON and optional Excel workbooks"""

    def __init__(self, output_file: str = 'run_report.json'):
        self.output_file = output_file
        self.schema_validator = ReportSchemaValidator()
        self.logger = logging.getLogger(__name__)

    def build(
        self,
        command: str,
        config: Dict[str, Any],
        seed: int,
        input_file: Optional[str] = None,
        timings: Optional[Dict[str, float]] = None,
        counts: Optional[Dict[str, Any]] = None,
        metrics: Optional[Dict[str, Any]] = None,
        exit_status: int = 0
    ) -> RunReport:
        digest = file_digest(input_file) if input_file and Path(input_file).exists() else None
        return RunReport(
            command=command,
            config=config,
            seed=seed,
            input_digest=digest,
            timings=timings or {},
            counts=counts or {},
            metrics=metrics or {},
            exit_status=exit_status,
        )

    def save_json(self, report: RunReport, output_file: Optional[str] = None) -> Dict[str, Any]:
        output_file = output_file or self.output_file
        data = report.to_dict()
        with open(output_file, 'w', encoding='utf-8') as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write('\n')

        check = self.schema_validator.validate(output_file)
        if check['errors']:
            self.logger.warning(f"Report {output_file} fails its schema: {check['errors'][0]}")
        self.logger.info(f"Run report saved to {output_file}")
        return data

    def _get_summary_data(self, data: Dict[str, Any]) -> List[Dict[str, Any]]:
        """Top-level fields as Field/Value rows"""
        rows = []
        for key in ('command', 'schema_version', 'seed', 'exit_status', 'input_digest', 'result_digest'):
            rows.append({'Field': key, 'Value': data.get(key)})
        for key, value in sorted(data.get('timings', {}).items()):
            rows.append({'Field': f"timings.{key}", 'Value': value})
        return rows

    def _get_config_data(self, data: Dict[str, Any]) -> List[Dict[str, Any]]:
        return [{'Parameter': k, 'Value': v} for k, v in sorted(data.get('config', {}).items())]

    def _get_metric_data(self, data: Dict[str, Any]) -> List[Dict[str, Any]]:
        rows = []
        for section in ('counts', 'metrics'):
            for key, value in sorted(data.get(section, {}).items()):
                if isinstance(value, (list, dict)):
                    continue
                rows.append({'Section': section, 'Name': key, 'Value': value})
        return rows

    def _get_level_data(self, data: Dict[str, Any]) -> List[Dict[str, Any]]:
        return list(data.get('counts', {}).get('levels', []))

    def save_excel(self, report: RunReport, output_file: str) -> None:
        """Workbook with Summary, Config, Metrics and (when present) Levels sheets"""
        data = report.to_dict()
        with pd.ExcelWriter(output_file, engine='openpyxl') as writer:
            pd.DataFrame(self._get_summary_data(data)).to_excel(
                writer,
                sheet_name='Summary',
                index=False
            )

            pd.DataFrame(self._get_config_data(data)).to_excel(
                writer,
                sheet_name='Config',
                index=False
            )

            pd.DataFrame(self._get_metric_data(data)).to_excel(
                writer,
                sheet_name='Metrics',
                index=False
            )

            levels = self._get_level_data(data)
            if levels:
                pd.DataFrame(levels).to_excel(
                    writer,
                    sheet_name='Levels',
                    index=False
                )

        self.logger.info(f"Run workbook saved to {output_file}")
