"""
Schema validation module for run reports
"""

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

from laplacian_solver.base import BaseValidator

logger = logging.getLogger(__name__)

SCHEMA_FILE = Path(__file__).with_name('report_schema.json')
DIGEST_EXCLUDED = ('timings', 'result_digest')

JSON_TYPES = {
    'string': str,
    'integer': int,
    'number': (int, float),
    'object': dict,
    'array': list,
    'boolean': bool,
    'null': type(None),
}


def load_schema(path: Optional[str] = None) -> Dict[str, Any]:
    with open(path or SCHEMA_FILE, 'r', encoding='utf-8') as fh:
        return json.load(fh)


def result_digest(report: Dict[str, Any]) -> str:
    """sha256 over the canonical JSON of everything except timings"""
    payload = {k: v for k, v in report.items() if k not in DIGEST_EXCLUDED}
    text = json.dumps(payload, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def _non_finite(value: Any, path: str = '') -> List[str]:
    if isinstance(value, float):
        return [] if math.isfinite(value) else [path or '<root>']
    if isinstance(value, dict):
        return [p for k, v in value.items() for p in _non_finite(v, f"{path}.{k}" if path else str(k))]
    if isinstance(value, list):
        return [p for i, v in enumerate(value) for p in _non_finite(v, f"{path}[{i}]")]
    return []


class ReportSchemaValidator(BaseValidator):
    """Validates JSON run reports against the shipped schema"""

    def __init__(self, schema_file: Optional[str] = None):
        schema = load_schema(schema_file)
        self.schema_version = schema['schema_version']
        self.required_fields = list(schema['required'])
        self.properties = schema['properties']
        self.required_metrics = schema.get('required_metrics', {})

        self.type_checks = {}
        for name, spec in self.properties.items():
            kinds = spec['type'] if isinstance(spec['type'], list) else [spec['type']]
            self.type_checks[name] = kinds

    def _create_validation_result(self, file_path: str) -> Dict[str, Any]:
        """Create initial validation result structure"""
        return {
            'file': file_path,
            'total_records': 0,
            'valid_records': 0,
            'invalid_records': 0,
            'missing_fields': [],
            'field_types_valid': True,
            'errors': []
        }

    def _check_required_fields(self, record: Dict[str, Any]) -> List[str]:
        """Check if record has all required fields"""
        return [
            field for field in self.required_fields
            if field not in record
        ]

    @staticmethod
    def _matches(value: Any, kind: str) -> bool:
        # bool is an int subclass but never a JSON integer
        if kind in ('integer', 'number') and isinstance(value, bool):
            return False
        return isinstance(value, JSON_TYPES[kind])

    def _check_field_types(self, record: Dict[str, Any]) -> List[str]:
        """Validate field types, enums and finiteness of a record"""
        type_errors = []
        for field, kinds in self.type_checks.items():
            if field not in record:
                continue
            value = record[field]
            if not any(self._matches(value, kind) for kind in kinds):
                type_errors.append(
                    f"{field}: expected {'/'.join(kinds)}, got {type(value).__name__}"
                )
                continue
            allowed = self.properties[field].get('enum')
            if allowed is not None and value not in allowed:
                type_errors.append(f"{field}: {value!r} not one of {allowed}")

        bad = _non_finite(record)
        if bad:
            type_errors.append(f"non-finite values at {', '.join(bad)}")
        if record.get('schema_version') not in (None, self.schema_version):
            type_errors.append(
                f"schema_version: expected {self.schema_version}, got {record['schema_version']}"
            )
        return type_errors

    def _check_content(self, record: Dict[str, Any]) -> List[str]:
        """Command-specific metrics and the result digest"""
        problems = []
        metrics = record.get('metrics') or {}
        for key in self.required_metrics.get(record.get('command'), []):
            if key not in metrics:
                problems.append(f"metrics: missing '{key}' for command {record['command']}")
        if record.get('result_digest') != result_digest(record):
            problems.append("result_digest does not match the report contents")
        return problems

    def _update_validation_result(
        self,
        validation_result: Dict[str, Any],
        record_index: int,
        missing_fields: Optional[List[str]] = None,
        type_errors: Optional[List[str]] = None
    ) -> bool:
        """Update validation result with findings"""
        if missing_fields:
            validation_result['missing_fields'].extend(missing_fields)
            validation_result['invalid_records'] += 1
            validation_result['errors'].append(
                f"Record {record_index + 1}: Missing fields {missing_fields}"
            )
            return False

        if type_errors:
            validation_result['field_types_valid'] = False
            validation_result['invalid_records'] += 1
            validation_result['errors'].append(
                f"Record {record_index + 1}: Type errors: {', '.join(type_errors)}"
            )
            return False

        validation_result['valid_records'] += 1
        return True

    def validate_record(self, record: Any, validation_result: Dict[str, Any], index: int = 0) -> bool:
        validation_result['total_records'] += 1
        if not isinstance(record, dict):
            return self._update_validation_result(
                validation_result, index, type_errors=[f"report must be an object, got {type(record).__name__}"]
            )
        missing_fields = self._check_required_fields(record)
        if missing_fields:
            return self._update_validation_result(validation_result, index, missing_fields=missing_fields)
        type_errors = self._check_field_types(record)
        if not type_errors:
            type_errors = self._check_content(record)
        return self._update_validation_result(validation_result, index, type_errors=type_errors)

    def validate(self, file_path: str) -> Dict[str, Any]:
        """Validate a JSON report file; a top-level list holds several reports"""
        validation_result = self._create_validation_result(file_path)

        try:
            with open(file_path, 'r', encoding='utf-8') as fh:
                data = json.load(fh)
        except Exception as e:
            validation_result['errors'].append(f"File reading error: {str(e)}")
            return validation_result

        records = data if isinstance(data, list) else [data]
        for i, record in enumerate(records):
            self.validate_record(record, validation_result, i)
        return validation_result
