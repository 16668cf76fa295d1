"""
Tests for the report schema validator module
"""
import json
import os
import tempfile
import unittest

from laplacian_solver.report_generator import RunReport
from laplacian_solver.report_schema import ReportSchemaValidator, load_schema, result_digest


class TestReportSchemaValidator(unittest.TestCase):
    """Test cases for the ReportSchemaValidator class"""

    def setUp(self):
        """Set up test fixtures"""
        self.validator = ReportSchemaValidator()
        self.temp_dir = tempfile.TemporaryDirectory()
        self.temp_file = os.path.join(self.temp_dir.name, "report.json")

        self.valid_report = RunReport(
            command='solve',
            config={'eps': 1e-6, 'seed': 3},
            seed=3,
            input_digest=None,
            timings={'total': 0.25},
            counts={'outer_iterations': 4},
            metrics={'residual': 1e-9},
        ).to_dict()

    def tearDown(self):
        """Clean up test fixtures"""
        self.temp_dir.cleanup()

    def _dump(self, data):
        with open(self.temp_file, 'w') as f:
            json.dump(data, f)

    def test_validate_valid_report(self):
        """Test schema validation with a valid report"""
        self._dump(self.valid_report)
        result = self.validator.validate(self.temp_file)

        self.assertEqual(result['file'], self.temp_file)
        self.assertEqual(result['total_records'], 1)
        self.assertEqual(result['valid_records'], 1)
        self.assertEqual(result['invalid_records'], 0)
        self.assertTrue(result['field_types_valid'])
        self.assertEqual(len(result['errors']), 0)

    def test_validate_missing_fields(self):
        """Test schema validation with missing fields"""
        report = dict(self.valid_report)
        del report['seed']
        del report['metrics']
        self._dump(report)
        result = self.validator.validate(self.temp_file)

        self.assertEqual(result['invalid_records'], 1)
        self.assertIn('seed', result['missing_fields'])
        self.assertIn('metrics', result['missing_fields'])

    def test_validate_field_types(self):
        """Test type, enum and finiteness checks"""
        bad = [
            dict(self.valid_report, seed='3'),
            dict(self.valid_report, seed=True),
            dict(self.valid_report, command='plot'),
            dict(self.valid_report, exit_status=7),
            dict(self.valid_report, schema_version='0.1'),
        ]
        for record in bad:
            result = self.validator._create_validation_result('inline')
            self.assertFalse(self.validator.validate_record(record, result), msg=str(record))
            self.assertFalse(result['field_types_valid'])

        record = dict(self.valid_report, metrics={'residual': float('nan')})
        self.assertIn('metrics.residual', ' '.join(self.validator._check_field_types(record)))

    def test_validate_content(self):
        """Test required metrics and the digest check"""
        record = dict(self.valid_report, metrics={'oracle_error': 1e-9})
        record['result_digest'] = result_digest(record)
        problems = self.validator._check_content(record)
        self.assertEqual(len(problems), 1)
        self.assertIn("missing 'residual'", problems[0])

        tampered = dict(self.valid_report, seed=4)
        self.assertIn('result_digest', ' '.join(self.validator._check_content(tampered)))

    def test_digest_ignores_timings(self):
        """Test that timings do not enter the result digest"""
        slower = dict(self.valid_report, timings={'total': 99.0})
        self.assertEqual(result_digest(slower), self.valid_report['result_digest'])

    def test_validate_list_of_reports(self):
        """Test a file holding several reports"""
        broken = dict(self.valid_report, exit_status='ok')
        self._dump([self.valid_report, broken, 5])
        result = self.validator.validate(self.temp_file)

        self.assertEqual(result['total_records'], 3)
        self.assertEqual(result['valid_records'], 1)
        self.assertEqual(result['invalid_records'], 2)
        self.assertTrue(result['errors'][-1].startswith('Record 3'))

    def test_validate_unreadable_file(self):
        """Test file reading errors"""
        with open(self.temp_file, 'w') as f:
            f.write("{not json")
        result = self.validator.validate(self.temp_file)
        self.assertEqual(result['total_records'], 0)
        self.assertTrue(result['errors'][0].startswith('File reading error'))

    def test_schema_file(self):
        """Test the shipped schema"""
        schema = load_schema()
        self.assertEqual(schema['schema_version'], self.valid_report['schema_version'])
        self.assertIn('result_digest', schema['required'])


if __name__ == "__main__":
    unittest.main()
