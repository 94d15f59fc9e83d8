import logging
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd

from lib.errors import OutputError
from lib.utils import DataUtils

REPORT_NAME = "report.json"
# excluded from the payload digest so identical configs hash identically
VOLATILE_FIELDS = ('duration_seconds', 'payload_sha256')


class OutputManager:
    """Writes one run directory: CSV tables plus a JSON report with a file manifest"""

    def __init__(self, run_dir: str):
        self.run_dir = Path(run_dir)
        self.logger = logging.getLogger(__name__)

    def _prepare(self):
        try:
            self.run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputError(str(self.run_dir), e.strerror or str(e))

    def _write_text(self, name: str, text: str) -> Dict[str, Any]:
        path = self.run_dir / name
        try:
            with open(path, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
        except OSError as e:
            raise OutputError(str(path), e.strerror or str(e))
        return {'path': name, 'sha256': DataUtils.sha256_text(text), 'bytes': len(text.encode('utf-8'))}

    def write_tables(self, tables: Dict[str, pd.DataFrame]) -> List[Dict[str, Any]]:
        """Write CSVs in name order; returns the manifest with relative paths"""
        self._prepare()
        manifest = []
        for name in sorted(tables):
            entry = self._write_text(name, DataUtils.frame_to_csv(tables[name]))
            entry['rows'] = int(len(tables[name]))
            manifest.append(entry)
        return manifest

    @staticmethod
    def payload_digest(report: Dict[str, Any]) -> str:
        payload = {k: v for k, v in report.items() if k not in VOLATILE_FIELDS}
        return DataUtils.sha256_text(DataUtils.canonical_json(payload))

    def write_outputs(self, tables: Dict[str, pd.DataFrame], report: Dict[str, Any]) -> List[Dict[str, Any]]:
        """Write every table and the report; the report's `files` field receives the manifest"""
        manifest = self.write_tables(tables)
        report['files'] = manifest
        report['payload_sha256'] = self.payload_digest(report)
        self._write_text(REPORT_NAME, DataUtils.canonical_json(report))
        self.logger.info(f"💾 Wrote {len(manifest)} tables and {REPORT_NAME} to {self.run_dir}")
        return manifest
