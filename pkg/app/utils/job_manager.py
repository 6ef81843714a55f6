"""
Run Manager for experiment runs: run directory, log file and artifacts
"""

import csv
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from app.extensions import short_hash

logger = logging.getLogger(__name__)


def format_cell(value) -> str:
    """Floats with 17 significant digits; everything else as text"""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    if value is None:
        return ''
    return str(value)


def to_jsonable(value):
    """Plain-JSON form of numpy scalars, arrays and complex numbers"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


class RunManager:
    """Manages one run directory <output_dir>/<op>-<hash16>/ and its log"""

    def __init__(self, output_dir: str, op: str, config: Dict[str, Any]):
        self.op = op
        self.config = config
        self.config_hash = short_hash(config)
        self.run_dir = os.path.join(output_dir, f"{op}-{self.config_hash}")
        self.log_file_path = os.path.join(self.run_dir, 'run.log')
        self.artifacts: List[str] = []
        self._handler: Optional[logging.Handler] = None

        # Ensure run directory exists
        os.makedirs(self.run_dir, exist_ok=True)

    def start_run(self) -> str:
        """Write the log header and config.resolved; returns the run directory"""
        start_time = datetime.now()
        with open(self.log_file_path, 'w') as f:
            f.write(f"Run started at {start_time}\n")
            f.write(f"Op: {self.op}\n")
            f.write(f"Config hash: {self.config_hash}\n")
            f.write("-" * 40 + "\n")
        self.write_json('config.resolved', self.config)
        self._handler = logging.FileHandler(self.log_file_path)
        self._handler.setFormatter(logging.Formatter('[%(asctime)s] %(levelname)s %(name)s: %(message)s',
                                                     datefmt='%Y-%m-%d %H:%M:%S'))
        # append_log writes its own lines
        self._handler.addFilter(lambda record: record.name != __name__)
        logging.getLogger('app').addHandler(self._handler)
        return self.run_dir

    def finish_run(self, status: str):
        self.append_log(f"Run finished with status {status}")
        if self._handler is not None:
            logging.getLogger('app').removeHandler(self._handler)
            self._handler.close()
            self._handler = None

    def append_log(self, message: str):
        """Append message to the run log"""
        try:
            timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
            with open(self.log_file_path, 'a') as f:
                f.write(f"[{timestamp}] {message}\n")
        except OSError as e:
            logger.error("Error writing to log for run %s: %s", self.run_dir, e)
        logger.info(message)

    def _path(self, name: str) -> str:
        path = os.path.join(self.run_dir, name)
        if path not in self.artifacts:
            self.artifacts.append(path)
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> str:
        path = self._path(name)
        with open(path, 'w') as f:
            json.dump(to_jsonable(payload), f, indent=2, sort_keys=True)
            f.write('\n')
        return path

    def write_report(self, report: Dict[str, Any]) -> str:
        return self.write_json('report.json', dict(report, config_hash=self.config_hash))

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        """CSV with a '# config_hash=' header line and a fixed column order"""
        path = self._path(name)
        with open(path, 'w', newline='') as f:
            f.write(f"# config_hash={self.config_hash}\n")
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(columns)
            for row in rows:
                if isinstance(row, dict):
                    row = [row[column] for column in columns]
                writer.writerow([format_cell(value) for value in row])
        logger.debug("wrote %s", path)
        return path

    def write_bytes(self, name: str, payload: bytes) -> str:
        path = self._path(name)
        with open(path, 'wb') as f:
            f.write(payload)
        return path

    def get_run_details(self) -> Dict[str, Any]:
        """Run metadata and log content"""
        log_content = ""
        if os.path.exists(self.log_file_path):
            try:
                with open(self.log_file_path, 'r') as f:
                    log_content = f.read()
            except OSError as e:
                log_content = f"Error reading log file: {e}"
        return {'op': self.op, 'config_hash': self.config_hash, 'run_dir': self.run_dir,
                'artifacts': list(self.artifacts), 'log_content': log_content}
