"""
Check-list engine shared by covariance validation and duality pre-flight checks.
Every check appends a {'check_name', 'result', 'message'} record.
"""

from typing import Dict, Any, List

PASS = 'PASS'
FAIL = 'FAIL'
WARN = 'WARN'
ERROR = 'ERROR'


class CheckEngine:
    """Base class collecting check results"""

    def __init__(self, subject: str = ""):
        self.subject = subject
        self.results: List[Dict[str, Any]] = []

    def record(self, check_name: str, result: str, message: str, **values):
        entry = {'check_name': check_name, 'result': result, 'message': message}
        if values:
            entry['values'] = values
        self.results.append(entry)
        return entry

    def expect(self, check_name: str, condition: bool, ok_message: str, fail_message: str,
               severity: str = FAIL, **values):
        """Record PASS when condition holds, otherwise `severity`"""
        return self.record(check_name, PASS if condition else severity,
                           ok_message if condition else fail_message, **values)

    def run_all_checks(self) -> List[Dict[str, Any]]:
        raise NotImplementedError

    def result_of(self, check_name: str) -> str:
        for entry in self.results:
            if entry['check_name'] == check_name:
                return entry['result']
        return None

    @property
    def passed(self) -> bool:
        return all(entry['result'] in (PASS, WARN) for entry in self.results)

    def failures(self) -> List[Dict[str, Any]]:
        return [entry for entry in self.results if entry['result'] in (FAIL, ERROR)]

    def to_list(self) -> List[Dict[str, Any]]:
        return [dict(entry) for entry in self.results]
