"""
PDF verdict report: summary table plus the colour-coded check list
"""

import logging
from datetime import datetime
from typing import Any, Dict, List

from fpdf import FPDF

logger = logging.getLogger(__name__)

VERDICT_COLORS = {
    'consistent': (0, 128, 0),
    'ok': (0, 128, 0),
    'inconsistent': (255, 0, 0),
    'inconclusive': (165, 42, 42),
}


class VerdictPDF(FPDF):
    def __init__(self, title: str, config_hash: str):
        super().__init__()
        self.title_text = title
        self.config_hash = config_hash

    def header(self):
        self.set_font('helvetica', 'B', 15)
        self.cell(0, 10, sanitize_text(self.title_text), border=True, ln=True, align='C')
        self.ln(5)

    def footer(self):
        self.set_y(-15)
        self.set_font('helvetica', 'I', 8)
        self.cell(0, 10, f'Page {self.page_no()} | config {self.config_hash} | '
                         f'Generated on {datetime.now().strftime("%Y-%m-%d %H:%M:%S")}', align='C')


def sanitize_text(text):
    """
    Remove characters that are not supported by standard PDF fonts
    """
    if not text:
        return ""
    text = str(text)
    try:
        return text.encode('latin-1', 'ignore').decode('latin-1')
    except Exception:
        return "".join(c for c in text if ord(c) < 256)


def _format(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, float) for v in value):
        return f"{value[0]:.6g} {value[1]:+.6g}i"
    return str(value)


def _result_color(result: str):
    if result == 'PASS':
        return 0, 128, 0
    if result in ('FAIL', 'ERROR'):
        return 255, 0, 0
    return 165, 42, 42


def build_report_pdf(op: str, config_hash: str, status: str, summary: Dict[str, Any],
                     checks: List[Dict[str, Any]]) -> bytes:
    """Render the run summary and check table; returns the PDF bytes"""
    pdf = VerdictPDF(f'SUSY duality lab - {op}', config_hash)
    pdf.add_page()

    pdf.set_font('helvetica', 'B', 12)
    pdf.set_fill_color(240, 240, 240)
    pdf.cell(0, 10, 'Status: ', ln=False, fill=True)
    pdf.set_x(35)
    pdf.set_text_color(*VERDICT_COLORS.get(status, (0, 0, 0)))
    pdf.cell(0, 10, sanitize_text(status.upper()), ln=True)
    pdf.set_text_color(0, 0, 0)
    pdf.ln(2)

    pdf.set_font('helvetica', 'B', 10)
    pdf.cell(60, 8, 'Quantity', border=1)
    pdf.cell(130, 8, 'Value', border=1, ln=True)
    pdf.set_font('helvetica', '', 9)
    for key, value in summary.items():
        text = sanitize_text(_format(value)).replace('\n', ' ')
        if len(text) > 80:
            text = text[:77] + "..."
        pdf.cell(60, 7, sanitize_text(key), border=1)
        pdf.cell(130, 7, text, border=1, ln=True)
    pdf.ln(6)

    pdf.set_font('helvetica', 'B', 10)
    pdf.cell(60, 8, 'Check Name', border=1)
    pdf.cell(30, 8, 'Result', border=1)
    pdf.cell(100, 8, 'Message', border=1, ln=True)
    if not checks:
        pdf.set_font('helvetica', 'I', 9)
        pdf.cell(0, 7, '   No checks recorded for this operation.', ln=True)
    pdf.set_font('helvetica', '', 9)
    for check in checks:
        name = sanitize_text(check.get('check_name', ''))
        result = sanitize_text(check.get('result', ''))
        message = sanitize_text(check.get('message', '')).replace('\n', ' ')
        if len(message) > 60:
            message = message[:57] + "..."
        pdf.cell(60, 7, name, border=1)
        pdf.set_text_color(*_result_color(result))
        pdf.cell(30, 7, result, border=1)
        pdf.set_text_color(0, 0, 0)
        pdf.cell(100, 7, message, border=1, ln=True)
        if pdf.get_y() > 250:
            pdf.add_page()

    # fpdf2 returns a bytearray; older releases a latin-1 string
    output = pdf.output()
    if isinstance(output, str):
        output = output.encode('latin-1')
    return bytes(output)


def summary_of(report: Dict[str, Any]) -> Dict[str, Any]:
    """Flat key/value rows for the PDF from a report.json payload"""
    rows = {}
    for key in ('operation', 'verdict', 'z_score'):
        if key in report:
            rows[key] = report[key]
    for side in ('lhs', 'rhs'):
        if isinstance(report.get(side), dict):
            rows[f'{side} value'] = report[side].get('value')
            rows[f'{side} se'] = [report[side].get('se_re'), report[side].get('se_im')]
    for key, value in report.items():
        if key in rows or key in ('lhs', 'rhs', 'checks', 'config', 'extra'):
            continue
        if isinstance(value, (int, float, str)) or (isinstance(value, list) and len(value) <= 2):
            rows[key] = value
    return rows
