"""
Config layering, run directories and the command-line runner
"""

import json
import os

import pytest

from app.blueprints import EXIT_CODES, Command
from app.blueprints.reports import build_report_pdf, summary_of
from app.extensions import apply_override, get_config, merge_strict, resolve_config, short_hash
from app.exceptions import ConfigError
from app.utils.job_manager import RunManager, format_cell
from main import build_parser, main, registered_commands, run


def _only_run_dir(out):
    entries = os.listdir(out)
    assert len(entries) == 1
    return os.path.join(out, entries[0])


def test_unknown_key_reports_key_and_line():
    text = '{\n  "mc": {\n    "num_sample": 5\n  }\n}'
    with pytest.raises(ConfigError) as excinfo:
        merge_strict(get_config(), json.loads(text), text)
    assert excinfo.value.key == 'mc.num_sample'
    assert excinfo.value.line == 3
    assert 'line 3' in str(excinfo.value)


def test_null_default_accepts_any_value():
    merged = merge_strict({'fit_range': None, 'x': {'y': 1}}, {'fit_range': [2, 20], 'x': {'y': 3}})
    assert merged == {'fit_range': [2, 20], 'x': {'y': 3}}


def test_table_cannot_be_replaced_by_a_scalar():
    with pytest.raises(ConfigError):
        merge_strict({'mc': {'num_samples': 1}}, {'mc': 5})


def test_overrides_parse_json_with_string_fallback():
    config = get_config()
    apply_override(config, 'mc.num_samples=5000')
    apply_override(config, 'duality.z=[[0, 1], [0, -1]]')
    apply_override(config, 'logs.level=DEBUG')
    assert config['mc']['num_samples'] == 5000
    assert config['duality']['z'] == [[0, 1], [0, -1]]
    assert config['logs']['level'] == 'DEBUG'


@pytest.mark.parametrize('assignment', ['mc.nope=1', 'mc=1', 'no_equals_sign'])
def test_bad_overrides_are_rejected(assignment):
    with pytest.raises(ConfigError):
        apply_override(get_config(), assignment)


def test_resolution_order(experiment, gue_section):
    path = experiment({'ensemble': gue_section, 'seed': 3, 'mc': {'num_samples': 2000}})
    config = resolve_config(path, ['mc.num_samples=4000'], op='sample', seed=9, workers=None)
    assert config['op'] == 'sample'
    assert config['seed'] == 9
    assert config['workers'] == 0
    assert config['mc']['num_samples'] == 4000


def test_missing_ensemble_section(experiment):
    with pytest.raises(ConfigError) as excinfo:
        resolve_config(experiment({'op': 'sample'}), op='sample')
    assert excinfo.value.key == 'ensemble'


def test_op_must_agree_with_the_file(experiment, gue_section):
    with pytest.raises(ConfigError) as excinfo:
        resolve_config(experiment({'op': 'dos', 'ensemble': gue_section}), op='sample')
    assert excinfo.value.key == 'op'


def test_hash_ignores_key_order():
    first = {'a': 1, 'b': {'c': [1, 2], 'd': 0.5}}
    second = {'b': {'d': 0.5, 'c': [1, 2]}, 'a': 1}
    assert short_hash(first) == short_hash(second)
    assert len(short_hash(first)) == 16
    assert short_hash(first) != short_hash({'a': 2, 'b': {'c': [1, 2], 'd': 0.5}})


def test_csv_header_and_float_format(tmp_path):
    manager = RunManager(str(tmp_path), 'dos', {'op': 'dos', 'seed': 1})
    manager.start_run()
    path = manager.write_csv('dos.csv', ('E', 'rho'), [(0.1, 1.0 / 3.0)])
    manager.finish_run('ok')
    with open(path) as f:
        lines = f.read().splitlines()
    assert lines[0] == f"# config_hash={manager.config_hash}"
    assert lines[1] == 'E,rho'
    assert lines[2] == f"0.10000000000000001,{format(1.0 / 3.0, '.17g')}"
    assert os.path.basename(manager.run_dir) == f"dos-{manager.config_hash}"
    details = manager.get_run_details()
    assert details['log_content'].startswith('Run started at')
    assert 'Config hash: ' in details['log_content']
    assert 'Run finished with status ok' in details['log_content']


def test_format_cell():
    assert format_cell(True) == 'True'
    assert format_cell(3) == '3'
    assert format_cell(None) == ''
    assert format_cell(0.5) == '0.5'


def test_exit_codes_and_inversion():
    commands = registered_commands()
    assert commands['falsify-naive'].inverted
    assert commands['falsify-naive'].exit_code('inconsistent') == 0
    assert commands['falsify-naive'].exit_code('consistent') == 2
    plain = Command('x', lambda ctx: None, '')
    assert plain.exit_code('consistent') == EXIT_CODES['consistent'] == 0
    assert plain.exit_code('inconsistent') == 2
    assert plain.exit_code('inconclusive') == 3
    assert plain.exit_code('invalid') == 1


def test_every_operation_is_a_subcommand():
    expected = {'sample', 'validate-cov', 'g1', 'g2', 'dos', 'lyapunov', 'spacings', 'verify-fermionic',
                'verify-bosonic', 'falsify-naive', 'verify-fyodorov', 'verify-sw', 'shift-invariance',
                'verify-susy-g2', 'saddle', 'fiber', 'gue-moment'}
    assert set(registered_commands()) == expected


def test_parser_requires_config():
    parser = build_parser(registered_commands())
    with pytest.raises(SystemExit):
        parser.parse_args(['sample'])
    args = parser.parse_args(['sample', '--config', 'x.json', '--set', 'a=1', '--set', 'b=2', '--seed', '4'])
    assert args.set == ['a=1', 'b=2']
    assert args.seed == 4


def test_fermionic_run_writes_artifacts(experiment, gue_section, tmp_path):
    path = experiment({'ensemble': gue_section, 'mc': {'num_samples': 2000}, 'duality': {'z': [[0.3, 0.4]]}})
    out = str(tmp_path / 'runs')
    assert run('verify-fermionic', path, seed=5, workers=1, out=out) == 0
    run_dir = _only_run_dir(out)
    for name in ('run.log', 'config.resolved', 'report.json', 'duality_summary.csv'):
        assert os.path.exists(os.path.join(run_dir, name))
    with open(os.path.join(run_dir, 'report.json')) as f:
        report = json.load(f)
    assert report['verdict'] == 'consistent'
    assert report['config_hash'] == os.path.basename(run_dir).rsplit('-', 1)[1]
    with open(os.path.join(run_dir, 'config.resolved')) as f:
        resolved = json.load(f)
    assert resolved['seed'] == 5
    assert run_dir.endswith(f"verify-fermionic-{short_hash(resolved)}")
    with open(os.path.join(run_dir, 'duality_summary.csv')) as f:
        header, columns = f.readline(), f.readline()
    assert header.startswith('# config_hash=')
    assert columns.strip().startswith('op,n,p,N,L')


def test_invalid_covariance_exits_with_error_status(experiment, tmp_path):
    ensemble = {'lattice': {'num_sites': 2}, 'orbitals': 1,
                'covariance': {'profile': 'explicit', 'scale': 1, 'matrix': [1.0, 2.0, 2.0, 1.0]}}
    out = str(tmp_path / 'runs')
    assert run('validate-cov', experiment({'ensemble': ensemble}), workers=1, out=out) == 1
    with open(os.path.join(_only_run_dir(out), 'report.json')) as f:
        assert json.load(f)['valid'] is False


def test_config_errors_exit_one(experiment, tmp_path, capsys):
    out = str(tmp_path / 'runs')
    assert run('sample', experiment({'op': 'sample'}), out=out) == 1
    assert 'error:' in capsys.readouterr().err
    assert not os.path.exists(out)


def test_refusal_is_recorded_in_the_run_log(experiment, gue_section, tmp_path):
    path = experiment({'ensemble': gue_section, 'mc': {'num_samples': 1000},
                       'duality': {'z': [[0.0, 0.5], [0.0, 0.6]]}})
    out = str(tmp_path / 'runs')
    assert run('falsify-naive', path, workers=1, out=out) == 1
    with open(os.path.join(_only_run_dir(out), 'run.log')) as f:
        log = f.read()
    assert 'ERROR: Refusal' in log
    assert 'Run finished with status error' in log


def test_main_with_pdf_report(experiment, tmp_path):
    ensemble = {'lattice': {'num_sites': 4}, 'orbitals': 1,
                'covariance': {'profile': 'exponential_band', 'scale': 1, 'width': 1.5}}
    out = str(tmp_path / 'runs')
    code = main(['validate-cov', '--config', experiment({'ensemble': ensemble}), '--out', out,
                 '--set', 'report.pdf=true'])
    assert code == 0
    with open(os.path.join(_only_run_dir(out), 'report.pdf'), 'rb') as f:
        assert f.read(4) == b'%PDF'


def test_pdf_builder_handles_nested_reports():
    report = {'verdict': 'consistent', 'lhs': {'value': [1.0, 0.5]}, 'z_score': 0.4, 'extra': {'note': 'ok'}}
    checks = [{'check_name': 'tail', 'result': 'WARN', 'message': 'x' * 200}]
    pdf = build_report_pdf('verify-fermionic', 'abc123', 'consistent', summary_of(report), checks)
    assert isinstance(pdf, bytes)
    assert pdf.startswith(b'%PDF')


def test_hash_ignores_execution_settings():
    config = {'op': 'g1', 'seed': 1, 'mc': {'num_samples': 10}}
    assert short_hash(dict(config, workers=1, output_dir='a')) == short_hash(dict(config, workers=8, output_dir='b'))
    assert short_hash(dict(config, seed=2)) != short_hash(config)


def _read_outputs(run_dir):
    outputs = {}
    for name in sorted(os.listdir(run_dir)):
        if name.endswith('.csv'):
            with open(os.path.join(run_dir, name), 'rb') as f:
                outputs[name] = f.read()
    return outputs


def test_csv_outputs_do_not_depend_on_worker_count(experiment, gue_section, tmp_path):
    path = experiment({'ensemble': gue_section, 'mc': {'num_samples': 9000}, 'g1': {'z': [0.3, 0.4]}})
    serial, pooled = str(tmp_path / 'serial'), str(tmp_path / 'pooled')
    assert run('g1', path, seed=3, workers=1, out=serial) == 0
    assert run('g1', path, seed=3, workers=2, out=pooled) == 0
    serial_dir, pooled_dir = _only_run_dir(serial), _only_run_dir(pooled)
    assert os.path.basename(serial_dir) == os.path.basename(pooled_dir)
    outputs = _read_outputs(serial_dir)
    assert 'g1.csv' in outputs
    assert outputs == _read_outputs(pooled_dir)


def test_resolved_config_reproduces_the_run(experiment, gue_section, tmp_path):
    path = experiment({'ensemble': gue_section, 'mc': {'num_samples': 2000}, 'duality': {'z': [[0.3, 0.4]]}})
    first = str(tmp_path / 'first')
    assert run('verify-fermionic', path, seed=12, workers=1, out=first) == 0
    first_dir = _only_run_dir(first)
    again = str(tmp_path / 'again')
    assert run('verify-fermionic', os.path.join(first_dir, 'config.resolved'), out=again) == 0
    again_dir = _only_run_dir(again)
    assert os.path.basename(again_dir) == os.path.basename(first_dir)
    assert _read_outputs(again_dir) == _read_outputs(first_dir)
