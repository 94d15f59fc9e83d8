import json
import os
from pathlib import Path

import pytest

from app import main
from lib.config import OUTPUT_DIR_ENV, load_config, parse_config
from lib.errors import ConfigError
from lib.utils import DataUtils
from services.scenario_service import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, RunReport, ScenarioService
from utils.acceptance import AcceptanceManager

CONFIGS = Path(__file__).parent / "configs"
SHORT_RABI = {'kind': 'rabi', 't_final': 1.0, 'dt': 1e-3, 'refine_factor': 2}


def config_for(payload, out):
    return parse_config(json.dumps(payload)).with_output_dir(str(out))


def write_config(path, payload):
    path.write_text(json.dumps(payload), encoding='utf-8')
    return str(path)


class TestParseConfig:
    def test_defaults(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
        cfg = parse_config('{"kind": "rabi"}')
        assert cfg['dt'] == 1e-3
        assert cfg['coupling_shape'] == 'constant'
        assert cfg.n_steps == 6283
        assert cfg.output_dir == os.path.join(str(tmp_path), 'rabi')

    def test_unknown_kind_lists_valid_kinds(self):
        with pytest.raises(ConfigError) as exc:
            parse_config('{"kind": "rabl"}')
        message = exc.value.errors[0]
        assert message.startswith('kind:')
        assert 'rabl' in message
        for kind in ('rabi', 'invariant', 'reduce', 'susy'):
            assert kind in message

    def test_missing_kind(self):
        with pytest.raises(ConfigError) as exc:
            parse_config('{"dt": 0.1}')
        assert exc.value.errors[0].startswith('kind:')

    def test_negative_dt_names_key(self):
        with pytest.raises(ConfigError) as exc:
            parse_config('{"kind": "rabi", "dt": -0.001}')
        assert exc.value.errors == ["dt: must be > 0, got -0.001"]

    def test_every_error_is_reported(self):
        with pytest.raises(ConfigError) as exc:
            parse_config('{"kind": "susy", "omega_c": 1, "n_points": "many", "hbar": true}')
        keys = sorted(message.split(':')[0] for message in exc.value.errors)
        assert keys == ['hbar', 'n_points', 'omega_c']

    def test_too_many_steps(self):
        with pytest.raises(ConfigError) as exc:
            parse_config('{"kind": "invariant", "t_final": 10.0, "dt": 1e-9}')
        assert exc.value.errors[0].startswith('dt:')

    def test_interval_order(self):
        with pytest.raises(ConfigError) as exc:
            parse_config('{"kind": "susy", "x_min": 1.0, "x_max": -1.0}')
        assert exc.value.errors[0].startswith('x_max:')

    def test_choice_validation(self):
        with pytest.raises(ConfigError) as exc:
            parse_config('{"kind": "susy", "stencil_order": 3}')
        assert 'stencil_order' in exc.value.errors[0]

    def test_invalid_json(self):
        with pytest.raises(ConfigError) as exc:
            parse_config('{"kind": ')
        assert 'invalid JSON' in exc.value.errors[0]

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.json"))

    @pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
    def test_shipped_configs_parse(self, name):
        assert load_config(str(CONFIGS / name)).kind in ('rabi', 'invariant', 'reduce', 'susy')


class TestAcceptance:
    def test_none_ratio_passes(self):
        result = AcceptanceManager().evaluate('invariant', {'residual_ratio': None, 'max_residual': 1e-7})
        assert result['passed']
        assert set(result['checks']) == {'residual_order', 'invariant_residual'}

    def test_failure_is_named(self):
        result = AcceptanceManager().evaluate('reduce', {'iv_variation': 0.1, 'phase_mismatch': 1e-9})
        assert result['failures'] == ['iv_variation']
        assert result['checks']['phase_mismatch']['pass']

    def test_override(self):
        result = AcceptanceManager().evaluate('reduce', {'iv_variation': 0.1}, overrides={'iv_variation': 1.0})
        assert result['passed']

    def test_unknown_kind(self):
        with pytest.raises(KeyError):
            AcceptanceManager().evaluate('batch', {})


class TestScenarioRuns:
    @pytest.mark.parametrize("name", [
        "rabi.json", "invariant.json", "reduce.json", "susy_linear.json", "susy_free.json",
    ])
    def test_reference_configs_pass(self, name, tmp_path):
        cfg = load_config(str(CONFIGS / name)).with_output_dir(str(tmp_path / "run"))
        report = ScenarioService().run_scenario(cfg, check=True)
        assert report.failures == []
        assert report.exit_code == EXIT_OK
        assert report.error is None
        assert (tmp_path / "run" / "report.json").exists()

    def test_rabi_outputs(self, tmp_path):
        report = ScenarioService().run_scenario(config_for(SHORT_RABI, tmp_path), check=True)
        assert report.exit_code == EXIT_OK
        assert [f['path'] for f in report.files] == [
            'fidelity.csv', 'phases.csv', 'rabi_comparison.csv', 'rabi_traces.csv',
        ]

        traces = (tmp_path / "rabi_traces.csv").read_bytes()
        assert b"\r" not in traces
        assert traces.startswith(b"t,rho_aa,rho_bb,re_rho_ab,im_rho_ab,purity\n")
        assert traces.count(b"\n") == 1001 + 1
        comparison = (tmp_path / "rabi_comparison.csv").read_text(encoding='utf-8')
        assert comparison.startswith("t,rho_aa_closed_form,schrodinger_deviation,lr_deviation\n")

        saved = json.loads((tmp_path / "report.json").read_text(encoding='utf-8'))
        assert saved['payload_sha256'] == report.payload_sha256
        assert saved['exit_code'] == EXIT_OK
        assert saved['checks']['closed_form_deviation']['pass']
        for entry in saved['files']:
            text = (tmp_path / entry['path']).read_text(encoding='utf-8')
            assert DataUtils.sha256_text(text) == entry['sha256']

    def test_runs_are_reproducible(self, tmp_path):
        service = ScenarioService()
        first = service.run_scenario(config_for(SHORT_RABI, tmp_path / "a"))
        second = service.run_scenario(config_for(SHORT_RABI, tmp_path / "b"))
        assert first.payload_sha256 == second.payload_sha256
        for name in ('rabi_traces.csv', 'phases.csv'):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_checks_only_enforced_on_request(self, tmp_path):
        payload = {'kind': 'reduce', 'frame': 'identity', 't_final': 1.0, 'dt': 1e-3}
        loose = ScenarioService().run_scenario(config_for(payload, tmp_path / "loose"))
        assert loose.exit_code == EXIT_OK
        assert loose.checks == {}

        strict = ScenarioService().run_scenario(config_for(payload, tmp_path / "strict"), check=True)
        assert strict.exit_code == EXIT_NUMERIC
        assert 'iv_variation' in strict.failures
        assert 'offdiagonal_defect' in strict.failures

    def test_guard_breach_is_numeric_failure(self, tmp_path):
        cfg = load_config(str(CONFIGS / "rabi_coarse.json")).with_output_dir(str(tmp_path))
        report = ScenarioService().run_scenario(cfg)
        assert report.exit_code == EXIT_NUMERIC
        assert report.error.startswith("GuardBreachError")
        assert 'trace_defect' in report.error
        assert report.files == []
        saved = json.loads((tmp_path / "report.json").read_text(encoding='utf-8'))
        assert saved['failures'] == ['GuardBreachError']

    def test_unwritable_output_dir(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory", encoding='utf-8')
        report = ScenarioService().run_scenario(config_for(SHORT_RABI, blocker / "run"))
        assert report.exit_code == EXIT_IO
        assert 'OutputError' in report.failures

    def test_susy_spectrum_table(self, tmp_path):
        cfg = load_config(str(CONFIGS / "susy_linear.json")).with_output_dir(str(tmp_path))
        report = ScenarioService().run_scenario(cfg)
        lines = (tmp_path / "spectrum.csv").read_text(encoding='utf-8').splitlines()
        assert lines[0] == "n,E_minus,E_plus,pair_deviation"
        assert len(lines) == 6
        assert report.flags['matched_partner'] == 'minus'
        assert not report.flags['degenerate_free_case']

    def test_free_susy_is_flagged(self, tmp_path):
        cfg = load_config(str(CONFIGS / "susy_free.json")).with_output_dir(str(tmp_path))
        report = ScenarioService().run_scenario(cfg)
        assert report.flags['degenerate_free_case']
        assert report.flags['matched_partner'] == 'both'
        assert 'shift_ratio' not in report.metrics
        assert report.metrics['epsilon0_deviation'] < 1e-8
        assert report.metrics['box_constant'] == pytest.approx(report.metrics['epsilon0'])
        assert report.metrics['discretization_defect'] < 1e-4

    def test_susy_base_levels(self, tmp_path):
        cfg = load_config(str(CONFIGS / "susy_linear.json")).with_output_dir(str(tmp_path))
        report = ScenarioService().run_scenario(cfg)
        assert 'base_levels.csv' in [f['path'] for f in report.files]
        lines = (tmp_path / "base_levels.csv").read_text(encoding='utf-8').splitlines()
        assert lines[0] == "n,E_base"
        assert len(lines) == 5 + 1 + 1
        assert float(lines[1].split(',')[1]) == pytest.approx(1.0, abs=1e-4)

    def test_rabi_flags_loose_lr_residual(self, tmp_path):
        fine = ScenarioService().run_scenario(config_for(SHORT_RABI, tmp_path / "fine"))
        assert 'density_vs_schrodinger_frobenius' in fine.metrics
        assert 'lr_residual_frobenius' in fine.metrics
        assert fine.flags['lr_residual_within_tolerance'] == (fine.metrics['lr_max_residual'] <= 1e-6)

        coarse = ScenarioService().run_scenario(config_for({**SHORT_RABI, 'dt': 1e-2}, tmp_path / "coarse"))
        assert coarse.exit_code == EXIT_OK
        assert coarse.metrics['lr_max_residual'] > 1e-6
        assert not coarse.flags['lr_residual_within_tolerance']

    def test_invariant_reports_frobenius_residual(self, tmp_path):
        payload = {'kind': 'invariant', 't_final': 1.0, 'dt': 1e-3, 'oracle_refine': 2}
        report = ScenarioService().run_scenario(config_for(payload, tmp_path))
        assert report.metrics['residual_frobenius'] >= report.metrics['max_residual']

    def test_non_finite_check_values_stay_valid_json(self):
        report = RunReport(kind='rabi', config={},
                           checks={'residual_order': {'value': float('inf'), 'threshold': 3.5, 'pass': True}})
        payload = report.to_dict()
        assert payload['checks']['residual_order']['value'] == 'inf'
        json.dumps(payload, allow_nan=False)

    def test_batch_gives_each_run_its_own_directory(self, tmp_path):
        configs = [config_for(SHORT_RABI, tmp_path / "rabi") for _ in range(2)]
        reports = ScenarioService().run_batch(configs, workers=2)
        assert [r.run_dir for r in reports] == [str(tmp_path / "rabi"), str(tmp_path / "rabi") + "_1"]
        assert reports[0].payload_sha256 == reports[1].payload_sha256
        assert all((Path(r.run_dir) / "report.json").exists() for r in reports)


class TestCli:
    def test_rabi_with_check(self, tmp_path):
        path = write_config(tmp_path / "rabi.json", SHORT_RABI)
        assert main(['rabi', '--config', path, '--out', str(tmp_path / "out"), '--check']) == EXIT_OK
        assert (tmp_path / "out" / "report.json").exists()

    def test_kind_mismatch(self, tmp_path):
        path = write_config(tmp_path / "rabi.json", SHORT_RABI)
        assert main(['invariant', '--config', path, '--out', str(tmp_path / "out")]) == EXIT_CONFIG
        assert not (tmp_path / "out").exists()

    def test_invalid_config(self, tmp_path, capsys):
        path = write_config(tmp_path / "bad.json", {'kind': 'rabi', 'dt': -1.0})
        assert main(['rabi', '--config', path]) == EXIT_CONFIG
        assert 'dt:' in capsys.readouterr().err

    def test_coarse_rabi_exits_numeric(self, tmp_path):
        code = main(['rabi', '--config', str(CONFIGS / "rabi_coarse.json"), '--out', str(tmp_path)])
        assert code == EXIT_NUMERIC

    def test_batch_reports_worst_exit(self, tmp_path):
        good = write_config(tmp_path / "good.json", {**SHORT_RABI, 'output_dir': str(tmp_path / "good")})
        coarse = write_config(tmp_path / "coarse.json", {'kind': 'rabi', 'dt': 1.5,
                                                         'output_dir': str(tmp_path / "coarse")})
        assert main(['batch', '--configs', good, coarse, '--workers', '2']) == EXIT_NUMERIC
