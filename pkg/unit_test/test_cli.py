# test_cli.py
# 命令列：子命令、exit code、執行紀錄與 Celery 分派

import json

import numpy as np
import pandas as pd
import pytest

from app.cli import run
from app.services import analysis_service as analysis
from app.tasks import dispatch_sweep
from config import TestingConfig


def test_gap_writes_curve_and_manifest(tmp_path):
    out = tmp_path / 'gap.csv'
    assert run(['gap', '--eps', '-50:200:11', '--out', str(out)]) == 0
    assert len(pd.read_csv(out)) == 11
    with open(tmp_path / 'gap.manifest.json', encoding='utf-8') as f:
        manifest = json.load(f)
    assert manifest['command'] == 'gap'
    assert manifest['outputs'] == [str(out)]


def test_repeated_runs_are_identical(tmp_path):
    first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
    assert run(['gap', '--eps', '0:100:21', '--which', 'S_T0', '--out', str(first)]) == 0
    assert run(['gap', '--eps', '0:100:21', '--which', 'S_T0', '--out', str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


@pytest.mark.parametrize('argv', [
    ['gap', '--eps', '1:2', '--out', 'x.csv'],
    ['gap', '--out', 'x.csv'],
    [],
])
def test_usage_errors(argv):
    assert run(argv) == 1


def test_readout_requires_seed(tmp_path):
    assert run(['readout', '--out', str(tmp_path / 'r.csv')]) == 1


def test_help_exits_cleanly(capsys):
    assert run(['--help']) == 0
    assert 'funnel' in capsys.readouterr().out


def test_missing_config_is_model_error(tmp_path, capsys):
    missing = tmp_path / 'absent.toml'
    assert run(['gap', '--eps', '0', '--config', str(missing), '--out', str(tmp_path / 'g.csv')]) == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_config_is_model_error(tmp_path, capsys):
    config = tmp_path / 'bad.toml'
    config.write_text('[hamiltonian]\ntc0 = "1 GHz"\n', encoding='utf-8')
    assert run(['gap', '--eps', '0', '--config', str(config), '--out', str(tmp_path / 'g.csv')]) == 2
    assert 'g1' in capsys.readouterr().err


def test_readout_with_seed(tmp_path):
    out = tmp_path / 'readout.csv'
    assert run(['readout', '--seed', '7', '--shots', '2000', '--out', str(out)]) == 0
    summary = pd.read_csv(out)
    assert 'misidentification_ratio' in set(summary['key'])
    assert (tmp_path / 'readout_standard.csv').exists()
    assert (tmp_path / 'readout_latched.csv').exists()


def test_small_funnel(tmp_path):
    out = tmp_path / 'funnel.csv'
    argv = ['funnel', '--eps', '0:20:2', '--b', '-2:2:2', '--dwell', '10', '--max-phase', '0.2', '--out', str(out)]
    assert run(argv) == 0
    frame = pd.read_csv(out)
    assert len(frame) == 4
    assert frame['P_T'].between(0.0, 1.0).all()


def test_fit_lz_from_csv(tmp_path):
    nu = np.geomspace(1e11, 1e14, 30)
    data = tmp_path / 'lz.csv'
    pd.DataFrame({'nu': nu, 'P_T': analysis.lz_model(nu, 2e5, 0.9, 0.05)}).to_csv(data, index=False)
    out = tmp_path / 'lz_fit.csv'
    assert run(['fit', '--kind', 'lz', '--input', str(data), '--out', str(out)]) == 0
    table = pd.read_csv(out)
    values = dict(zip(table['key'], table['value']))
    assert float(values['f_delta']) == pytest.approx(2e5, rel=1e-3)
    assert (tmp_path / 'lz_fit_residuals.csv').exists()


def test_evolve_preset_with_trajectory(tmp_path):
    schedule = tmp_path / 'schedule.txt'
    schedule.write_text('funnel eps=20µeV dwell=10ns\n', encoding='utf-8')
    out = tmp_path / 'evolve.csv'
    assert run(['evolve', '--schedule', str(schedule), '--trajectory', '--max-phase', '0.2', '--out', str(out)]) == 0
    frame = pd.read_csv(out)
    assert frame.columns[0] == 't [ns]'
    assert np.allclose(frame.iloc[:, 1:].sum(axis=1), 1.0, atol=1e-6)


def test_step_budget_overflow_exits_3(tmp_path, monkeypatch):
    monkeypatch.setattr(TestingConfig, 'STEP_BUDGET', 10)
    schedule = tmp_path / 'schedule.txt'
    schedule.write_text('funnel eps=20µeV dwell=10ns\n', encoding='utf-8')
    assert run(['evolve', '--schedule', str(schedule), '--out', str(tmp_path / 'e.csv')]) == 3


def test_submit_runs_eagerly(tmp_path):
    out = tmp_path / 'submitted.csv'
    assert run(['submit', 'gap', '--eps', '0:10:3', '--out', str(out)]) == 0
    assert out.exists()
    assert run(['submit']) == 1


def test_dispatch_empty_sweep():
    assert dispatch_sweep([]) == []
