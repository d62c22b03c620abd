# test_export_service.py
# CSV 與執行紀錄輸出

import json
import os

import numpy as np
import pandas as pd
import pytest

from app.errors import ModelError
from app.models import Axis, Curve, FitResult, PTMap, RunManifest
from app.services import export_service as export


def _ptmap():
    return PTMap(axis1=Axis('eps', 'µeV', [0.0, 10.0]), axis2=Axis('tau', 'ns', [0.0, 1.0, 2.0]),
                 values=np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]))


def test_ptmap_is_long_format_with_outer_axis1(tmp_path):
    path = export.write_ptmap(_ptmap(), str(tmp_path / 'map.csv'))
    frame = pd.read_csv(path)
    assert list(frame.columns) == ['eps [µeV]', 'tau [ns]', 'P_T']
    assert len(frame) == 6
    assert frame['eps [µeV]'].tolist() == [0.0, 0.0, 0.0, 10.0, 10.0, 10.0]
    assert frame['P_T'].tolist() == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])


def test_output_is_byte_identical(tmp_path):
    first = export.write_ptmap(_ptmap(), str(tmp_path / 'a.csv'))
    second = export.write_ptmap(_ptmap(), str(tmp_path / 'b.csv'))
    with open(first, 'rb') as f, open(second, 'rb') as g:
        assert f.read() == g.read()


def test_curve_header_carries_units(tmp_path):
    curve = Curve(axis=Axis('eps', 'µeV', [0.0, 1.0]), values=[0.5, 0.25], name='gap', units='GHz')
    frame = pd.read_csv(export.write_curve(curve, str(tmp_path / 'gap.csv')))
    assert list(frame.columns) == ['eps [µeV]', 'gap [GHz]']


def test_write_fit_adds_residual_file(tmp_path):
    fit = FitResult(names=('f_delta', 'amplitude'), values=np.array([2e5, 0.9]),
                    ci_half_widths=np.array([1e3, 0.01]), residual_norm=0.02, converged=True,
                    iterations=12, residuals=np.array([0.01, -0.01, 0.0]), flags=['rank_deficient'])
    written = export.write_fit(fit, str(tmp_path / 'fit.csv'))
    assert written[1] == str(tmp_path / 'fit_residuals.csv')
    table = pd.read_csv(written[0])
    values = dict(zip(table['key'], table['value']))
    assert float(values['f_delta']) == 2e5
    assert float(values['f_delta_ci95']) == 1e3
    assert values['flags'] == 'rank_deficient'
    assert len(pd.read_csv(written[1])) == 3


def test_manifest_is_json(tmp_path):
    manifest = RunManifest(command='gap', argv=['gap', '--eps', '0'], config_hash=export.config_hash('x'),
                           master_seed=None, versions=export.package_versions(), outputs=['gap.csv'])
    path = export.write_manifest(manifest, export.manifest_path(str(tmp_path / 'gap.csv')))
    assert path.endswith('gap.manifest.json')
    with open(path, encoding='utf-8') as f:
        document = json.load(f)
    assert document['command'] == 'gap'
    assert document['config_hash'] == export.config_hash('x')
    assert 'numpy' in document['versions']


def test_resolve_output_creates_directories(tmp_path):
    path = export.resolve_output('nested/run/out.csv', str(tmp_path))
    assert path == os.path.join(str(tmp_path), 'nested/run/out.csv')
    assert os.path.isdir(tmp_path / 'nested' / 'run')


def test_read_columns(tmp_path):
    path = tmp_path / 'data.csv'
    path.write_text('nu,p\n1,0.5\n2,0.25\n', encoding='utf-8')
    nu, p = export.read_columns(str(path), 2)
    assert nu.tolist() == [1.0, 2.0]
    with pytest.raises(ModelError):
        export.read_columns(str(path), 3)
