from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from waistlab.config import build_config
from waistlab.pipeline import STAGES, RunContext, RunResult, run_pipeline, run_stages
from waistlab.report import CheckRecord


def _config(tmp_path: Path, **overrides):
    data = {'output_dir': str(tmp_path / 'out'), **overrides}
    return build_config(data)


class TestRunResult:
    def test_status(self):
        ok = CheckRecord('surface', 'profile_even', 0.0, '== 0', True)
        bad = CheckRecord('surface', 'profile_even', 1.0, '== 0', False)
        assert RunResult([ok]).status == 0
        assert RunResult([ok, bad]).status == 1
        assert RunResult([ok], error={'module': 'x', 'type': 'y', 'message': 'z'}).status == 1


class TestSurfaceStage:
    def test_writes_artifacts(self, tmp_path: Path):
        result, ctx = run_pipeline(_config(tmp_path), only=['surface'], options={'samples': 11})
        assert result.status == 0
        lines = (ctx.output_dir / 'profile.csv').read_text().splitlines()
        assert lines[0] == 'z,r,E,G,K'
        assert len(lines) == 12
        for name in ('config.json', 'summary.json', 'summary.txt'):
            assert (ctx.output_dir / name).exists()

    def test_summary_json(self, tmp_path: Path):
        _, ctx = run_pipeline(_config(tmp_path), only=['surface'], options={'samples': 5})
        summary = json.loads((ctx.output_dir / 'summary.json').read_text())
        assert summary['stages'] == ['surface']
        assert summary['passed'] is True
        assert summary['error'] is None
        assert {c['check'] for c in summary['checks']} == {'curvature_nonpositive', 'profile_even'}

    def test_summary_text_lists_checks(self, tmp_path: Path):
        _, ctx = run_pipeline(_config(tmp_path), only=['surface'], options={'samples': 5})
        text = (ctx.output_dir / 'summary.txt').read_text()
        assert 'profile_even' in text
        assert 'checks passed' in text


class TestGeodesicStage:
    def test_drift_check(self, tmp_path: Path):
        cfg = _config(tmp_path, geodesic={'horizon': 2.0, 'step': 1e-3})
        result, ctx = run_pipeline(cfg, only=['geodesics'])
        assert result.status == 0
        assert (ctx.output_dir / 'geodesic.csv').read_text().startswith('s,z,theta_lift,psi,clairaut_drift\n')

    def test_domain_exit_stops_run(self, tmp_path: Path):
        cfg = _config(tmp_path, geodesic={'horizon': 5.0, 'step': 1e-3})
        result, ctx = run_pipeline(cfg, only=['geodesics', 'surface'], options={'psi': math.pi / 2})
        assert result.error is not None
        assert result.error['module'] == 'geodesics'
        assert result.error['type'] == 'DomainExit'
        assert result.status == 1
        summary = json.loads((ctx.output_dir / 'summary.json').read_text())
        assert summary['passed'] is False
        # surface runs first in pipeline order
        assert [c['module'] for c in summary['checks']] == ['surface', 'surface']


class TestRunStages:
    def test_unknown_stage(self, tmp_path: Path):
        ctx = RunContext(_config(tmp_path), tmp_path)
        with pytest.raises(ValueError, match='unknown stage'):
            run_stages(ctx, ['surface', 'plots'])

    def test_stage_names(self):
        assert STAGES[0] == 'surface'
        assert STAGES[-1] == 'comparison'


@pytest.mark.slow
class TestSolverStages:
    def test_small_diffusion_run(self, tmp_path: Path):
        cfg = _config(tmp_path, grid={'n_theta': 32, 'n_z': 33}, diffusion={'lambdas': [4.0, 8.0]})
        result, ctx = run_pipeline(cfg, only=['diffusion'])
        assert result.error is None
        by_name = {c.check: c for c in result.checks}
        assert by_name['mass_normalization'].passed
        assert by_name['reduction_1d'].passed
        payload = json.loads((ctx.output_dir / 'diffusion.json').read_text())
        assert payload['lambda'] == 8.0
        assert payload['Lambda_plus'] == pytest.approx(payload['Lambda_minus'], abs=1e-8)
        assert payload['residual_plus'] <= 1e-8
        assert payload['residual_minus'] <= 1e-8

    def test_diffusion_lambda_option(self, tmp_path: Path):
        cfg = _config(tmp_path, grid={'n_theta': 16, 'n_z': 33}, diffusion={'lambdas': [4.0, 8.0]})
        _, ctx = run_pipeline(cfg, only=['diffusion'], options={'lambda': 2.0})
        assert json.loads((ctx.output_dir / 'diffusion.json').read_text())['lambda'] == 2.0

    def test_weakkam_stage(self, tmp_path: Path):
        cfg = _config(tmp_path, grid={'n_theta': 32, 'n_z': 33})
        result, ctx = run_pipeline(cfg, only=['weakkam'])
        assert result.error is None
        by_name = {c.check: c for c in result.checks}
        assert set(by_name) == {
            'critical_value',
            'waist_energy',
            'fixed_point_residual',
            'barrier_relative_error',
            'barrier_error_halving',
            'aubry_rows',
        }
        assert by_name['fixed_point_residual'].passed
        assert by_name['aubry_rows'].passed
        assert by_name['waist_energy'].passed
        payload = json.loads((ctx.output_dir / 'weakkam.json').read_text())
        assert payload['c0'] == pytest.approx(0.5, abs=0.02)
        assert payload['barrier_coarse_error'] > payload['barrier_raw_error']
        assert 'critical_value' not in payload

    def test_busemann_stage(self, tmp_path: Path):
        cfg = _config(tmp_path, busemann={'horizon': 25.0, 'limit_samples': 2})
        result, ctx = run_pipeline(cfg, only=['busemann'])
        assert result.error is None
        by_name = {c.check: c for c in result.checks}
        assert by_name['power_law_exponent'].passed
        assert by_name['power_law_coefficient'].passed
        assert (ctx.output_dir / 'busemann_fit.json').exists()
