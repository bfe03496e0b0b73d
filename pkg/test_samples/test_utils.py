"""
Point cache, run configuration and report rendering
"""

import json

import pytest

from models.padic_model import ModelKind
from utils.point_cache import CACHE_ENV_VAR, PointCache, cache_key
from utils.report_generator import ResultReportGenerator, render, render_csv, render_json
from utils.run_config import ConfigError, RunConfig
from test_samples.sample_inputs import SAMPLE_CONFIG


class TestPointCache:
    def test_put_and_get(self, tmp_path):
        cache = PointCache(tmp_path)
        key = ('ord(x) >= 1', 5, 1, 'mixed')
        assert cache.get(key) is None
        cache.put(key, {'value': '1/5'})
        assert cache.get(key) == {'value': '1/5'}
        assert (cache.hits, cache.misses) == (1, 1)
        assert len(cache) == 1

    def test_records_survive_a_new_instance(self, tmp_path):
        PointCache(tmp_path).put(('f', 7), {'value': '0'})
        assert PointCache(tmp_path).get(('f', 7)) == {'value': '0'}
        assert PointCache(tmp_path).get(('f', 5)) is None

    def test_keys_are_stable(self):
        assert cache_key(('a', 1)) == cache_key(['a', 1])
        assert cache_key(('a', 1)) != cache_key(('a', 2))

    def test_environment_fallback(self, tmp_path, monkeypatch):
        assert PointCache.from_environment() is None
        monkeypatch.setenv(CACHE_ENV_VAR, str(tmp_path))
        assert PointCache.from_environment().directory == tmp_path

    def test_unreadable_entries_are_misses(self, tmp_path):
        cache = PointCache(tmp_path)
        cache.put(('k',), {'value': '1'})
        path = next(tmp_path.glob('*/*.json'))
        path.write_text('{not json', encoding='utf-8')
        assert PointCache(tmp_path).get(('k',)) is None


class TestRunConfig:
    def _write(self, tmp_path, document):
        path = tmp_path / 'config.json'
        path.write_text(json.dumps(document), encoding='utf-8')
        return str(path)

    def test_load_with_overrides(self, tmp_path):
        config = RunConfig.load(self._write(tmp_path, SAMPLE_CONFIG), {'primes': [7, 11], 'depth': None})
        assert config.primes == [7, 11]
        assert config.depth == 1
        assert config.model_kinds() == [ModelKind.MIXED]
        assert config.descriptor().name == 'Sp(2)'

    def test_defaults_are_valid(self):
        config = RunConfig.load()
        assert config.model().prime == 7
        assert config.to_dict()['alpha'] == 'G2'

    @pytest.mark.parametrize('bad', [
        {'primes': [9]}, {'primes': [2]}, {'primes': []}, {'kinds': ['adelic']}, {'w': '(2)'},
        {'depth': 3, 'max_depth': 2}, {'format': 'xml'}, {'group': 'gl'}, {'lambda_bound': -1},
        {'certify_depth': 0},
    ])
    def test_invalid_values(self, tmp_path, bad):
        with pytest.raises(ConfigError):
            RunConfig.load(self._write(tmp_path, {**SAMPLE_CONFIG, **bad}))

    def test_certification_depth_follows_the_gamma_bound(self):
        assert RunConfig().certification_depth() == 3
        assert RunConfig(gamma_bound=4).certification_depth() == 5
        assert RunConfig(gamma_bound=4, certify_depth=2).certification_depth() == 2

    def test_unknown_keys(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.load(self._write(tmp_path, {**SAMPLE_CONFIG, 'colour': 'red'}))

    def test_alpha_from_a_file(self, tmp_path):
        formula = tmp_path / 'gamma.pas'
        formula.write_text('ord(g1_2) >= 1', encoding='utf-8')
        config = RunConfig(alpha=f"@{formula}")
        assert config.alpha_formula().canonical == RunConfig(alpha='ord(g1_2) >= 1').alpha_formula().canonical


class TestReports:
    def test_json_is_sorted_with_a_trailing_newline(self):
        text = render_json({'b': 1, 'a': [1, 2]})
        assert text.endswith('}\n')
        assert text.index('"a"') < text.index('"b"')

    def test_csv_columns_are_sorted(self):
        text = render_csv([{'z': 1, 'a': 2}, {'z': 3, 'a': 4}])
        assert text == 'a,z\n2,1\n4,3\n'
        assert render({'rows': [{'k': 'v'}]}, 'csv') == 'k\nv\n'

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            render({}, 'yaml')

    def test_generator_writes_files(self, tmp_path):
        generator = ResultReportGenerator(str(tmp_path / 'out'))
        json_path, csv_path = generator.write_both('average', {'value': '-16/15625', 'rows': [{'label': '(1,1)'}]})
        assert json.loads(open(json_path, encoding='utf-8').read())['value'] == '-16/15625'
        assert open(csv_path, encoding='utf-8').read() == 'label\n"(1,1)"\n'
        summary = generator.summary({'fit': 'ok', 'acceptance': 'ok'})
        lines = open(summary, encoding='utf-8').read().splitlines()
        assert lines[2:] == ['acceptance: ok', 'fit: ok']
