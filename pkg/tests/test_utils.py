import json
from pathlib import Path

import pytest

from modules.utils.config_utils import load_config, override
from modules.utils.errors import ParameterDomainError
from modules.utils.logging_utils import CSVLogger, get_logger, get_module_logger, ROOT_LOGGER_NAME
from modules.utils.measurer import TimeMeasurer


class TestConfig:

    def test_load_and_override(self, tmp_path):
        path = tmp_path / 'run.json'
        path.write_text(json.dumps({'k': 2, 'theta': 1.5, 'seed': 1}))
        config = load_config(path)
        merged = override(config, k=3, theta=None)
        assert merged == {'k': 3, 'theta': 1.5, 'seed': 1}
        assert config['k'] == 2
        assert load_config(None) == {}

    @pytest.mark.parametrize('content', ['{"k": ', '[1, 2]'])
    def test_invalid_files(self, tmp_path, content):
        path = tmp_path / 'run.json'
        path.write_text(content)
        with pytest.raises(ParameterDomainError):
            load_config(path)

    def test_shipped_configs_load(self):
        root = Path(__file__).resolve().parents[1]
        for name in ('configs/study/desk_study.json', 'configs/tables/published_tables.json',
                     'configs/analysis/covid_analysis.json'):
            assert isinstance(load_config(root / name), dict)


class TestLogging:

    def test_module_loggers_hang_off_the_root(self, tmp_path):
        log_file = tmp_path / 'logs' / 'run.log'
        root = get_logger(f'{ROOT_LOGGER_NAME}.test_root', log_level='INFO', log_file=log_file)
        root.info('written')
        for handler in root.handlers:
            handler.flush()
        assert 'written' in log_file.read_text()
        assert get_module_logger('moments').name == f'{ROOT_LOGGER_NAME}.moments'

    def test_csv_logger(self, tmp_path):
        logger = CSVLogger({'log_file_path': f'{tmp_path}/'})
        logger.add_log({'table': 'study', 'k': 2, 'n': 4, 'failures': 0})
        lines = logger.file_path.read_text().splitlines()
        assert lines[0].split(',') == CSVLogger.fields
        assert lines[1].split(',')[1:5] == ['study', '2', '', '4']


class TestMeasurer:

    def test_disabled_is_silent(self, tmp_path):
        measurer = TimeMeasurer(f'{tmp_path}/', mode_on=False)
        measurer.begin_sample('x')
        with measurer.measure('block'):
            pass
        measurer.end_sample()
        measurer.finish_logging_time()
        assert measurer.as_dict() == {'enabled': False, 'samples': []}
        assert not (tmp_path / 'time_profiling.json').exists()

    def test_nested_blocks(self, tmp_path):
        measurer = TimeMeasurer(f'{tmp_path}/', mode_on=True)
        measurer.begin_sample('table_3')
        with measurer.measure('build'):
            measurer.start_measure_local('inner')
            measurer.finish_measure_local()
        measurer.end_sample()
        measurer.finish_logging_time()
        sample = json.loads((tmp_path / 'time_profiling.json').read_text())[0]
        assert sample['experiment_name'] == 'table_3'
        assert sample['build'] >= sample['inner'] >= 0
        assert sample['total_time'] >= sample['build']
