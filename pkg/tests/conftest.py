from pathlib import Path
import sys

import numpy as np
import pandas as pd
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

FIXTURES = ROOT / 'tests' / 'fixtures'


def read_fixture(name: str) -> pd.DataFrame:
    return pd.read_csv(FIXTURES / name)


@pytest.fixture(scope='session')
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope='session')
def table1() -> pd.DataFrame:
    return read_fixture('published_table1_means.csv')


@pytest.fixture(scope='session')
def table2() -> pd.DataFrame:
    return read_fixture('published_table2_covariances.csv')


@pytest.fixture(scope='session')
def table3() -> pd.DataFrame:
    return read_fixture('published_table3_blue_mu.csv')


@pytest.fixture(scope='session')
def table4() -> pd.DataFrame:
    return read_fixture('published_table4_blue_sigma.csv')


@pytest.fixture(scope='session')
def table5() -> pd.DataFrame:
    return read_fixture('published_table5_variance_factors.csv')


@pytest.fixture(scope='session')
def table8() -> pd.DataFrame:
    return read_fixture('published_table8_rec.csv')


@pytest.fixture(scope='session')
def pivot_table_paths(fixtures_dir):
    return [fixtures_dir / 'published_table6_t1_t2.csv', fixtures_dir / 'published_table7_t3_t4.csv',
            fixtures_dir / 'published_table9_t1star_t2star.csv']


@pytest.fixture(scope='session')
def covid_path(fixtures_dir) -> Path:
    return fixtures_dir / 'covid_andorra_positive_rate.csv'


@pytest.fixture(scope='session')
def covid_data(covid_path) -> np.ndarray:
    return pd.read_csv(covid_path, float_precision='round_trip')['positive_rate'].to_numpy()
