from typing import *

# grids of the published tables
THETA_GRID: Tuple[float, ...] = (0.75, 1.5, 2.5, 3.5, 4.5)
K_GRID: Tuple[int, ...] = (1, 2, 3)
N_GRID: Tuple[int, ...] = (2, 3, 4, 5, 6)
MOMENT_N_MAX = 6

DEFAULT_PROBS: Tuple[float, ...] = (0.025, 0.05, 0.95, 0.975)
DEFAULT_LEVEL = 0.95
DEFAULT_SEED = 20240101

PIVOT_IDS: Tuple[str, ...] = ('T1', 'T2', 'T3', 'T4', 'T1star', 'T2star')
MIN_PIVOT_REPS = 1000
PIVOT_REPS = 10000
PIVOT_CHUNK = 2000
STUDY_REPS = 2000
MIN_STUDY_REPS = 100

# digits printed in the published tables
TABLE_DIGITS = 5
MC_TABLE_DIGITS = 4

# alternating sums losing more than this many digits fall back to quadrature
CANCELLATION_LIMIT = 1.0e6
SINGULAR_DENOMINATOR = 1.0e-8
QUAD_EPSABS = 1.0e-12
QUAD_EPSREL = 1.0e-12

# daily COVID-19 positive rate in Andorra, 30 Dec 2021 - 30 Jan 2022
COVID_ANDORRA_POSITIVE_RATE: Tuple[float, ...] = (
    0.2012, 0.2557, 0.2508, 0.2463, 0.2609, 0.2835, 0.3226, 0.2962,
    0.3823, 0.4016, 0.4230, 0.5830, 0.6134, 0.5808, 0.5692, 0.5386,
    0.5289, 0.5189, 0.2791, 0.1954, 0.1421, 0.4703, 0.4428, 0.4385,
    0.4347, 0.4309, 0.7393, 0.8955, 0.5688, 0.6026, 0.7379, 0.9515,
)
