from contextlib import contextmanager
from pathlib import Path
from time import time
from typing import *
import json


class TimeMeasurer:
    """
    Wall-clock profiler for named blocks of a study or table run.
    Does nothing unless mode_on is set.
    :param save_path: directory prefix for time_profiling.json
    :param mode_on: switch profiling on
    """

    def __init__(self, save_path: str = '', mode_on: bool = False):
        self.path = save_path
        self.mode_on = mode_on

        self.current_block = None
        self.times_global = []
        self.times_local = dict()

        self.time_sample_global = 0
        self.time_sample_local = 0

    def begin_sample(self, name: str):
        if self.mode_on:
            self.time_sample_global = time()
            self.times_local = {'experiment_name': name}

    def end_sample(self):
        if self.mode_on:
            self.times_local.update({'total_time': time() - self.time_sample_global})
            self.times_global.append(self.times_local)

    def start_measure_local(self, block_name: str):
        if self.mode_on:
            self.current_block = block_name
            self.time_sample_local = time()

    def finish_measure_local(self):
        if self.mode_on:
            spent = time() - self.time_sample_local
            self.times_local[self.current_block] = self.times_local.get(self.current_block, 0.0) + spent

    @contextmanager
    def measure(self, block_name: str):
        """Time a block; may enclose start_measure_local / finish_measure_local pairs"""
        start = time()
        try:
            yield
        finally:
            if self.mode_on:
                self.times_local[block_name] = self.times_local.get(block_name, 0.0) + time() - start

    def as_dict(self) -> Dict:
        return {'enabled': self.mode_on, 'samples': list(self.times_global)}

    def finish_logging_time(self):
        if self.mode_on:
            path = Path(f'{self.path}time_profiling.json')
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, 'w') as handle:
                json.dump(self.times_global, handle, indent=2)
