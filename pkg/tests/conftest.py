"""Shared fixtures: the bundled scenario pair is expensive, so it is
generated and run through the pipeline once per session."""

import warnings

import pytest

from riskcouple import default_scenario, make_pair
from riskcouple.pipeline import default_pipeline_config, run_pipeline


@pytest.fixture(scope="session")
def scenario_pair():
    cfg = default_scenario()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return make_pair(cfg)


@pytest.fixture(scope="session")
def pair_results(scenario_pair):
    (log1, _), (log2, _) = scenario_pair
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return (
            run_pipeline(log1, default_pipeline_config()),
            run_pipeline(log2, default_pipeline_config()),
        )


@pytest.fixture(scope="session")
def default_run(pair_results):
    return pair_results[0]


@pytest.fixture(scope="session")
def default_truths(scenario_pair):
    return scenario_pair[0][1], scenario_pair[1][1]
