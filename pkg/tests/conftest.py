"""Shared fixtures and hypothesis profiles."""

import os
from datetime import timedelta

import pytest
from hypothesis import HealthCheck, Verbosity, settings

from weakdep import build_finite_chain, flip_chain

settings.register_profile(
    "default", deadline=timedelta(milliseconds=2000),
    suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("dev", max_examples=20)
settings.register_profile("debug", max_examples=10, verbosity=Verbosity.verbose)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def flip25():
    return flip_chain(0.25)


@pytest.fixture(scope="session")
def iid_chain():
    return flip_chain(0.5)


@pytest.fixture(scope="session")
def three_state():
    return build_finite_chain(
        [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
        [2.0, 0.0, -2.0], 1.0, states=("a", "b", "c"))


@pytest.fixture(scope="session")
def four_state():
    # dyadic entries keep the exact product-chain solves fast
    t = [[0.375, 0.25, 0.25, 0.125],
         [0.125, 0.375, 0.25, 0.25],
         [0.25, 0.125, 0.375, 0.25],
         [0.25, 0.25, 0.125, 0.375]]
    return build_finite_chain(t, [3.0, 1.0, -1.0, -3.0], 1.0)
