"""Shared fixtures: integrations are cached per session since many tests
and the acceptance suite probe the same profiles."""

from __future__ import annotations

import numpy as np
import pytest

from yamabeflow.solitons import (
    SolitonKind,
    derive_params,
    integrate_radial,
    integrate_steady_cylindrical,
)


@pytest.fixture(scope="session")
def cylindrical():
    cache: dict = {}

    def get(n, beta, lam=1.0, s_end=60.0, tol=1e-11):
        key = (n, beta, lam, s_end, tol)
        if key not in cache:
            p = derive_params(n, beta, lam, SolitonKind.STEADY)
            cache[key] = integrate_steady_cylindrical(p, s_end=s_end, tol=tol)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def radial():
    cache: dict = {}

    def get(n, beta, lam=1.0, kind=SolitonKind.STEADY, r_max=np.exp(40.0),
            tol=1e-11):
        key = (n, beta, lam, SolitonKind(kind), float(r_max), tol)
        if key not in cache:
            p = derive_params(n, beta, lam, kind)
            cache[key] = integrate_radial(p, r_max=r_max, tol=tol)
        return cache[key]

    return get
