import numpy as np
import pytest

from fifaudit import (
    Dataset,
    Schema,
    generate_insurance_example,
    insurance_tree_dt1,
    insurance_tree_dt2,
)


@pytest.fixture(scope="session")
def insurance():
    return generate_insurance_example(500)


@pytest.fixture(scope="session")
def dt1():
    return insurance_tree_dt1()


@pytest.fixture(scope="session")
def dt2():
    return insurance_tree_dt2()


def make_dataset(x, a, y, yhat=None, weights=None, feature_names=None,
                 sensitive_names=None, prediction=False):
    """Small-dataset builder with sensible schema defaults."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a = np.asarray(a, dtype=str)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    k = x.shape[1]
    schema = Schema(
        feature_names=tuple(feature_names or (f"x{i+1}" for i in range(k))),
        sensitive_names=tuple(sensitive_names or ("s",)),
        label_name="y",
        prediction_name="yhat" if (prediction or yhat is not None) else None,
    )
    return Dataset(schema=schema, x=x, a=a, y=np.asarray(y), yhat=yhat, weights=weights)
