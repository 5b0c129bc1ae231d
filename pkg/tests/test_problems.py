import json

import numpy as np
import pytest

from psoc.domain import HorizonKind
from psoc.problems import ProblemSpec, get_problem, get_spec, problem_ids, resolve


def test_registry_contents():
    ids = problem_ids()
    for pid in ("e1", "e2", "doubleint-mintime", "oscillator-energy", "lq-toy", "lqr-infinite"):
        assert pid in ids
    with pytest.raises(KeyError):
        get_spec("nope")


@pytest.mark.parametrize("pid", problem_ids())
def test_spec_round_trip(pid, tmp_path):
    spec = get_spec(pid)
    text = spec.to_json()
    again = ProblemSpec.from_json(text)
    assert again == spec
    assert again.to_json() == text
    path = tmp_path / f"{pid}.json"
    path.write_text(text)
    assert resolve(str(path)) == spec
    p = again.build()
    assert p.name == pid and p.nx == spec.nx and p.nu == spec.nu


def test_unknown_fields_and_components():
    d = get_spec("e1").to_dict()
    d["colour"] = "red"
    with pytest.raises(ValueError):
        ProblemSpec.from_dict(d)
    d = get_spec("e1").to_dict()
    d["dynamics"]["name"] = "nonlinear-magic"
    with pytest.raises(ValueError):
        ProblemSpec.from_dict(d).build()


def test_built_problem_data():
    e2 = get_problem("e2")
    assert e2.F([0.3, 0.7], [1.5], 0.0) == pytest.approx(0.7 * 1.5)
    np.testing.assert_allclose(e2.f([0.3, 0.7], [1.5], 0.0), [0.7, 0.8])
    assert e2.ne == 4 and e2.x_box[0][1] == 0.0 and e2.u_box[1][0] == 2.0
    di = get_problem("doubleint-mintime")
    assert di.horizon.kind is HorizonKind.FINITE_FREE_FINAL
    assert di.E([0, 0], [1, 0], 0.0, 2.5) == 2.5
    inf = get_spec("lqr-infinite")
    assert inf.horizon["tf"] is None
    assert json.loads(inf.to_json())["x_box"] is None
