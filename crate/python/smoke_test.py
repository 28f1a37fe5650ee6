"""Smoke test for the Python extension. Build it first, e.g.

    pip install maturin && maturin develop -m crates/py/Cargo.toml --release
"""

import json
import math

import tdiff


def check_maps():
    ball = tdiff.HomogMap.ball(1, 1, 2.0)
    assert math.isclose(ball.outer_norm(), 2.0, rel_tol=1e-9)
    lin = tdiff.HomogMap.linear([[1.0, 2.0]])
    assert (lin.dim_in, lin.dim_out) == (2, 1)
    assert math.isclose(lin.outer_norm(), math.sqrt(5.0), rel_tol=1e-6)
    again = tdiff.HomogMap.from_json(lin.to_json())
    assert again.to_json() == lin.to_json()

    square = tdiff.SVMap.by_name("square")
    assert square.on_graph([3.0], [9.0])
    assert not square.on_graph([3.0], [8.0])
    region = square.eval([2.0])
    assert isinstance(region, dict)


def check_certify():
    absval = tdiff.SVMap.by_name("abs")
    cert = tdiff.certify(absval, [0.0], "outerT", t=tdiff.HomogMap.zero(1, 1))
    assert cert["verdict"] == "refuted", cert["verdict"]
    cert = tdiff.certify(absval, [0.0], "outerT", t=tdiff.HomogMap.ball(1, 1, 1.0))
    assert cert["verdict"] == "verified_at_scale", cert["verdict"]
    poly = tdiff.SVMap.from_json(json.dumps(tdiff.gallery()["mordukhovich.json"]["maps"]["abs"]))
    d = tdiff.graphical_derivative(poly, [0.0], [0.0])
    cert = tdiff.certify(poly, [0.0], "outerT", t=d)
    assert cert["verdict"] == "verified_at_scale", cert["verdict"]
    lip = tdiff.estimate_lip(absval, [0.0], [0.0])
    assert abs(lip["value"] - 1.0) < 0.05, lip


def check_coderivative():
    spec = tdiff.gallery()["mordukhovich.json"]["maps"]["abs"]
    s = tdiff.SVMap.from_json(json.dumps(spec))
    info = tdiff.coderivative(s, [0.0], [0.0])
    assert info["criterion_holds"]
    assert info["graphical_modulus"] > 0
    ball = tdiff.coderivative_ball(s, [0.0], [0.0])
    assert math.isclose(ball.outer_norm(), info["graphical_modulus"], rel_tol=1e-6)


def check_instances():
    gallery = tdiff.gallery()
    report, code = tdiff.run_instance(json.dumps(gallery["example_4_7.json"]), seed=0)
    assert code == 0
    statuses = {t["status"] for t in report["tasks"]}
    assert "expected_refutation" in statuses
    try:
        tdiff.run_instance("{not json")
    except RuntimeError as e:
        assert "line 1" in str(e)
    else:
        raise AssertionError("malformed instance accepted")


if __name__ == "__main__":
    for check in (check_maps, check_certify, check_coderivative, check_instances):
        check()
        print(f"{check.__name__}: ok")
    print(f"tdiff {tdiff.__version__} smoke test passed")
