"""Smoke test for the nevlab extension module.

Build and install first:

    pip install --no-build-isolation ./crates/python

then run `python python/smoke_test.py` (or `pytest python/smoke_test.py`).
"""

import math
import pathlib
import tempfile

import nevlab


def close(a, b, tol):
    return abs(a - b) <= tol


def test_geometry():
    for r in (0.1, 1.0, 5.0):
        assert close(nevlab.euclidean_radius(r, surface="poincare"), math.tanh(r / 2), 1e-12)
    assert nevlab.euclidean_radius(3.0) == 3.0


def test_characteristics():
    assert close(nevlab.characteristic("[1 : z]", 1.0), 0.5 * math.log(2), 1e-9)
    t, m, n = nevlab.classic_t("exp(z)", math.pi)
    assert close(t, 1.0, 1e-6) and close(m, 1.0, 1e-6) and n == 0.0
    rows = nevlab.fmt_rows("[1 : exp(z)]", ["w_1"], [2.0, 10.0, 50.0])
    residuals = [row["residual"] for row in rows]
    assert max(residuals) - min(residuals) < 1e-6
    assert [row["r"] for row in rows] == [2.0, 10.0, 50.0]


def test_monte_carlo():
    mean, stderr = nevlab.exit_time(1.0, n_paths=4000, seed=3)
    assert abs(mean - 0.5) <= 4 * stderr + 0.005
    again = nevlab.exit_time(1.0, n_paths=4000, seed=3)
    assert again == (mean, stderr)


def test_algebra():
    assert nevlab.nev_bound(["w_0", "w_1"], 1) == "2"
    assert nevlab.nev_bound(["w_0 + 2*w_1 - w_2"], 2) == "3"
    # a single function is its own Wronskian, so both sides are normal forms
    assert nevlab.wronskian(["1", "z", "z^2"]) == nevlab.wronskian(["2"])
    assert nevlab.wronskian(["1", "exp(z)"]) == nevlab.wronskian(["exp(z)"])


def test_errors():
    for call in (
        lambda: nevlab.characteristic("[1 : exp(]", 1.0),
        lambda: nevlab.euclidean_radius(1.0, surface="sphere"),
        lambda: nevlab.euclidean_radius(1.0, surface="poincare", a=-1.0),
    ):
        try:
            call()
        except ValueError:
            continue
        raise AssertionError("expected ValueError")


def test_run_config():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = pathlib.Path(tmp) / "fmt.toml"
        cfg.write_text(
            'experiment = "fmt"\n'
            "[grid]\nmin = 2.0\nmax = 20.0\ncount = 4\n"
            '[fmt]\ncurve = "[1 : exp(z)]"\ndivisor = ["w_1"]\n'
        )
        out_dir, assertions = nevlab.run_config(str(cfg), str(pathlib.Path(tmp) / "out"))
        assert (pathlib.Path(out_dir) / "report.json").exists()
        assert assertions and all(passed for _, passed, _ in assertions)


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"ok {test.__name__}")
    print(f"{len(tests)} smoke tests passed (nevlab {nevlab.__version__})")
