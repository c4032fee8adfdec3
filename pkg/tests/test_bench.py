import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_array_equal

from proxsplit import bench, cli
from proxsplit import operators as op
from proxsplit.bench import ConfigError, ExperimentConfig, RateError, estimate_rate
from proxsplit.schedules import Schedule
from proxsplit.solvers import COLUMNS, DivergenceError, Probe, StoppingRule, TermBundle, run

# ---------------------------------------------------------------------------
# Configs


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(name="x", algorithm="pddy", schedule="accel_pddy", sigma=None, eta=8.0)
    p = tmp_path / "c.toml"
    cfg.save(p)
    assert ExperimentConfig.load(p) == cfg


@given(
    st.sampled_from(bench.PROBLEMS),
    st.sampled_from(["pd3o", "pddy", "chambolle_pock_i", "forward_backward"]),
    st.floats(1e-3, 10.0),
    st.integers(1, 10**6),
    st.one_of(st.none(), st.floats(1e-3, 100.0)),
    st.booleans(),
)
def test_config_round_trip_property(problem, alg, gamma0, max_iter, sigma, distributed):
    cfg = ExperimentConfig(problem=problem, algorithm=alg, gamma0=gamma0, max_iter=max_iter, sigma=sigma,
                           distributed=distributed)
    assert ExperimentConfig.from_toml(cfg.to_toml()) == cfg


def test_config_coerces_integers():
    cfg = ExperimentConfig.from_toml("gamma0 = 1\nmax_iter = 20\n")
    assert isinstance(cfg.gamma0, float) and cfg.gamma0 == 1.0


@pytest.mark.parametrize("text", [
    "gamm0 = 1.0\n",
    "problem = 'lasso'\n",
    "algorithm = 'admm'\n",
    "schedule = 'cosine'\n",
    "x0 = 'random'\n",
    "max_iter = 0\n",
    "gamma0 = [1.0\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_toml(text)


def test_problem_key_ignores_solver_settings():
    a = ExperimentConfig(problem="deblur-tv", algorithm="pd3o", gamma0=1.7)
    b = a.replace(algorithm="pddy", gamma0=0.3, max_iter=5, name="other")
    assert bench.reference_key(a) == bench.reference_key(b)
    assert bench.reference_key(a) != bench.reference_key(a.replace(lam=0.5))
    # nu only matters for the Huber problem
    assert bench.reference_key(a) == bench.reference_key(a.replace(nu=0.3))
    h = a.replace(problem="deblur-huber")
    assert bench.reference_key(h) != bench.reference_key(h.replace(nu=0.3))


def test_presets():
    runs = bench.preset("deblur-tv-64")
    assert [r.name for r in runs] == ["deblur-tv-64-pd3o-constant", "deblur-tv-64-pddy-constant",
                                      "deblur-tv-64-condat_vu_i-constant"]
    assert all(r.n == 64 for r in runs)
    acc = bench.preset("deblur-tv-64", "accelerated")
    assert [(r.algorithm, r.schedule) for r in acc] == [("pd3o", "accel_pd3o"), ("pddy", "accel_pddy")]
    assert all((r.gamma0, r.kappa, r.eta) == (1.7, 0.15, 8.0) for r in acc)
    svm = bench.preset("svm-hinge-toy", "all")
    assert [r.schedule for r in svm] == ["constant", "accel_pd3o"]
    assert all(r.distributed and r.algorithm == "douglas_rachford" and r.gamma0 == 0.1 for r in svm)
    assert len(bench.preset("deblur-tv-64", "all", algorithm="pddy")) == 2
    with pytest.raises(ConfigError):
        bench.preset("deblur-tv")
    with pytest.raises(ConfigError):
        bench.preset("deblur-none-8", algorithm="pd3o")


def test_condat_vu_settings_satisfy_condition():
    cfg = bench.preset("deblur-tv-16")[2]
    assert cfg.algorithm == "condat_vu_i"
    val = cfg.gamma0 * (cfg.sigma * 8 + 0.5)
    assert 0.9 < val < 1


def test_missing_australian_dataset(monkeypatch, tmp_path):
    monkeypatch.setenv("PROXSPLIT_DATA", str(tmp_path))
    with pytest.raises(ConfigError, match="not bundled"):
        bench.build_instance(bench.preset("svm-hinge-australian")[0])


# ---------------------------------------------------------------------------
# Rate estimation


def test_rate_powerlaw_synthetic():
    k = np.arange(1, 10001, dtype=float)
    est = estimate_rate({"k": k, "dist_sq": 1.0 / k**2}, "dist_sq", "powerlaw")
    assert est.slope == pytest.approx(-2.0, abs=0.01)
    assert est.r_squared > 0.999
    assert est.window == (5000.0, 10000.0)


def test_rate_geometric_synthetic():
    k = np.arange(1, 201, dtype=float)
    est = estimate_rate({"k": k, "dist_sq": 0.9**k}, "dist_sq", "linear_geometric", window=(1, math.inf))
    assert est.factor == pytest.approx(0.9, abs=1e-3)


def test_rate_window_cut_at_floor():
    k = np.arange(1, 101, dtype=float)
    v = 0.5**k
    est = estimate_rate({"k": k, "psi_gap": v}, "psi_gap", "linear_geometric", window=(1, 100), floor=1e-15)
    assert est.window[1] < 50
    assert est.factor == pytest.approx(0.5, rel=1e-9)


def test_rate_errors():
    with pytest.raises(RateError):
        estimate_rate({"k": np.array([]), "dist_sq": np.array([])})
    with pytest.raises(RateError):
        estimate_rate({"k": np.array([1.0, 2.0]), "dist_sq": np.array([1.0, 0.0])}, window=(1, 2))
    with pytest.raises(RateError):
        estimate_rate({"k": np.arange(1.0, 5.0), "dist_sq": np.ones(4)}, model="cubic")


def test_rate_forward_backward_quadratic():
    """dist_sq of forward-backward on a quadratic contracts by (1 - gamma mu)^2 per step."""
    mu, L = 0.05, 1.0
    F = op.quadratic(np.diag(np.linspace(mu, L, 10)))
    b = TermBundle(10, F=F)
    gamma = 1.0 / L
    res = run("forward_backward", b, Schedule("constant", gamma), StoppingRule(300), x0=np.ones(10),
              probe=Probe(b.objective, x_ref=np.zeros(10), ergodic=False))
    est = estimate_rate(res.trace, "dist_sq", "linear_geometric", window=(100, 300), floor=1e-300)
    assert est.factor == pytest.approx((1 - gamma * mu) ** 2, rel=1e-6)


# ---------------------------------------------------------------------------
# Reference solutions


def _kkt_residual(b, x, g):
    """Violation of the optimality conditions of min over x >= 0 with gradient g."""
    pos = x > 1e-9 * max(1.0, np.abs(x).max())
    return max(np.abs(g[pos]).max(initial=0.0), (-g[~pos]).max(initial=0.0), (-x).max(initial=0.0))


def test_reference_deblur_none_is_optimal(tmp_path):
    cfg = bench.preset("deblur-none-16")[0]
    ref = bench.reference_solution(cfg, cache_dir=tmp_path)
    b = bench.build_instance(cfg).bundle
    scale = np.abs(b.grad(np.zeros(b.n))).max()
    assert _kkt_residual(b, ref.x, b.grad(ref.x)) <= 1e-9 * scale


def test_reference_deblur_huber_is_optimal(tmp_path):
    cfg = bench.preset("deblur-huber-16")[0]
    ref = bench.reference_solution(cfg, cache_dir=tmp_path)
    b = bench.build_instance(cfg).bundle
    g = b.grad(ref.x) + b.Kt(b.H.gradient(b.Kx(ref.x)))
    scale = np.abs(b.grad(np.zeros(b.n))).max()
    assert _kkt_residual(b, ref.x, g) <= 1e-9 * scale


def test_reference_svm_is_optimal(ref_cache):
    cfg = bench.preset("svm-hinge-toy")[0]
    ref = bench.reference_solution(cfg, cache_dir=ref_cache)
    inst = bench.build_instance(cfg)
    f = lambda v: inst.objective(v)[0]
    assert f(ref.x) == pytest.approx(ref.psi, abs=1e-14)
    rng = np.random.default_rng(0)
    for _ in range(500):
        assert f(ref.x + 1e-6 * rng.standard_normal(ref.x.size)) >= ref.psi - 1e-14


def test_reference_cache(tmp_path):
    cfg = bench.preset("deblur-huber-16")[0]
    first = bench.reference_solution(cfg, cache_dir=tmp_path)
    files = list(tmp_path.glob("ref-*.npz"))
    assert [f.name for f in files] == [f"ref-{bench.reference_key(cfg)}.npz"]
    hit = bench.reference_solution(cfg, cache_dir=tmp_path)
    assert_array_equal(hit.x, first.x)
    assert hit.psi == first.psi
    fresh = bench.reference_solution(cfg, cache_dir=tmp_path, use_cache=False)
    assert_array_equal(fresh.x, first.x)


def test_corrupt_cache_is_recomputed(tmp_path):
    cfg = bench.preset("deblur-none-16")[0]
    good = bench.reference_solution(cfg, cache_dir=tmp_path)
    path = tmp_path / f"ref-{bench.reference_key(cfg)}.npz"
    path.write_bytes(b"not an npz file")
    with pytest.warns(UserWarning, match="corrupt"):
        again = bench.reference_solution(cfg, cache_dir=tmp_path)
    assert_array_equal(again.x, good.x)
    with np.load(path) as z:
        assert_array_equal(z["x"], good.x)


# ---------------------------------------------------------------------------
# Experiments and output


def test_csv_format_and_determinism(tmp_path, ref_cache):
    cfg = bench.preset("deblur-huber-16")[0].replace(max_iter=40, record_every=10)
    a = bench.run_experiment(cfg, out_dir=tmp_path / "a", cache_dir=ref_cache)
    b = bench.run_experiment(cfg, out_dir=tmp_path / "b", cache_dir=ref_cache)
    text = a.csv_path.read_text()
    assert text.splitlines()[0] == ",".join(COLUMNS)
    assert text == b.csv_path.read_text()
    data = bench.read_trace_csv(a.csv_path)
    assert list(data["k"]) == [1, 10, 20, 30, 40]
    assert np.all(data["wall_ms"] == 0) and np.all(data["feasible"] == 1)
    assert np.all(np.diff(data["gamma_k"]) == 0)


def test_read_trace_rejects_bad_header(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("k,value\n1,2\n")
    with pytest.raises(ValueError):
        bench.read_trace_csv(p)


def test_sidecar_deblur(tmp_path, ref_cache):
    cfg = bench.preset("deblur-tv-16", "accelerated", "pd3o")[0].replace(max_iter=30)
    res = bench.run_experiment(cfg, out_dir=tmp_path, emit_gnuplot=True, cache_dir=ref_cache)
    side = json.loads(res.json_path.read_text())
    c = side["config"]
    assert (c["gamma0"], c["kappa"], c["eta"]) == (1.7, 0.15, 8.0)
    assert (side["problem"]["lam"], side["problem"]["nu"]) == (0.6, 0.1)
    assert side["problem"]["eta"] == 8.0
    assert side["constants"]["c0"] > 0
    assert side["reference_key"] == bench.reference_key(cfg)
    assert side["iterations"] == 30 and side["diverged"] is False
    assert (tmp_path / f"{cfg.name}.gp").read_text().count(f"{cfg.name}.csv") == 2


def test_sidecar_svm(tmp_path, ref_cache):
    cfg = bench.preset("svm-hinge-toy")[0].replace(max_iter=20)
    res = bench.run_experiment(cfg, out_dir=tmp_path, cache_dir=ref_cache)
    side = json.loads(res.json_path.read_text())
    assert (side["config"]["alpha"], side["config"]["gamma0"]) == (0.1, 0.1)
    M = side["problem"]["M"]
    assert M == 100
    assert side["problem"]["omegas"] == pytest.approx([1 / M] * M)
    data = bench.read_trace_csv(res.csv_path)
    assert np.all(data["msgs"] == M + 1)


def _diverging_run(real_run):
    """The shipped problems keep their iterates bounded, so divergence is injected after 7 iterations."""

    def fake(*args, **kwargs):
        kwargs["stopping"] = StoppingRule(7)
        args = args[:3]
        res = real_run(*args, **kwargs)
        raise DivergenceError(8, res.trace)

    return fake


def test_divergence_keeps_partial_trace(tmp_path, ref_cache, monkeypatch):
    monkeypatch.setattr(bench, "run", _diverging_run(bench.run))
    cfg = bench.preset("deblur-huber-16")[0].replace(max_iter=5000, record_every=1, name="div")
    res = bench.run_experiment(cfg, out_dir=tmp_path, cache_dir=ref_cache)
    assert res.diverged and len(res.trace) == 7
    assert json.loads(res.json_path.read_text())["diverged"] is True
    assert len(bench.read_trace_csv(res.csv_path)["k"]) == 7


def test_check_theorems_rows():
    k = np.arange(1, 10001, dtype=float)
    good = {"k": k, "psi_gap": 1 / k, "ergodic_gap": 1 / k, "dist_sq": 1 / k**2}
    bad = {"k": k, "psi_gap": k**-0.3, "ergodic_gap": k**-0.3, "dist_sq": k**-0.3}
    rows = bench.check_theorems({"deblur-tv-pd3o-constant": good, "deblur-tv-pddy-constant": bad})
    status = {r.name: r.status for r in rows}
    assert status["sublinear PD3O psi_gap"] == "PASS"
    assert status["sublinear PDDY psi_gap"] == "FAIL"
    assert status["SVM DR psi_gap"] == "SKIPPED"
    assert "sublinear PD3O psi_gap" in bench.format_report(rows)


# ---------------------------------------------------------------------------
# Command line


def test_cli_run_and_rate(tmp_path, ref_cache, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", "deblur-huber-16", "--algorithm", "pd3o", "--max-iter", "200",
                     "--out", str(out), "--cache", ref_cache])
    assert code == cli.EXIT_OK
    csv = out / "deblur-huber-16-pd3o-constant.csv"
    assert csv.exists() and (out / "deblur-huber-16-pd3o-constant.json").exists()
    assert cli.main(["rate", str(csv), "--model", "linear_geometric", "--k-lo", "1"]) == cli.EXIT_OK
    assert "factor=" in capsys.readouterr().out


def test_cli_config_file_and_directory(tmp_path, ref_cache):
    d = tmp_path / "cfgs"
    d.mkdir()
    for alg in ("pd3o", "pddy"):
        ExperimentConfig(name=f"h-{alg}", problem="deblur-huber", n=16, algorithm=alg, max_iter=20,
                         eta=8.0).save(d / f"{alg}.toml")
    assert cli.main(["run", str(d / "pd3o.toml"), "--out", str(tmp_path / "o1"), "--cache", ref_cache]) == 0
    assert cli.main(["run", str(d), "--out", str(tmp_path / "o2"), "--cache", ref_cache]) == 0
    assert sorted(p.name for p in (tmp_path / "o2").glob("*.csv")) == ["h-pd3o.csv", "h-pddy.csv"]


def test_cli_config_errors(tmp_path, capsys):
    assert cli.main(["run", "no-such-preset"]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.toml"
    bad.write_text("colour = 'red'\n")
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["run", str(tmp_path / "missing.toml")]) == cli.EXIT_CONFIG
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["run", str(empty)]) == cli.EXIT_CONFIG
    assert cli.main(["rate", str(tmp_path / "none.csv")]) == cli.EXIT_CONFIG
    # stepsize above the admissible bound
    big = tmp_path / "big.toml"
    ExperimentConfig(problem="deblur-none", n=16, algorithm="forward_backward", gamma0=2.5).save(big)
    assert cli.main(["run", str(big), "--cache", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_cli_divergence_exit_code(tmp_path, ref_cache, monkeypatch):
    monkeypatch.setattr(bench, "run", _diverging_run(bench.run))
    assert cli.main(["run", "deblur-huber-16", "--algorithm", "pd3o", "--out", str(tmp_path),
                     "--cache", ref_cache]) == cli.EXIT_DIVERGED


def test_cli_check_failure_exit_code(tmp_path, ref_cache, capsys):
    # 20 iterations leave the (1e2, 1e4) fitting window empty, so the checks fail
    code = cli.main(["check", "deblur-tv-16", "--max-iter", "20", "--cache", ref_cache])
    assert code == cli.EXIT_CHECK
    out = capsys.readouterr().out
    assert "FAIL" in out and "SKIPPED" in out
