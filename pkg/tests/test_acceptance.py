"""Acceptance gate: eight go/no-go checks, one printed verdict line each.

Run with `pytest tests/test_acceptance.py -v -s`. The two training checks
(sinusoid family, full benchmark) dominate the runtime; everything else
finishes in seconds. Budgets are asserted, so a pathologically slow
environment fails loudly rather than silently degrading.
"""

import csv
import time
from pathlib import Path

import numpy as np

from metacal import cli, dataio, meta, metrics, nnet, synthgen
from metacal.meta import MetaConfig
from metacal.nnet import Batch, MlpSpec, ParamVector

REPO = Path(__file__).resolve().parents[1]

SMALL_SPECS = (
    MlpSpec(input_dim=3, hidden_widths=(5, 4), output_dim=1),
    MlpSpec(input_dim=2, hidden_widths=(6,), output_dim=1),
    MlpSpec(input_dim=4, hidden_widths=(4, 3), output_dim=1),
)


def verdict(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    print(line, flush=True)
    assert ok, line


def make_instance(seed, spec):
    rng = np.random.default_rng(seed)
    params = nnet.init_params(spec, seed)
    params = ParamVector(params.values + 0.1 * rng.standard_normal(len(params)), spec)
    batch = Batch(rng.standard_normal((8, spec.input_dim)), rng.standard_normal(8))
    return params, batch


def kink_margin(params, batch):
    """Distance to the nearest ReLU or |residual| kink (0 means on one)."""
    layers = nnet._unpack(params.values, params.spec)
    acts = batch.inputs
    margin = np.inf
    for w, b in layers[:-1]:
        acts = acts @ w + b
        margin = min(margin, float(np.abs(acts).min()))
        acts = np.maximum(acts, 0.0)
    resid = nnet.forward(params, batch.inputs) - batch.targets
    return min(margin, float(np.abs(resid).min()))


def central_diff(fn, values, step):
    out = np.empty_like(values)
    for i in range(values.size):
        up, down = values.copy(), values.copy()
        up[i] += step
        down[i] -= step
        out[i] = (fn(up) - fn(down)) / (2 * step)
    return out


def test_criterion_1_gradient_matches_finite_differences():
    t0 = time.time()
    checked, worst = 0, 0.0
    seed = 0
    while checked < 100:
        spec = SMALL_SPECS[seed % len(SMALL_SPECS)]
        params, batch = make_instance(seed, spec)
        seed += 1
        # a 1e-5 step moves preactivations by ~step * |activation|, so demand
        # a margin far above that; off-kink the loss is linear per coordinate
        # and central differences are exact to roundoff
        if kink_margin(params, batch) < 1e-3:
            continue
        g = nnet.grad(params, batch).values
        fd = central_diff(lambda v: nnet.loss_mae(ParamVector(v, spec), batch),
                          params.values, 1e-5)
        rel = np.abs(g - fd) / np.maximum.reduce(
            [np.abs(g), np.abs(fd), np.full_like(g, 1e-5)])
        worst = max(worst, float(rel.max()))
        checked += 1
    elapsed = time.time() - t0
    verdict(1, worst < 1e-5 and elapsed < 60,
            f"{checked} instances, max coordinate rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_exact_meta_gradient_matches_composite_fd():
    t0 = time.time()
    checked, worst = 0, 0.0
    seed = 0
    while checked < 20:
        spec = MlpSpec(input_dim=2, hidden_widths=(5,), output_dim=1)  # 21 params
        assert nnet.param_count(spec) <= 50
        rng = np.random.default_rng(1000 + seed)
        cfg = MetaConfig(inner_steps=1 + seed % 2, inner_lr=0.05,
                         meta_grad_mode="exact")
        phi, support = make_instance(1000 + seed, spec)
        query = Batch(rng.standard_normal((6, 2)), rng.standard_normal(6))
        seed += 1
        # the composite is smooth only if every point the FD stencil visits
        # keeps the same activation/residual sign pattern
        trajectory = meta._adapt_trajectory(phi, support, cfg.inner_steps, cfg.inner_lr)
        margins = [kink_margin(t, support) for t in trajectory]
        margins.append(kink_margin(trajectory[-1], query))
        if min(margins) < 1e-4:
            continue

        def composite(values):
            theta = meta.adapt_base(ParamVector(values, spec), support,
                                    cfg.inner_steps, cfg.inner_lr)
            return nnet.loss_mae(theta, query)

        g = meta.meta_gradient(phi, support, query, cfg).values
        fd = central_diff(composite, phi.values, 1e-6)
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, float(rel))
        checked += 1
    elapsed = time.time() - t0
    verdict(2, worst < 1e-4 and elapsed < 60,
            f"{checked} instances (k in {{1,2}}), max rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_3_zero_inner_lr_collapses_modes():
    max_diff = 0.0
    for seed in range(20):
        spec = SMALL_SPECS[seed % len(SMALL_SPECS)]
        rng = np.random.default_rng(2000 + seed)
        phi, support = make_instance(2000 + seed, spec)
        query = Batch(rng.standard_normal((7, spec.input_dim)), rng.standard_normal(7))
        fo = meta.meta_gradient(phi, support, query,
                                MetaConfig(inner_steps=3, inner_lr=0.0))
        ex = meta.meta_gradient(phi, support, query,
                                MetaConfig(inner_steps=3, inner_lr=0.0,
                                           meta_grad_mode="exact"))
        if not np.array_equal(fo.values, ex.values):
            max_diff = max(max_diff, float(np.abs(fo.values - ex.values).max()))
    verdict(3, max_diff == 0.0,
            "first-order and exact meta-gradients bit-identical on 20 instances"
            if max_diff == 0.0 else f"modes differ by up to {max_diff:.2e}")


def test_criterion_4_sinusoid_meta_init_beats_random():
    t0 = time.time()
    spec = MlpSpec(input_dim=1, hidden_widths=(40, 40), output_dim=1)
    cfg = MetaConfig(inner_steps=5, inner_lr=0.05, meta_lr=5e-3,
                     meta_batch_size=25, meta_iterations=2000,
                     meta_grad_mode="exact", seed=0)

    def sampler(it, rng):
        tasks = []
        for _ in range(cfg.meta_batch_size):
            task = synthgen.gen_sinusoid_task(int(rng.integers(2 ** 63)))
            support = synthgen.sample_task_points(task, 10, int(rng.integers(2 ** 63)))
            query = synthgen.sample_task_points(task, 10, int(rng.integers(2 ** 63)))
            tasks.append((support, query))
        return tasks

    learner = meta.train_meta_on_tasks(sampler, cfg, spec)

    def adapted_mse(theta0, task, i):
        support = synthgen.sample_task_points(task, 10, 20_000 + i)
        theta = meta.adapt_base(theta0, support, 10, 0.05)
        points = synthgen.sample_task_points(task, 100, 40_000 + i)
        return float(np.mean((nnet.forward(theta, points.inputs) - points.targets) ** 2))

    wins, meta_mse, rand_mse = 0, [], []
    for i in range(100):
        task = synthgen.gen_sinusoid_task(10_000 + i)
        m = adapted_mse(learner.phi, task, i)
        r = adapted_mse(nnet.init_params(spec, 30_000 + i), task, i)
        meta_mse.append(m)
        rand_mse.append(r)
        wins += m < r
    elapsed = time.time() - t0
    verdict(4, wins >= 95 and np.mean(meta_mse) < np.mean(rand_mse) and elapsed < 600,
            f"meta init wins {wins}/100 tasks "
            f"(query MSE {np.mean(meta_mse):.3f} vs random {np.mean(rand_mse):.3f}), "
            f"{elapsed:.0f}s")


def _method_means(details_path):
    with open(details_path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["status"] == "ok"]
    means = {}
    for m in metrics.METHODS:
        mine = [r for r in rows if r["method"] == m]
        if mine:
            means[m] = (float(np.mean([float(r["mae"]) for r in mine])),
                        float(np.mean([float(r["mae_std"]) for r in mine])))
    return means


def test_criterion_5_benchmark_reproduces_method_ordering(tmp_path):
    t0 = time.time()
    assert cli.main(["synth", "--out", str(tmp_path / "bench")]) == 0
    rc = cli.main(["compare",
                   "--config", str(REPO / "configs" / "benchmark.json"),
                   "--manifest", str(tmp_path / "bench" / "manifest.json"),
                   "--out-dir", str(tmp_path / "results")])
    elapsed = time.time() - t0
    assert rc == 0
    means = _method_means(tmp_path / "results" / "details.csv")
    mae = {m: means[m][0] for m in means}
    ordered = mae["MAML"] < mae["B3"] < mae["B2"] < mae["B1"]
    beats_raw = all(mae[m] < mae["RAW"] for m in ("B1", "B2", "B3", "MAML"))
    std_ok = means["MAML"][1] <= means["B3"][1]
    detail = ("mean MAE " +
              " ".join(f"{m}={mae[m]:.2f}" for m in ("RAW", "B1", "B2", "B3", "MAML")) +
              f"; mae_std MAML={means['MAML'][1]:.2f} B3={means['B3'][1]:.2f}; "
              f"{elapsed:.0f}s")
    verdict(5, ordered and beats_raw and std_ok and elapsed < 1800, detail)


def test_criterion_6_metrics_match_brute_force_oracles():
    worst = 0.0
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        pred = rng.normal(0.0, 10.0, n)
        truth = rng.normal(0.0, 10.0, n) + rng.uniform(0.1, 1.0)
        errors = [abs(p - t) for p, t in zip(pred, truth)]
        o_mae = sum(errors) / n
        o_std = (sum((e - o_mae) ** 2 for e in errors) / n) ** 0.5
        o_rmse = (sum(e ** 2 for e in errors) / n) ** 0.5
        t_mean = sum(truth) / n
        o_r2 = 1.0 - sum((p - t) ** 2 for p, t in zip(pred, truth)) \
            / sum((t - t_mean) ** 2 for t in truth)
        worst = max(worst,
                    abs(metrics.mae(pred, truth) - o_mae),
                    abs(metrics.mae_std(pred, truth) - o_std),
                    abs(metrics.rmse(pred, truth) - o_rmse),
                    abs(metrics.r2(pred, truth) - o_r2))
    hand = (metrics.mae([0.0, 2.0], [0.0, 0.0]) == 1.0
            and metrics.rmse([0.0, 2.0], [0.0, 0.0]) == np.sqrt(2.0)
            and metrics.mae_std([0.0, 2.0], [0.0, 0.0]) == 1.0
            and metrics.r2([1.0, -1.0], [-1.0, 1.0]) == -3.0)
    verdict(6, worst < 1e-10 and hand,
            f"1000 random vectors within {worst:.1e} of loop oracles; hand cases exact")


def test_criterion_7_split_protocol_properties():
    site = synthgen.gen_site(synthgen.SiteProfile.sample(0), 700, site_id="s")
    stats = dataio.fit_norm(site.records)
    ok = True
    for seed in range(1000):
        split = dataio.sample_support_query(site, 48, 48, seed, stats=stats)
        s_lo, s_hi = split.support_range
        q_lo, q_hi = split.query_range
        ok &= 0 <= s_lo < s_hi <= q_lo < q_hi <= len(site)
        ok &= (s_hi - s_lo, q_hi - q_lo) == (48, 48)

    forced = synthgen.gen_site(synthgen.SiteProfile.sample(1), 96, site_id="f")
    fstats = dataio.fit_norm(forced.records)
    for seed in range(50):
        split = dataio.sample_support_query(forced, 48, 48, seed, stats=fstats)
        ok &= split.support_range == (0, 48) and split.query_range == (48, 96)

    target = synthgen.gen_site(synthgen.SiteProfile.sample(2), 432, site_id="t")
    tsplit = dataio.split_target(target)
    ok &= tsplit.support_range == (0, 54)
    ok &= tsplit.query_range == (54, 72)
    ok &= tsplit.test_range == (72, 432)
    ok &= (len(tsplit.train), len(tsplit.val), len(tsplit.test)) == (54, 18, 360)
    verdict(7, ok, "1000-seed support/query chronology plus forced 96-record "
                   "and 432-record splits exact")


def test_criterion_8_compare_is_byte_deterministic(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path / "bench"), "--sources", "3",
                     "--targets", "2", "--hours", "500", "--seed", "3"]) == 0
    cfg = {
        "manifest": str(tmp_path / "bench" / "manifest.json"),
        "out_dir": "unused",
        "seeds": [0, 1],
        "hidden_widths": [16],
        "finetune": {"pretrain_epochs": 5, "finetune_step_cap": 5, "adam_lr": 1e-3},
        "meta": {"meta_iterations": 5, "meta_batch_size": 2, "inner_steps": 2,
                 "deploy_step_cap": 5},
    }
    import json
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    for out in ("run1", "run2"):
        rc = cli.main(["compare", "--config", str(cfg_path),
                       "--out-dir", str(tmp_path / out)])
        assert rc == 0
    same = all(
        (tmp_path / "run1" / name).read_bytes() == (tmp_path / "run2" / name).read_bytes()
        for name in ("details.csv", "summary.csv"))
    verdict(8, same, "details.csv and summary.csv byte-identical across reruns")
