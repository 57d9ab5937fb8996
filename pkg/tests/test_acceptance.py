"""Acceptance suite: one test per criterion, each printing a pass/fail
line (run with -s to see them on success).

Criteria 1 and 2 target the public OpenStack failure dataset. That
dataset cannot be fetched in this environment; per their own proviso
they are replaced by criterion 5 (the synthetic oracle suite). If you
have the dataset converted to the canonical formats, point
FAILSIFT_OPENSTACK_DATA at a directory holding depl/net/sto campaign
files and criteria 1-2 will run against it.
"""

import json
import os
import time
from collections import Counter
from math import comb
from pathlib import Path

import numpy as np
import pytest

from failsift import (
    AnomalyThresholds,
    DeepEmbeddedClustering,
    KMedoids,
    SynthSpec,
    anomaly_counts,
    build_alphabet,
    build_anomaly_matrix,
    build_feature_matrix,
    desk_sgd_config,
    fold_backbone,
    generate_campaign,
    gradient_check,
    init_autoencoder,
    k_medoids,
    kl_loss,
    lcs_pair,
    load_campaign,
    mode_label,
    mode_signature,
    purity,
    soft_assign,
    target_distribution,
    train_autoencoder,
    train_vmm,
    truth_labels_for,
)
from failsift.cli import main as cli_main
from failsift.evaluate import distribution_report, map_clusters

from helpers import (
    brute_force_kmedoids_cost,
    is_subsequence,
    make_trace,
    oracle_lcs_len,
    oracle_purity,
)

# every deep-clustering run executed by this suite, for criterion 8
DEC_RUNS: list[tuple[str, object]] = []


def report(criterion: str, ok: bool, detail: str = ""):
    print(f"\n[acceptance] criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {criterion} failed: {detail}"


def fit_dec(X, k, seed, name, **kw):
    params = dict(
        n_clusters=k,
        bottleneck=10,
        pretrain_steps=1200,
        finetune_steps=1200,
        update_interval=100,
        max_steps=6000,
        random_state=seed,
    )
    params.update(kw)
    est = DeepEmbeddedClustering(**params).fit(X)
    DEC_RUNS.append((name, est))
    return est


def representations(spec):
    campaign = generate_campaign(spec)
    alphabet = build_alphabet(campaign.all_traces)
    seq = build_feature_matrix(campaign, alphabet)
    backbone = fold_backbone(campaign.fault_free)
    model = train_vmm(campaign.fault_free, max_order=3)
    anomaly = build_anomaly_matrix(campaign, backbone, model, AnomalyThresholds(), alphabet)
    return campaign, {"seq": seq, "anomaly": anomaly}


WORKLOADS = {
    "synthA": SynthSpec(
        num_modes=4, base_trace_length=60, alphabet_size=12, mode_signature_length=4,
        noise_rate=0.05, traces_per_mode=30, fault_free_count=15, seed=101,
    ),
    "synthB": SynthSpec(
        num_modes=5, base_trace_length=64, alphabet_size=16, mode_signature_length=3,
        noise_rate=0.05, traces_per_mode=30, fault_free_count=15, seed=202,
    ),
}


@pytest.fixture(scope="module")
def workload_runs():
    """5-seed k-medoids and deep-clustering purities per (workload, rep)."""
    results = {}
    for wl_name, spec in WORKLOADS.items():
        campaign, reps = representations(spec)
        k = len(set(campaign.ground_truth.values()))
        for rep_name, matrix in reps.items():
            truth = truth_labels_for(campaign, matrix.row_ids)
            km_purities, dec_purities = [], []
            for seed in range(5):
                km = KMedoids(n_clusters=k, random_state=seed).fit(matrix.values)
                km_purities.append(purity(km.labels_, truth).overall)
                dec = fit_dec(matrix.values, k, seed, f"{wl_name}/{rep_name}/seed{seed}")
                dec_purities.append(purity(dec.labels_, truth).overall)
            results[(wl_name, rep_name)] = {
                "kmedoids": km_purities,
                "dec": dec_purities,
            }
    return results


@pytest.fixture(scope="module")
def oracle_suite():
    """Criterion 5 runs (and the data criterion 9 reuses), timed."""
    t0 = time.perf_counter()

    # (a) four disjoint modes, zero noise
    spec_a = SynthSpec(num_modes=4, noise_rate=0.0, traces_per_mode=40, fault_free_count=20, seed=1)
    camp_a = generate_campaign(spec_a)
    mat_a = build_feature_matrix(camp_a)
    truth_a = truth_labels_for(camp_a, mat_a.row_ids)
    km_a = KMedoids(n_clusters=4, random_state=0).fit(mat_a.values)
    dec_a = fit_dec(mat_a.values, 4, 0, "oracle/noise0", bottleneck=None,
                    pretrain_steps=2000, finetune_steps=2000, update_interval=150)

    # (b) planted-count recovery uses spec_a's campaign at zero noise
    backbone = fold_backbone(camp_a.fault_free)
    vmm = train_vmm(camp_a.fault_free, max_order=3)

    # (c) noise 0.05
    spec_c = SynthSpec(num_modes=4, noise_rate=0.05, traces_per_mode=40, fault_free_count=20, seed=2)
    camp_c = generate_campaign(spec_c)
    mat_c = build_feature_matrix(camp_c)
    truth_c = truth_labels_for(camp_c, mat_c.row_ids)
    dec_c = fit_dec(mat_c.values, 4, 0, "oracle/noise05", bottleneck=None,
                    pretrain_steps=2000, finetune_steps=2000, update_interval=150)

    elapsed = time.perf_counter() - t0
    return {
        "spec_a": spec_a, "camp_a": camp_a, "mat_a": mat_a, "truth_a": truth_a,
        "km_a": km_a, "dec_a": dec_a, "backbone": backbone, "vmm": vmm,
        "spec_c": spec_c, "camp_c": camp_c, "mat_c": mat_c, "truth_c": truth_c,
        "dec_c": dec_c, "elapsed": elapsed,
    }


def _openstack_dir():
    root = os.environ.get("FAILSIFT_OPENSTACK_DATA")
    if not root:
        return None
    return Path(root)


def _load_workload(root: Path, name: str):
    for candidate in (root / f"{name}.jsonl", root / f"{name}.csv"):
        if candidate.is_file():
            fmt = "csv-matrix" if candidate.suffix == ".csv" else "jsonl"
            return load_campaign(candidate, format=fmt)
    raise FileNotFoundError(f"no {name}.jsonl or {name}.csv under {root}")


OPENSTACK_K = {"depl": 6, "net": 4, "sto": 4}
OPENSTACK_DEC_FLOOR = {"depl": 0.80, "net": 0.80, "sto": 0.86}
OPENSTACK_KMEDOIDS = {"depl": 0.70, "net": 0.80, "sto": 0.80}


class TestCriterion1And2DatasetReplication:
    def test_criterion_1_dec_on_openstack(self):
        root = _openstack_dir()
        if root is None:
            print(
                "\n[acceptance] criterion 1: REPLACED by criterion 5 "
                "(upstream dataset unavailable; set FAILSIFT_OPENSTACK_DATA to run)"
            )
            pytest.skip("dataset unavailable; replaced by criterion 5 per the proviso")
        for name, k in OPENSTACK_K.items():
            campaign = _load_workload(root, name)
            matrix = build_feature_matrix(campaign)
            truth = truth_labels_for(campaign, matrix.row_ids)
            t0 = time.perf_counter()
            purities = []
            for seed in range(5):
                dec = fit_dec(matrix.values, k, seed, f"openstack/{name}/seed{seed}",
                              bottleneck=None, pretrain_steps=5000, finetune_steps=5000,
                              update_interval=150, max_steps=20000)
                purities.append(purity(dec.labels_, truth).overall)
            elapsed = time.perf_counter() - t0
            median = float(np.median(purities))
            report(
                f"1 ({name})",
                median >= OPENSTACK_DEC_FLOOR[name] and elapsed <= 600,
                f"median {median:.3f} vs floor {OPENSTACK_DEC_FLOOR[name]}, {elapsed:.0f}s",
            )

    def test_criterion_2_kmedoids_on_openstack(self):
        root = _openstack_dir()
        if root is None:
            print(
                "\n[acceptance] criterion 2: REPLACED by criterion 5 "
                "(upstream dataset unavailable; set FAILSIFT_OPENSTACK_DATA to run)"
            )
            pytest.skip("dataset unavailable; replaced by criterion 5 per the proviso")
        for name, k in OPENSTACK_K.items():
            campaign = _load_workload(root, name)
            matrix = build_feature_matrix(campaign)
            truth = truth_labels_for(campaign, matrix.row_ids)
            km = KMedoids(n_clusters=k, restarts=30, random_state=0).fit(matrix.values)
            value = purity(km.labels_, truth).overall
            expected = OPENSTACK_KMEDOIDS[name]
            report(
                f"2 ({name})",
                abs(value - expected) <= 0.05,
                f"purity {value:.3f} vs {expected} +/- 0.05",
            )


class TestCriterion3Ordering:
    def test_dec_median_at_least_kmedoids_median_everywhere(self, workload_runs):
        details = []
        ok = True
        for (wl, rep), purities in workload_runs.items():
            km_median = float(np.median(purities["kmedoids"]))
            dec_median = float(np.median(purities["dec"]))
            ok &= dec_median >= km_median
            details.append(f"{wl}/{rep}: dec {dec_median:.3f} vs kmedoids {km_median:.3f}")
        report("3 (ordering)", ok, "; ".join(details))


class TestCriterion4Cost:
    def test_bench_overhead_bounded(self, tmp_path):
        camp_path = tmp_path / "bench.jsonl"
        rc = cli_main(
            ["synth", "--out", str(camp_path), "--modes", "5", "--traces-per-mode", "200",
             "--fault-free", "50", "--length", "70", "--alphabet", "20",
             "--signature", "4", "--noise", "0.05", "--seed", "3"]
        )
        assert rc == 0
        out = tmp_path / "bench-out"
        rc = cli_main(["bench", str(camp_path), "--rep", "seq", "--out-dir", str(out)])
        assert rc == 0
        timing = json.loads((out / "timing.json").read_text())
        overhead = timing["overhead_seconds"]
        ok = (
            timing["n"] >= 900
            and timing["d"] <= 64
            and "overhead_seconds" in timing
            and overhead <= 300.0
        )
        report("4 (cost)", ok, f"n={timing['n']} d={timing['d']} overhead {overhead:.1f}s <= 300s")


class TestCriterion5SyntheticOracles:
    def test_a_zero_noise_perfect_purity(self, oracle_suite):
        km_purity = purity(oracle_suite["km_a"].labels_, oracle_suite["truth_a"]).overall
        dec_purity = purity(oracle_suite["dec_a"].labels_, oracle_suite["truth_a"]).overall
        report(
            "5a (noise 0, 4 disjoint modes)",
            km_purity == 1.0 and dec_purity == 1.0,
            f"kmedoids {km_purity:.4f}, dec {dec_purity:.4f}",
        )

    def test_b_planted_counts_recovered_exactly(self, oracle_suite):
        spec = oracle_suite["spec_a"]
        campaign = oracle_suite["camp_a"]
        backbone, vmm = oracle_suite["backbone"], oracle_suite["vmm"]
        label_to_mode = {mode_label(m): m for m in range(spec.num_modes)}
        mismatches = 0
        for trace in campaign.fault_injected:
            mode = label_to_mode[campaign.ground_truth[trace.experiment_id]]
            inserted, omitted = mode_signature(spec, mode)
            spurious, omission = anomaly_counts(trace, backbone, vmm, AnomalyThresholds())
            if dict(spurious) != dict(Counter(inserted)) or dict(omission) != dict(
                Counter(omitted)
            ):
                mismatches += 1
        report(
            "5b (noise 0 anomaly counts exact)",
            mismatches == 0,
            f"{mismatches} mismatching traces of {len(campaign.fault_injected)}",
        )

    def test_c_noisy_dec_purity(self, oracle_suite):
        dec_purity = purity(oracle_suite["dec_c"].labels_, oracle_suite["truth_c"]).overall
        report("5c (noise 0.05 dec purity)", dec_purity >= 0.95, f"purity {dec_purity:.4f}")

    def test_runtime_under_two_minutes(self, oracle_suite):
        elapsed = oracle_suite["elapsed"]
        report("5 (runtime)", elapsed <= 120.0, f"{elapsed:.1f}s <= 120s")


@pytest.fixture(scope="module")
def trained_model():
    rng = np.random.default_rng(19)
    centers = rng.normal(0, 4, size=(3, 14))
    X = np.vstack([c + rng.normal(0, 0.3, size=(30, 14)) for c in centers])
    model = init_autoencoder(14, 4, depth=2, seed=19)
    train_autoencoder(
        model, X, desk_sgd_config(pretrain_steps=800, finetune_steps=800, seed=19)
    )
    return model, X


class TestCriterion6NumericalProperties:
    def test_gradient_checks(self, trained_model):
        model, X = trained_model
        recon_err = gradient_check(model, X[:8], "reconstruction", seed=23)
        kl_err = gradient_check(model, X[:16], "dec_kl", seed=29)
        report(
            "6 (gradient checks)",
            recon_err <= 1e-4 and kl_err <= 1e-4,
            f"reconstruction {recon_err:.2e}, dec_kl {kl_err:.2e} (tolerance 1e-4)",
        )

    def test_row_sums_and_sharpening_on_real_assignments(self, oracle_suite):
        est = oracle_suite["dec_c"]
        Q = soft_assign(est.transform(oracle_suite["mat_c"].values), est.cluster_centers_)
        P = target_distribution(Q)
        q_ok = np.allclose(Q.sum(axis=1), 1.0, atol=1e-9)
        p_ok = np.allclose(P.sum(axis=1), 1.0, atol=1e-9)
        gaps = [r.max_entropy_gap for run_name, run in DEC_RUNS for r in run.history_]
        sharpened = max(gaps) <= 1e-9
        report(
            "6 (rows and sharpening)",
            q_ok and p_ok and sharpened,
            f"max row-sum error {max(abs(Q.sum(1) - 1).max(), abs(P.sum(1) - 1).max()):.1e}, "
            f"max entropy gap {max(gaps):.2e}",
        )

    def test_kl_self_divergence_and_fixed_point(self):
        rng = np.random.default_rng(31)
        raw = rng.uniform(0.01, 1.0, size=(40, 5))
        P = raw / raw.sum(axis=1, keepdims=True)
        self_kl = kl_loss(P, P)
        single = rng.uniform(0.05, 1.0, size=(1, 6))
        single /= single.sum()
        fixed = np.allclose(target_distribution(single), single, atol=1e-15)
        report(
            "6 (kl identity and fixed point)",
            abs(self_kl) <= 1e-12 and fixed,
            f"KL(P||P) = {self_kl:.2e}, single-sample target == q: {fixed}",
        )


class TestCriterion7CombinatorialOracles:
    def test_lcs_against_dp_oracle(self):
        rng = np.random.default_rng(37)
        alphabet = list("ABCDEFG")
        failures = 0
        for _ in range(1000):
            a = rng.choice(alphabet, size=rng.integers(0, 31)).tolist()
            b = rng.choice(alphabet, size=rng.integers(0, 31)).tolist()
            result = lcs_pair(a, b)
            if (
                len(result) != oracle_lcs_len(a, b)
                or not is_subsequence(result, a)
                or not is_subsequence(result, b)
            ):
                failures += 1
        report("7 (lcs oracle)", failures == 0, f"{failures} failures of 1000 pairs")

    def test_backbone_subsequence_property(self):
        rng = np.random.default_rng(41)
        bad = 0
        for trial in range(30):
            traces = [
                make_trace(
                    f"t{i}", rng.choice(list("ABCDE"), size=rng.integers(1, 25)).tolist(),
                    fault_free=True,
                )
                for i in range(int(rng.integers(1, 6)))
            ]
            backbone = fold_backbone(traces)
            if not all(backbone.is_subsequence_of(t.events) for t in traces):
                bad += 1
        report("7 (backbone subsequence)", bad == 0, f"{bad} violations of 30 folds")

    def test_kmedoids_exhaustive_equals_brute_force(self):
        rng = np.random.default_rng(43)
        bad = 0
        trials = 0
        for n in (4, 5, 6, 7, 8):
            for k in (2, 3):
                if k > n:
                    continue
                for metric in ("l1", "l2"):
                    trials += 1
                    X = rng.normal(size=(n, 3))
                    result = k_medoids(X, k, metric=metric, restarts=comb(n, k), seed=trials)
                    expected = brute_force_kmedoids_cost(X, k, metric)
                    if abs(result.total_cost - expected) > 1e-9:
                        bad += 1
        report("7 (kmedoids brute force)", bad == 0, f"{bad} of {trials} instances off-optimum")

    def test_purity_against_recount_oracle(self):
        rng = np.random.default_rng(47)
        bad = 0
        for _ in range(1000):
            n = int(rng.integers(1, 50))
            clusters = rng.integers(0, 6, size=n).tolist()
            truth = [f"m{v}" for v in rng.integers(0, 5, size=n)]
            if abs(purity(clusters, truth).overall - oracle_purity(clusters, truth)) > 1e-12:
                bad += 1
        report("7 (purity oracle)", bad == 0, f"{bad} mismatches of 1000 labelings")


class TestCriterion8ConvergenceContract:
    def test_every_run_converged_or_flagged(self, workload_runs, oracle_suite):
        # one deliberately capped run exercises the flagged path
        rng = np.random.default_rng(53)
        X = rng.normal(size=(60, 8)) + np.repeat(np.eye(3, 8) * 8, 20, axis=0)
        capped = fit_dec(X, 3, 0, "capped-run", bottleneck=None, pretrain_steps=200,
                         finetune_steps=200, update_interval=10, max_steps=5)
        assert capped.capped_

        bad = []
        for name, est in DEC_RUNS:
            final_change = est.history_[-1].label_change_fraction
            converged_clean = (
                est.converged_ and final_change is not None and final_change < 0.001
            )
            flagged = est.capped_
            if not (converged_clean or flagged):
                bad.append(name)
        report(
            "8 (convergence contract)",
            not bad,
            f"{len(DEC_RUNS)} runs checked, unflagged non-convergence: {bad or 'none'}",
        )


class TestCriterion9DistributionFidelity:
    def test_per_mode_delta_within_five_percent(self, oracle_suite):
        est = oracle_suite["dec_c"]
        truth = oracle_suite["truth_c"]
        labels = est.labels_
        mapping = map_clusters(labels, truth)
        dist = distribution_report(labels, truth, mapping)
        n = dist.n
        worst = max(abs(m.delta) for m in dist.modes)
        has_no_failure = any(m.mode == "NoFailure" for m in dist.modes)
        ok = worst <= 0.05 * n and has_no_failure
        detail = ", ".join(f"{m.mode}:{m.delta:+d}" for m in dist.modes)
        report("9 (distribution fidelity)", ok, f"max |delta| {worst} <= {0.05 * n:.0f}; {detail}")
