//! Checks shared by the regular test targets and the acceptance runner. Each
//! returns a one-line summary on success and a description on failure.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use fewshot::bench::{bench_on_episode, BenchConfig, BenchMode};
use fewshot::confusion::confusion_matrix;
use fewshot::dataset::{DatasetManifest, SyntheticSpec, UtteranceRecord};
use fewshot::encoder::{encode_backward, encode_pooled, init_encoder, Mat};
use fewshot::learners::{self, svm_dual_objective, svm_solve, LearnerConfig, LearnerKind};
use fewshot::meta::{episode_predictions, evaluate, run_training, EvalOptions, Model, TrainConfig};
use fewshot::protocol::{generate_episode, make_split, EpisodeSpec, SplitAssignment, SplitCounts, SplitMode, Subset};
use fewshot::rng;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::{
    cross_entropy, cross_entropy_grad, fixture, learner_cfg, learner_gradcheck, random_instance, relative_error,
    svm_masks, Fixture,
};

pub type Outcome = Result<String, String>;

// negated on purpose: a NaN must fail the check
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const GRID_N: [usize; 3] = [2, 3, 5];
const GRID_M: [usize; 3] = [1, 2, 5];
const GRID_D: [usize; 2] = [4, 10];

// ---------------------------------------------------------------- gradients

/// Learner and encoder gradients against central differences with step 1e-3
/// over the full (n, m, d) grid.
pub fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let (mut instances, mut coords, mut skipped) = (0, 0, 0);
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let mut seed = 0;
    for kind in LearnerKind::ALL {
        for n in GRID_N {
            for m in GRID_M {
                for d in GRID_D {
                    seed += 1;
                    let inst = random_instance(seed, n, m, d, 2);
                    let mut cfg = learner_cfg(kind);
                    cfg.temperature = 1.5;
                    let res = learner_gradcheck(&cfg, &inst, 1e-3);
                    ensure!(res.rel_err < 1e-3, "{kind} n={n} m={m} d={d}: rel err {:.3e}", res.rel_err);
                    let w = worst.entry(kind.to_string()).or_default();
                    *w = w.max(res.rel_err);
                    coords += res.coordinates;
                    skipped += res.skipped;
                    instances += 1;

                    seed += 1;
                    let res = encoder_gradcheck(&cfg, seed, n, m, d, seed % 2 == 0, 1e-3);
                    ensure!(
                        res.rel_err < 1e-3,
                        "encoder+{kind} n={n} m={m} d={d}: rel err {:.3e}",
                        res.rel_err
                    );
                    let w = worst.entry("encoder".into()).or_default();
                    *w = w.max(res.rel_err);
                    coords += res.coordinates;
                    skipped += res.skipped;
                    instances += 1;
                }
            }
        }
    }
    ensure!(
        (skipped as f64) < 0.02 * coords as f64,
        "{skipped} of {coords} stencils straddled a kink"
    );
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    let worst: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    Ok(format!(
        "{instances} instances, worst rel err [{}], {skipped}/{coords} kink stencils skipped, {secs:.1}s",
        worst.join(", ")
    ))
}

pub struct EncoderCheck {
    pub rel_err: f64,
    pub coordinates: usize,
    pub skipped: usize,
}

/// Gradient of `CE(learner(encoder(pooled)))` w.r.t. the encoder weights and
/// bias. Stencils that flip a ReLU or change an SVM active set are skipped.
pub fn encoder_gradcheck(
    cfg: &LearnerConfig,
    seed: u64,
    n: usize,
    m: usize,
    emb_dim: usize,
    relu: bool,
    step: f64,
) -> EncoderCheck {
    let q = 2;
    let feat = 6;
    let mut r = rng::rng(seed);
    let pooled = Mat::from_fn(n * (m + q), feat, |_, _| r.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..n * m).map(|i| i / m).collect();
    let qlabels: Vec<usize> = (0..n * q).map(|i| i / q).collect();
    let mut enc = init_encoder(feat, emb_dim, seed).unwrap();
    enc.bias = fewshot::encoder::Vector::from_fn(emb_dim, |_, _| r.random_range(-0.3..0.3));
    enc.relu = relu;

    let run = |e: &fewshot::encoder::EncoderParams| {
        let (emb, cache) = encode_pooled(e, pooled.clone()).unwrap();
        let s = emb.rows(0, n * m).into_owned();
        let qe = emb.rows(n * m, n * q).into_owned();
        let out = learners::forward(cfg, &s, &labels, n, &qe).unwrap();
        let pre = &pooled * e.weight.transpose();
        let pattern: Vec<bool> = pre
            .row_iter()
            .flat_map(|row| row.iter().zip(e.bias.iter()).map(|(a, b)| a + b > 0.0).collect::<Vec<_>>())
            .collect();
        (out, cache, pattern)
    };
    let (out, cache, pattern) = run(&enc);
    let g_logits = cross_entropy_grad(&out.logits, &qlabels);
    let lg = learners::backward(cfg.kind, &out.state, &g_logits).unwrap();
    let mut g_emb = Mat::zeros(n * (m + q), emb_dim);
    g_emb.rows_mut(0, n * m).copy_from(&lg.support);
    g_emb.rows_mut(n * m, n * q).copy_from(&lg.query);
    let grads = encode_backward(&cache, &g_emb).unwrap();
    let base_masks = svm_masks(&out);

    let (mut ana, mut num) = (Vec::new(), Vec::new());
    let mut skipped = 0;
    let total = enc.weight.len() + enc.bias.len();
    for idx in 0..total {
        let shifted = |sign: f64| {
            let mut e = enc.clone();
            if idx < enc.weight.len() {
                e.weight.as_mut_slice()[idx] += sign * step;
            } else {
                e.bias[idx - enc.weight.len()] += sign * step;
            }
            let (o, _, p) = run(&e);
            let kink = svm_masks(&o) != base_masks || (relu && p != pattern);
            (cross_entropy(&o.logits, &qlabels), kink)
        };
        let (up, k1) = shifted(1.0);
        let (dn, k2) = shifted(-1.0);
        if k1 || k2 {
            skipped += 1;
            continue;
        }
        num.push((up - dn) / (2.0 * step));
        ana.push(if idx < enc.weight.len() {
            grads.weight.as_slice()[idx]
        } else {
            grads.bias[idx - enc.weight.len()]
        });
    }
    EncoderCheck {
        rel_err: relative_error(&ana, &num),
        coordinates: total,
        skipped,
    }
}

// ------------------------------------------------------------------ oracles

/// Exact optimum of the 2-way dual by enumerating active sets. With two
/// classes each dual row is `(a, -a)` (own class first), `a` in `[0, C]`, so
/// the problem is a box QP over one scalar per support point.
pub fn two_way_dual_optimum(support: &Mat, labels: &[usize], c: f64) -> f64 {
    let s = support.nrows();
    let sign: Vec<f64> = labels.iter().map(|&y| if y == 0 { 1.0 } else { -1.0 }).collect();
    let k = support * support.transpose();
    // both class columns contribute to the quadratic term
    let h = Mat::from_fn(s, s, |i, j| 2.0 * sign[i] * sign[j] * k[(i, j)]);
    let value = |a: &[f64]| -> f64 {
        let lin: f64 = a.iter().sum();
        let mut quad = 0.0;
        for i in 0..s {
            for j in 0..s {
                quad += a[i] * h[(i, j)] * a[j];
            }
        }
        lin - 0.5 * quad
    };
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(s as u32) {
        // 0 = at lower bound, 1 = at upper bound, 2 = free
        let states: Vec<usize> = (0..s).map(|i| (code / 3usize.pow(i as u32)) % 3).collect();
        let free: Vec<usize> = (0..s).filter(|&i| states[i] == 2).collect();
        let mut a: Vec<f64> = states.iter().map(|&st| if st == 1 { c } else { 0.0 }).collect();
        if !free.is_empty() {
            let hf = Mat::from_fn(free.len(), free.len(), |p, q| h[(free[p], free[q])]);
            let rhs = nalgebra::DVector::from_fn(free.len(), |p, _| {
                1.0 - (0..s).filter(|j| states[*j] == 1).map(|j| h[(free[p], j)] * c).sum::<f64>()
            });
            let Some(sol) = hf.lu().solve(&rhs) else { continue };
            for (p, &i) in free.iter().enumerate() {
                a[i] = sol[p];
            }
        }
        if a.iter().all(|v| *v >= -1e-12 && *v <= c + 1e-12) {
            best = best.max(value(&a));
        }
    }
    best
}

/// Ridge dual vs primal, proto vs a distance loop, SVM vs the exact QP.
// the proto oracle is a deliberately naive index loop
#[allow(clippy::needless_range_loop)]
pub fn oracle_suite() -> Outcome {
    let start = Instant::now();
    let mut worst_ridge = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng::rng(seed);
        let n = r.random_range(2..6);
        let m = r.random_range(1..6);
        let d = r.random_range(4..32);
        let lambda = [0.1, 1.0, 50.0][seed as usize % 3];
        let inst = random_instance(seed + 1000, n, m, d, 2);
        let cfg = LearnerConfig {
            ridge_lambda: lambda,
            ..LearnerConfig::new(LearnerKind::Ridge)
        };
        let out = learners::forward(&cfg, &inst.support, &inst.labels, n, &inst.query).unwrap();
        let x = &inst.support;
        let y = Mat::from_fn(n * m, n, |i, k| if inst.labels[i] == k { 1.0 } else { 0.0 });
        let primal = (x.transpose() * x + Mat::identity(d, d) * lambda)
            .lu()
            .solve(&(x.transpose() * &y))
            .unwrap();
        let err = (out.logits - &inst.query * primal).amax();
        ensure!(err < 1e-5, "ridge seed {seed}: max diff {err:.2e}");
        worst_ridge = worst_ridge.max(err);
    }

    let mut worst_proto = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng::rng(seed + 5000);
        let n = r.random_range(2..6);
        let m = r.random_range(1..6);
        let d = r.random_range(2..16);
        let t = r.random_range(0.1..3.0);
        let inst = random_instance(seed + 2000, n, m, d, 3);
        let cfg = LearnerConfig {
            temperature: t,
            ..LearnerConfig::new(LearnerKind::Proto)
        };
        let out = learners::forward(&cfg, &inst.support, &inst.labels, n, &inst.query).unwrap();
        for i in 0..inst.query.nrows() {
            for k in 0..n {
                let mut centroid = vec![0.0; d];
                let mut count = 0.0;
                for (s, &y) in inst.labels.iter().enumerate() {
                    if y == k {
                        for c in 0..d {
                            centroid[c] += inst.support[(s, c)];
                        }
                        count += 1.0;
                    }
                }
                let mut dist = 0.0;
                for c in 0..d {
                    dist += (inst.query[(i, c)] - centroid[c] / count).powi(2);
                }
                let err = (out.logits[(i, k)] + t * dist).abs();
                ensure!(err < 1e-5, "proto seed {seed}: logit ({i},{k}) off by {err:.2e}");
                worst_proto = worst_proto.max(err);
            }
        }
    }

    let mut worst_svm = 0.0f64;
    let mut r = rng::rng(99);
    for trial in 0..100 {
        let support = Mat::from_fn(4, 3, |_, _| r.random_range(-1.0..1.0));
        let labels = [0, 0, 1, 1];
        let traj = svm_solve(&support, &labels, 2, 0.1, 500).unwrap();
        let targets = Mat::from_fn(4, 2, |i, k| if labels[i] == k { 1.0 } else { 0.0 });
        let obj = svm_dual_objective(&traj.gram, &targets, traj.alphas.last().unwrap());
        let oracle = two_way_dual_optimum(&support, &labels, 0.1);
        ensure!(
            (obj - oracle).abs() < 1e-3 && obj <= oracle + 1e-9,
            "svm trial {trial}: objective {obj} vs oracle {oracle}"
        );
        worst_svm = worst_svm.max((obj - oracle).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1}s");
    Ok(format!(
        "ridge {worst_ridge:.1e}, proto {worst_proto:.1e}, svm gap {worst_svm:.1e}, {secs:.1}s"
    ))
}

// ----------------------------------------------------------------- protocol

/// In-memory manifest: `classes x per_class` records, speakers round-robin.
pub fn toy_manifest(classes: usize, per_class: usize, speakers: usize) -> DatasetManifest {
    let records = (0..classes * per_class)
        .map(|i| UtteranceRecord {
            utterance_id: format!("u{i:05}"),
            speaker_id: format!("spk{:02}", i % speakers),
            label: format!("c{:02}", i / per_class),
            feature_path: format!("u{i:05}.fsfa").into(),
            n_frames: 1,
            feature_dim: 1,
        })
        .collect();
    DatasetManifest::from_records("toy.jsonl", records).unwrap()
}

fn check_split(manifest: &DatasetManifest, split: &SplitAssignment, label: &str) -> Result<(), String> {
    let mut class_sets: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); 3];
    let mut speaker_sets: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); 3];
    for s in Subset::ALL {
        for &r in &split.retained[s.index()] {
            let rec = &manifest.records[r];
            class_sets[s.index()].insert(&rec.label);
            speaker_sets[s.index()].insert(&rec.speaker_id);
            ensure!(split.class_split[&rec.label] == s, "{label}: record {r} retained outside its class subset");
        }
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        ensure!(class_sets[a].is_disjoint(&class_sets[b]), "{label}: class sets {a}/{b} overlap");
        if split.mode == SplitMode::NoSpo {
            ensure!(speaker_sets[a].is_disjoint(&speaker_sets[b]), "{label}: speaker sets {a}/{b} overlap");
        }
    }
    Ok(())
}

/// Goodness of fit for `trials` draws of `size` distinct items out of
/// `counts.len()`. Draws without replacement make the counts negatively
/// correlated, so the Pearson sum is rescaled by the exact covariance:
/// `sum (o - e)^2 (k - 1) / (k N p (1 - p))`, chi-square with `k - 1` df.
pub fn subset_chi_square(counts: &[usize], trials: usize, size: usize) -> f64 {
    let k = counts.len() as f64;
    let p = size as f64 / k;
    let e = trials as f64 * p;
    let ss: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2)).sum();
    ss * (k - 1.0) / (k * trials as f64 * p * (1.0 - p))
}

/// Split disjointness over 100 seeds, per-episode count and overlap checks
/// over 10,000 episodes, and chi-square uniformity of class and utterance
/// sampling.
pub fn protocol_suite() -> Outcome {
    let start = Instant::now();
    let manifest = toy_manifest(28, 40, 20);
    for seed in 0..100 {
        for (mode, ratios) in [
            (SplitMode::Spo, None),
            (SplitMode::NoSpo, None),
            (SplitMode::NoSpo, Some([0.5, 0.25, 0.25])),
        ] {
            let split = make_split(&manifest, SplitCounts::GOOGLE_COMMANDS, mode, seed, ratios).unwrap();
            check_split(&manifest, &split, &format!("seed {seed} {mode:?}"))?;
            let again = make_split(&manifest, SplitCounts::GOOGLE_COMMANDS, mode, seed, ratios).unwrap();
            ensure!(again.retained == split.retained, "seed {seed}: split not deterministic");
        }
    }

    // 10-class training pool for the uniformity checks
    let split = make_split(&manifest, SplitCounts::new(10, 9, 9), SplitMode::Spo, 3, None).unwrap();
    let spec = EpisodeSpec::new(5, 5, Subset::Train).with_query(5);
    let pool = split.pool(Subset::Train);
    let episodes = 10_000;
    let mut class_hits: BTreeMap<&str, usize> = BTreeMap::new();
    let mut record_hits: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..episodes {
        let ep = generate_episode(&split, &spec, &mut rng::stream(17, i)).unwrap();
        let names: BTreeSet<&str> = ep.class_names.iter().map(String::as_str).collect();
        ensure!(names.len() == 5, "episode {i}: repeated class");
        let mut per_class = [(0usize, 0usize); 5];
        for &(_, local) in &ep.support {
            per_class[local].0 += 1;
        }
        for &(_, local) in &ep.query {
            per_class[local].1 += 1;
        }
        ensure!(per_class.iter().all(|&c| c == (5, 5)), "episode {i}: per-class counts {per_class:?}");
        let support: BTreeSet<usize> = ep.support.iter().map(|p| p.0).collect();
        let query: BTreeSet<usize> = ep.query.iter().map(|p| p.0).collect();
        ensure!(support.len() == 25 && query.len() == 25, "episode {i}: repeated record");
        ensure!(support.is_disjoint(&query), "episode {i}: support and query overlap");
        for &(r, local) in ep.support.iter().chain(&ep.query) {
            ensure!(
                manifest.records[r].label == ep.class_names[local],
                "episode {i}: record {r} under the wrong class"
            );
            *record_hits.entry(r).or_default() += 1;
        }
        for name in &ep.class_names {
            *class_hits.entry(pool.iter().find(|(c, _)| c == name).map(|(c, _)| c.as_str()).unwrap()).or_default() += 1;
        }
    }
    ensure!(class_hits.len() == 10, "only {} classes sampled", class_hits.len());

    // each class appears with probability 1/2; the band covers all ten
    // classes jointly at 95%
    let per_class = 0.95f64.powf(1.0 / class_hits.len() as f64);
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.5 + per_class / 2.0);
    let half_width = z * (0.25f64 / episodes as f64).sqrt();
    for (c, &hits) in &class_hits {
        let p = hits as f64 / episodes as f64;
        ensure!((p - 0.5).abs() <= half_width, "class {c} in {p:.4} of episodes");
    }
    let chi2 = subset_chi_square(&class_hits.values().copied().collect::<Vec<_>>(), episodes as usize, 5);
    let p_class = 1.0 - ChiSquared::new(9.0).unwrap().cdf(chi2);
    ensure!(p_class > 1e-3, "class chi-square {chi2:.2}, p = {p_class:.2e}");

    // within a class every record is equally likely to be drawn
    let mut chi2_rec = 0.0;
    let mut df = 0.0;
    for (c, recs) in pool {
        let counts: Vec<usize> = recs.iter().map(|r| record_hits.get(r).copied().unwrap_or(0)).collect();
        let total: usize = counts.iter().sum();
        ensure!(total == class_hits[c.as_str()] * 10, "class {c}: {total} draws");
        chi2_rec += subset_chi_square(&counts, class_hits[c.as_str()], 10);
        df += (recs.len() - 1) as f64;
    }
    let p_rec = 1.0 - ChiSquared::new(df).unwrap().cdf(chi2_rec);
    ensure!(p_rec > 1e-3, "record chi-square {chi2_rec:.1} on {df} df, p = {p_rec:.2e}");

    Ok(format!(
        "300 splits disjoint, {episodes} episodes valid, class chi2 p={p_class:.3}, record chi2 p={p_rec:.3}, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

// ------------------------------------------------------- trained end-to-end

/// Corpus used by the end-to-end checks: 28 classes of 40 utterances with
/// 64-dimensional features.
pub fn e2e_spec(separation: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        feature_dim: 64,
        class_separation: separation,
        seed,
        ..Default::default()
    }
}

/// 18/5/5 classes, speakers split 50/25/25.
pub fn nospo_split(f: &Fixture, seed: u64) -> SplitAssignment {
    make_split(
        &f.manifest,
        SplitCounts::GOOGLE_COMMANDS,
        SplitMode::NoSpo,
        seed,
        Some([0.5, 0.25, 0.25]),
    )
    .unwrap()
}

/// 10 epochs of 200 5-way 15-shot episodes (5 queries per class).
pub fn e2e_train_config(kind: LearnerKind, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 10,
        episodes_per_epoch: 200,
        m_shot_train: 15,
        q_query_train: Some(5),
        learner: LearnerConfig::new(kind),
        seed,
        ..TrainConfig::default()
    }
}

pub struct EndToEnd {
    pub fixture: Fixture,
    pub split: SplitAssignment,
    pub models: BTreeMap<LearnerKind, Model>,
}

/// Trains one model per learner and scenario on the separation-3 corpus.
/// The 5-shot and 1-shot scenarios each select their checkpoint by
/// validation at their own shot count. The 5-shot models are returned.
pub fn end_to_end(seed: u64) -> (Outcome, Option<EndToEnd>) {
    let start = Instant::now();
    let fixture = fixture(&e2e_spec(3.0, seed));
    let split = nospo_split(&fixture, seed);
    let mut models = BTreeMap::new();
    let mut acc: BTreeMap<(LearnerKind, usize), f64> = BTreeMap::new();
    for kind in LearnerKind::ALL {
        for m in [5, 1] {
            let cfg = TrainConfig {
                val_m_shot: m,
                val_q_query: Some(5),
                ..e2e_train_config(kind, seed)
            };
            let out = run_training(&fixture.store, &split, &cfg, None).unwrap();
            let spec = EpisodeSpec::new(5, m, Subset::Test).with_query(5);
            let report = evaluate(
                &out.best.encoder,
                &out.best.learner_config(&cfg.learner),
                &split,
                &fixture.store,
                &spec,
                2000,
                seed,
                EvalOptions::default(),
            )
            .unwrap();
            acc.insert((kind, m), report.mean_accuracy);
            if m == 5 {
                models.insert(kind, out.best);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let summary = LearnerKind::ALL
        .iter()
        .map(|k| format!("{k} {:.3}/{:.3}", acc[&(*k, 5)], acc[&(*k, 1)]))
        .collect::<Vec<_>>()
        .join(", ");
    let mut failures = Vec::new();
    for kind in [LearnerKind::Proto, LearnerKind::Ridge] {
        if acc[&(kind, 5)] < 0.95 {
            failures.push(format!("{kind} 5-shot {:.4} < 0.95", acc[&(kind, 5)]));
        }
        if acc[&(kind, 1)] < 0.85 {
            failures.push(format!("{kind} 1-shot {:.4} < 0.85", acc[&(kind, 1)]));
        }
    }
    for m in [5, 1] {
        let gap = (acc[&(LearnerKind::Svm, m)] - acc[&(LearnerKind::Proto, m)]).abs();
        if gap > 0.05 {
            failures.push(format!("svm {m}-shot is {:.1} points from proto", 100.0 * gap));
        }
    }
    if secs >= 600.0 {
        failures.push(format!("took {secs:.0}s"));
    }
    let data = Some(EndToEnd { fixture, split, models });
    if failures.is_empty() {
        (Ok(format!("5-shot/1-shot accuracy: {summary}; {secs:.1}s")), data)
    } else {
        (Err(format!("{} ({summary})", failures.join("; "))), data)
    }
}

/// Accuracy of the meta-trained proto learner minus the m-shot supervised
/// baseline on the same test episodes of a separation-1 corpus.
pub fn ordering_gap(seed: u64, episodes: usize) -> (f64, f64) {
    let f = fixture(&e2e_spec(1.0, seed));
    let split = nospo_split(&f, seed);
    let cfg = e2e_train_config(LearnerKind::Proto, seed);
    let model = run_training(&f.store, &split, &cfg, None).unwrap().best;
    let lcfg = model.learner_config(&cfg.learner);
    let spec = EpisodeSpec::new(5, 5, Subset::Test).with_query(5);
    let bench = BenchConfig::default();
    let base = rng::derive(seed, 0x4F52_4452);
    let (mut meta, mut baseline) = (0.0, 0.0);
    for i in 0..episodes as u64 {
        let ep = generate_episode(&split, &spec, &mut rng::stream(base, i)).unwrap();
        let pred = episode_predictions(&model.encoder, &lcfg, &ep, &f.store).unwrap();
        let labels = ep.query_labels();
        meta += pred.iter().zip(&labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64;
        baseline +=
            bench_on_episode(&ep, &split, &f.store, &bench, BenchMode::Baseline, rng::derive(base, (1 << 32) + i))
                .unwrap();
    }
    (meta / episodes as f64, baseline / episodes as f64)
}

pub fn ordering_suite() -> Outcome {
    let start = Instant::now();
    let mut gaps = Vec::new();
    let mut lines = Vec::new();
    for seed in 0..5 {
        let (meta, base) = ordering_gap(seed, 100);
        gaps.push(meta - base);
        lines.push(format!("{:.0}", 100.0 * (meta - base)));
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let text = format!(
        "mean gap {:.1} points (per seed: {}), {:.1}s",
        100.0 * mean,
        lines.join(" "),
        start.elapsed().as_secs_f64()
    );
    ensure!(mean >= 0.15, "{text}");
    Ok(text)
}

/// Shuffled query labels put every learner inside the 99% binomial band
/// around 1/5, counted over all query predictions.
pub fn chance_suite(f: &Fixture, split: &SplitAssignment, models: &BTreeMap<LearnerKind, Model>) -> Outcome {
    let spec = EpisodeSpec::new(5, 5, Subset::Test).with_query(5);
    let episodes = 2000;
    let trials = (episodes * 25) as f64;
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.995);
    let band = z * (0.2 * 0.8 / trials).sqrt();
    let mut parts = Vec::new();
    for (kind, model) in models {
        let report = evaluate(
            &model.encoder,
            &model.learner_config(&LearnerConfig::new(*kind)),
            split,
            &f.store,
            &spec,
            episodes,
            23,
            EvalOptions {
                shuffle_query_labels: true,
                keep_per_episode: false,
            },
        )
        .unwrap();
        ensure!(
            (report.mean_accuracy - 0.2).abs() <= band,
            "{kind}: {:.4} outside 0.2 +- {band:.4}",
            report.mean_accuracy
        );
        parts.push(format!("{kind} {:.4}", report.mean_accuracy));
    }
    Ok(format!("{} (band 0.2 +- {band:.4})", parts.join(", ")))
}

/// Rows sum to one and the diagonal dominates on separable data.
pub fn confusion_suite(f: &Fixture, split: &SplitAssignment, model: &Model, episodes: usize) -> Outcome {
    let n = split.pool(Subset::Test).len();
    let spec = EpisodeSpec::new(n, 5, Subset::Test);
    let cm = confusion_matrix(
        &model.encoder,
        &model.learner_config(&LearnerConfig::new(LearnerKind::Proto)),
        split,
        &f.store,
        &spec,
        episodes,
        5,
    )
    .unwrap();
    let mut min_diag = 1.0f64;
    for (i, row) in cm.matrix.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        ensure!((sum - 1.0).abs() <= 1e-6, "row {i} sums to {sum}");
        min_diag = min_diag.min(row[i]);
    }
    ensure!(min_diag >= 0.9, "smallest diagonal entry {min_diag:.4}");
    Ok(format!("{n}x{n} over {episodes} episodes, smallest diagonal {min_diag:.4}"))
}

// -------------------------------------------------------------- determinism

fn strip_wall_clock(text: &str) -> Vec<serde_json::Value> {
    text.lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_ms");
            v
        })
        .collect()
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs `synth -> split -> train -> eval` through the command-line entry
/// point in `dir`.
pub fn cli_pipeline(dir: &Path) -> Result<(), String> {
    let d = |p: &str| dir.join(p).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--out".into(), d("data"), "--feature-dim".into(), "24".into()],
        vec![
            "split".into(),
            "--manifest".into(),
            d("data/manifest.jsonl"),
            "--out".into(),
            d("split.json"),
            "--mode".into(),
            "NoSPO".into(),
            "--speaker-ratios".into(),
            "0.5,0.25,0.25".into(),
        ],
        vec![
            "train".into(),
            "--split".into(),
            d("split.json"),
            "--out".into(),
            d("run"),
            "--learner".into(),
            "svm".into(),
            "--alpha".into(),
            "0.9".into(),
            "--epochs".into(),
            "2".into(),
            "--episodes-per-epoch".into(),
            "48".into(),
            "--train-q".into(),
            "5".into(),
            "--val-episodes".into(),
            "200".into(),
        ],
        vec![
            "eval".into(),
            "--split".into(),
            d("split.json"),
            "--ckpt".into(),
            d("run/best.ckpt"),
            "--learner".into(),
            "svm".into(),
            "--episodes".into(),
            "500".into(),
            "--per-episode".into(),
            "--out".into(),
            d("eval.json"),
        ],
    ];
    for step in steps {
        let mut args = vec!["fewshot".to_string(), "--seed".into(), "7".into()];
        args.extend(step.iter().cloned());
        let code = fewshot::cli::run(args);
        ensure!(code == 0, "`{}` exited with {code}", step.join(" "));
    }
    Ok(())
}

/// Two pipelines in different directories agree byte for byte on every file
/// except the wall-clock fields of the training log and summary, and the
/// manifest path recorded in the split file.
pub fn determinism_suite() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cli_pipeline(a.path())?;
    cli_pipeline(b.path())?;
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    ensure!(
        fa.keys().eq(fb.keys()),
        "different file sets: {:?} vs {:?}",
        fa.keys(),
        fb.keys()
    );
    let mut identical = 0;
    for (name, bytes) in &fa {
        let other = &fb[name];
        match name.as_str() {
            "split.json" => {
                let strip = |b: &[u8]| {
                    let mut v: serde_json::Value = serde_json::from_slice(b).unwrap();
                    v.as_object_mut().unwrap().remove("manifest");
                    v
                };
                ensure!(strip(bytes) == strip(other), "split files differ");
            }
            "run/train_log.jsonl" => {
                let (x, y) = (String::from_utf8_lossy(bytes), String::from_utf8_lossy(other));
                ensure!(strip_wall_clock(&x) == strip_wall_clock(&y), "training logs differ");
            }
            "run/train_summary.json" => {
                let strip = |b: &[u8]| {
                    let mut v: serde_json::Value = serde_json::from_slice(b).unwrap();
                    for e in v["log"].as_array_mut().unwrap() {
                        e.as_object_mut().unwrap().remove("wall_ms");
                    }
                    v
                };
                ensure!(strip(bytes) == strip(other), "training summaries differ");
            }
            _ => {
                ensure!(bytes == other, "{name} differs");
                identical += 1;
            }
        }
    }
    ensure!(fa.contains_key("run/best.ckpt") && fa.contains_key("eval.json"), "missing outputs");
    Ok(format!("{} files compared, {identical} byte-identical (incl. checkpoint and report)", fa.len()))
}
