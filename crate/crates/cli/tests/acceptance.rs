//! Release gate: ten numbered end-to-end checks. Each one prints a single
//! pass/fail line; the test fails if any check fails. Checks 1..8 exercise
//! the library directly, 9 and 10 drive the installed binary against the
//! synthetic benchmark universe.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use v6forge_core::addr6::{encode_onehot, NybbleSeq, SeedSet};
use v6forge_core::evalkit::{evaluate, synth_universe, ActivityOracle, UniverseConfig};
use v6forge_core::neuralcore::{
    finite_diff_check, gated_conv_forward, glorot_uniform, GatedConvParams, Tape, Tensor2,
};
use v6forge_core::seedclass::{
    classify_set, column_entropy, elbow, fingerprint_groups, kmeans, SchemeLabel,
};
use v6forge_core::vae6::{
    build_batch_loss, decode, encode, generate, train, ModelShape, TrainConfig, VaeParams,
};

#[test]
fn acceptance() {
    let bench: RefCell<Option<BenchRun>> = RefCell::new(None);
    type Check<'a> = (&'static str, Box<dyn FnOnce() + 'a>);
    let checks: Vec<Check> = vec![
        ("full-scale rate arithmetic", Box::new(check_rates)),
        (
            "analytic gradient matches finite differences",
            Box::new(check_gradient),
        ),
        (
            "gated convolution matches the hand reference",
            Box::new(check_gated_conv),
        ),
        (
            "divergence nonnegativity and closed-form points",
            Box::new(check_divergence),
        ),
        (
            "column entropy matches brute force",
            Box::new(check_entropy),
        ),
        (
            "scheme classifier recovers a synthetic corpus",
            Box::new(check_classifier),
        ),
        (
            "k-means descent, elbow choice, and determinism",
            Box::new(check_clustering),
        ),
        (
            "single-seed memorization and emission",
            Box::new(check_overfit),
        ),
        (
            "trained models beat random search end to end",
            Box::new(|| check_bench(&bench)),
        ),
        (
            "benchmark reruns are byte-identical",
            Box::new(|| check_rerun(&bench)),
        ),
    ];

    let mut failures = Vec::new();
    for (i, (name, run)) in checks.into_iter().enumerate() {
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(()) => println!("[PASS] {:02} {name}", i + 1),
            Err(cause) => {
                println!("[FAIL] {:02} {name}: {}", i + 1, panic_message(&cause));
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed checks: {failures:?}");
}

fn panic_message(cause: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = cause.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = cause.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".into()
    }
}

/// Address whose low 8 nybbles spell `i` in hex; unique per `i`.
fn counter_addr(i: usize) -> NybbleSeq {
    let mut sym = [0u8; 32];
    sym[0] = 2;
    for (j, s) in sym[24..].iter_mut().enumerate() {
        *s = ((i >> (4 * (7 - j))) & 0xf) as u8;
    }
    NybbleSeq::new(sym).unwrap()
}

/// Scoring a fixed large candidate list reproduces the reference hit and
/// discovery rates exactly as formatted percentages, in under ten seconds.
fn check_rates() {
    const N_SAMPLED: usize = 1_000_000;
    const N_CANDIDATE: usize = 756_658;
    const N_HIT: usize = 14_894;
    const N_NEW: usize = 9_685;

    let started = Instant::now();
    let candidates: Vec<NybbleSeq> = (0..N_CANDIDATE).map(counter_addr).collect();
    let oracle = ActivityOracle::from_members(candidates[..N_HIT].iter().copied(), "fixture");
    let seeds: SeedSet = candidates[..N_HIT - N_NEW].iter().copied().collect();

    let report = evaluate(&candidates, &seeds, &oracle, N_SAMPLED).unwrap();
    assert_eq!(report.n_candidate, N_CANDIDATE);
    assert_eq!(report.n_hit, N_HIT);
    assert_eq!(report.n_new, N_NEW);
    assert_eq!(report.r_hit_percent(), "1.97%");
    assert_eq!(report.r_gen_percent(), "1.28%");

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
}

/// On a sub-500-parameter model with every tensor randomized, the taped
/// gradient of the full objective agrees with central finite differences to
/// a relative error below 1e-4, in under a minute.
fn check_gradient() {
    let started = Instant::now();
    let shape = ModelShape::reduced();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut params = VaeParams::<f64>::zeros(shape).unwrap();
    for t in params.tensors_mut() {
        let (r, c) = t.shape();
        *t = glorot_uniform::<f64, _>(r, c, &mut rng);
    }
    assert!(params.param_count() <= 500, "{}", params.param_count());

    let batch: Vec<(Tensor2<f64>, Tensor2<f64>)> = (0..2)
        .map(|_| {
            let mut x = Tensor2::zeros(shape.seq_len, shape.alphabet);
            for r in 0..shape.seq_len {
                let hot = rng.random_range(0..shape.alphabet);
                x.set(r, hot, 1.0);
            }
            let eps = glorot_uniform::<f64, _>(1, shape.latent, &mut rng);
            (x, eps)
        })
        .collect();

    let report = finite_diff_check(
        &|tape, vars| build_batch_loss(tape, vars, shape, &batch),
        params.tensors(),
        1e-4,
        1e-4,
    )
    .unwrap();
    assert!(
        report.passed && report.max_rel_error < 1e-4,
        "max rel error {} at {:?}",
        report.max_rel_error,
        report.worst_coordinate
    );

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
}

/// Independent loop-level reimplementation of the gated layer: width-3
/// zero-padded convolution, bias, halves A and B, then A * sigmoid(B).
fn hand_gated_conv(p: &GatedConvParams<f64>, x: &Tensor2<f64>) -> Tensor2<f64> {
    let (rows, cin) = x.shape();
    let g = p.gate_channels();
    let mut out = Tensor2::zeros(rows, g);
    for r in 0..rows {
        for o in 0..g {
            let mut a = p.bias.get(0, o);
            let mut b = p.bias.get(0, g + o);
            for (t, off) in [-1isize, 0, 1].into_iter().enumerate() {
                let src = r as isize + off;
                if src < 0 || src >= rows as isize {
                    continue;
                }
                for c in 0..cin {
                    let xv = x.get(src as usize, c);
                    a += xv * p.kernels.get(t * cin + c, o);
                    b += xv * p.kernels.get(t * cin + c, g + o);
                }
            }
            out.set(r, o, a / (1.0 + (-b).exp()));
        }
    }
    out
}

fn check_gated_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p = GatedConvParams::<f64>::zeros(16, 32);
    p.kernels = glorot_uniform(48, 64, &mut rng);
    p.bias = glorot_uniform(1, 64, &mut rng);

    for _ in 0..2 {
        let x = glorot_uniform::<f64, _>(32, 16, &mut rng);
        let got = gated_conv_forward(&p, &x).unwrap();
        let want = hand_gated_conv(&p, &x);
        assert_eq!(got.shape(), want.shape());
        let worst = got
            .data()
            .iter()
            .zip(want.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-6, "max deviation {worst}");
    }
}

fn kl_scalar(mu: &[f64], log_var: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let m = tape.leaf(Tensor2::new(1, mu.len(), mu.to_vec()).unwrap());
    let v = tape.leaf(Tensor2::new(1, log_var.len(), log_var.to_vec()).unwrap());
    let kl = tape.kl_sum(m, v).unwrap();
    tape.scalar(kl).unwrap()
}

/// The divergence term is nonnegative over random probes, exactly zero at
/// the standard normal, and exactly one half for a single unit-mean
/// coordinate.
fn check_divergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10_000 {
        let mu: Vec<f64> = (0..16).map(|_| rng.random_range(-4.0..4.0)).collect();
        let lv: Vec<f64> = (0..16).map(|_| rng.random_range(-4.0..4.0)).collect();
        let v = kl_scalar(&mu, &lv);
        assert!(v >= 0.0, "negative divergence {v}");
    }
    assert_eq!(kl_scalar(&[0.0; 16], &[0.0; 16]), 0.0);
    assert_eq!(kl_scalar(&[1.0], &[0.0]), 0.5);
}

fn brute_force_entropy(set: &SeedSet, position: usize) -> f64 {
    let mut counts = [0usize; 16];
    for seq in set.iter() {
        counts[seq.symbols()[position] as usize] += 1;
    }
    let n = set.len() as f64;
    let mut nats = 0.0;
    for c in counts.into_iter().filter(|&c| c > 0) {
        let p = c as f64 / n;
        nats -= p * p.ln();
    }
    (nats / std::f64::consts::LN_2 / 4.0).clamp(0.0, 1.0)
}

fn check_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let n = rng.random_range(4..=48);
        let set: SeedSet = (0..n)
            .map(|_| {
                let mut sym = [0u8; 32];
                for s in &mut sym {
                    *s = rng.random_range(0..16u8);
                }
                NybbleSeq::new(sym).unwrap()
            })
            .collect();
        let position = rng.random_range(0..32);
        let got = column_entropy(&set, position).unwrap();
        let want = brute_force_entropy(&set, position);
        assert!((got - want).abs() <= 1e-9, "{got} vs {want} at {position}");
    }

    let constant: SeedSet = (0..20usize).map(counter_addr).collect();
    assert_eq!(column_entropy(&constant, 1).unwrap(), 0.0);

    let uniform: SeedSet = (0..16u8)
        .map(|i| {
            let mut sym = [0u8; 32];
            sym[0] = i;
            NybbleSeq::new(sym).unwrap()
        })
        .collect();
    let top = column_entropy(&uniform, 0).unwrap();
    assert!((top - 1.0).abs() <= 1e-12, "uniform column gave {top}");
}

/// A four-scheme synthetic corpus with one thousand addresses per scheme is
/// classified back to its construction labels without a single miss.
fn check_classifier() {
    let cfg = UniverseConfig {
        rng_seed: 21,
        fixed_iid: 1000,
        low64_subnet: 1000,
        slaac_eui64: 1000,
        slaac_privacy: 1000,
        seed_sample: 4000,
    };
    let (oracle, seeds) = synth_universe(&cfg).unwrap();
    assert_eq!(oracle.len(), 4000);
    assert_eq!(seeds.len(), 4000);

    let by_label = classify_set(&seeds);
    assert_eq!(by_label[&SchemeLabel::FixedIid].len(), 1000);
    assert_eq!(by_label[&SchemeLabel::Low64Subnet].len(), 1000);
    assert_eq!(by_label[&SchemeLabel::SlaacEui64].len(), 1000);
    assert_eq!(by_label[&SchemeLabel::SlaacPrivacy].len(), 1000);
    assert!(by_label[&SchemeLabel::Other].is_empty());
}

/// Three regimes, each uniformly random at a different nybble position, so
/// the per-prefix fingerprints form three mutually equidistant blobs.
fn regime_fingerprints() -> Vec<v6forge_core::seedclass::EntropyFingerprint> {
    let hot = [16usize, 22, 28];
    let mut all = SeedSet::new("fixture");
    for (t, &h) in hot.iter().enumerate() {
        for p in 0..6u8 {
            for i in 0..16u8 {
                let mut sym = [0u8; 32];
                sym[0] = 0xf;
                sym[1] = 0xd;
                sym[2] = t as u8;
                sym[3] = p;
                sym[31] = 1;
                sym[h] = i;
                all.insert(NybbleSeq::new(sym).unwrap());
            }
        }
    }
    let (fps, pool) = fingerprint_groups(&all, 8, 8, 32, 10).unwrap();
    assert!(pool.is_empty());
    assert_eq!(fps.len(), 18);
    fps
}

fn check_clustering() {
    let fps = regime_fingerprints();

    let picked = elbow(&fps, 8, 29).unwrap();
    assert_eq!(picked.chosen_k, 3, "curve {:?}", picked.sse_curve);
    for model in picked.models.iter().chain([&kmeans(&fps, 3, 29).unwrap()]) {
        for w in model.sse_per_iter.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "SSE rose: {:?}", model.sse_per_iter);
        }
    }

    for seed in [0u64, 29, 1234] {
        let a = kmeans(&fps, 3, seed).unwrap();
        let b = kmeans(&fps, 3, seed).unwrap();
        assert_eq!(a, b, "seed {seed} not reproducible");
    }
}

/// Training on one repeated seed within a 500-step budget memorizes it: the
/// posterior mean decodes back to the seed and prior sampling emits exactly
/// that one candidate.
fn check_overfit() {
    let seed_addr: NybbleSeq = "20010db8002000030000000000000301".parse().unwrap();
    let seeds: SeedSet = [seed_addr].into_iter().collect();
    let cfg = TrainConfig {
        batch_size: 1,
        epochs: 500,
        learning_rate: 1e-2,
        rng_seed: 4,
        patience: None,
        latent_draws: 16,
    };
    let (params, history) = train(&seeds, &cfg).unwrap();
    assert!(history.len() <= 500);

    let (mu, _) = encode(&params, &encode_onehot(&seed_addr)).unwrap();
    let y = decode(&params, &mu).unwrap();
    let decoded: Vec<u8> = (0..32).map(|r| y.argmax_row(r) as u8).collect();
    assert_eq!(decoded.as_slice(), seed_addr.symbols());

    assert_eq!(generate(&params, 64, 12).unwrap(), vec![seed_addr]);
}

struct BenchRun {
    config: PathBuf,
    first_out: PathBuf,
    _dir: tempfile::TempDir,
}

const BENCH_CONFIG: &str = "mode = manual\n\
budget = true\n\
epochs = 30\n\
batch_size = 128\n\
learning_rate = 0.001\n\
latent_draws = 1\n\
generate_n = 50000\n\
probe_n = 10000\n\
universe_fixed_iid = 16384\n\
universe_low64_subnet = 16384\n\
universe_slaac_eui64 = 16384\n\
universe_slaac_privacy = 16384\n\
universe_seed_sample = 5000\n\
rng_seed = 0\n";

fn run_bench(config: &Path, out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_v6forge"))
        .arg("bench")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .status()
        .expect("spawn pipeline binary");
    assert!(status.success(), "bench exited with {status}");
}

fn read_kv(path: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(path)
        .expect("read report")
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (k, v) = l.split_once('=').expect("key=value line");
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn kv_usize(kv: &BTreeMap<String, String>, key: &str) -> usize {
    kv.get(key)
        .unwrap_or_else(|| panic!("missing key {key}"))
        .parse()
        .unwrap_or_else(|_| panic!("non-numeric value for {key}"))
}

/// Full benchmark: a 65,536-address universe, 5,000 seeds, 50,000 draws per
/// arm. Both trained arms must discover new actives at no less than five
/// times the random-search rate, category-budgeted generation must find at
/// least as many new actives as the undivided model, and the run must fit
/// the wall-clock budget.
fn check_bench(bench: &RefCell<Option<BenchRun>>) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.conf");
    fs::write(&config, BENCH_CONFIG).unwrap();
    let out = dir.path().join("run1");

    let started = Instant::now();
    run_bench(&config, &out);
    let elapsed = started.elapsed();

    let kv = read_kv(&out.join("bench-report.kv"));
    let plain_new = kv_usize(&kv, "unclassified.n_new");
    let plain_cand = kv_usize(&kv, "unclassified.n_candidate");
    let budget_new = kv_usize(&kv, "per-category.n_new");
    let budget_cand = kv_usize(&kv, "per-category.n_candidate");
    let random_new = kv_usize(&kv, "random.n_new");
    let random_cand = kv_usize(&kv, "random.n_candidate");

    let r_plain = plain_new as f64 / plain_cand as f64;
    let r_budget = budget_new as f64 / budget_cand as f64;
    let r_random = random_new as f64 / random_cand as f64;
    assert!(
        r_plain > 0.0 && r_plain >= 5.0 * r_random,
        "plain {r_plain:.4} vs random {r_random:.4}"
    );
    assert!(
        r_budget > 0.0 && r_budget >= 5.0 * r_random,
        "budgeted {r_budget:.4} vs random {r_random:.4}"
    );
    assert!(
        budget_new >= plain_new,
        "budgeted discoveries {budget_new} below undivided {plain_new}"
    );
    assert!(elapsed < Duration::from_secs(900), "took {elapsed:?}");

    *bench.borrow_mut() = Some(BenchRun {
        config,
        first_out: out,
        _dir: dir,
    });
}

/// A second run from the same config must rewrite the manifest and both
/// report files byte for byte; manifest equality also pins the digest of
/// every other artifact.
fn check_rerun(bench: &RefCell<Option<BenchRun>>) {
    let guard = bench.borrow();
    let run = guard.as_ref().expect("first benchmark run unavailable");
    let out2 = run._dir.path().join("run2");
    run_bench(&run.config, &out2);

    for name in ["manifest.txt", "bench-report.txt", "bench-report.kv"] {
        let a = fs::read(run.first_out.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}
