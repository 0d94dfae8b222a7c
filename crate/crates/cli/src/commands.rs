//! The six pipeline commands. Each validates its inputs, runs the stages,
//! writes artifacts atomically, and finishes with a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use indexmap::IndexSet;

use v6forge_core::addr6::{
    load_seed_file, write_target_list, LoadMode, LoadStats, NybblePrefix, NybbleSeq, SeedSet,
};
use v6forge_core::evalkit::{
    allocate_budget, evaluate, oracle_from_file, random_baseline, render_eval_kv,
    render_eval_table, strip_seeds, synth_universe, GenerationReport, UniverseConfig,
};
use v6forge_core::seedclass::{
    classify_set, elbow, fingerprint_groups, group_by_prefix, kmeans, render_centroid,
    render_class_report, ClusterModel, DEFAULT_FP_END, DEFAULT_FP_START, DEFAULT_PREFIX_NYBBLES,
};
use v6forge_core::seeding::derive_seed;
use v6forge_core::vae6::{generate, load_params, save_params, train, LossBreakdown, TrainConfig};

use crate::artifacts::ArtifactWriter;
use crate::config::{ClassMode, ClusterK, PipelineConfig};
use crate::CliError;

fn require_path<'a>(
    path: &'a Option<std::path::PathBuf>,
    key: &str,
) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Config(format!("missing required config key {key:?}")))
}

fn load_seeds(path: &Path) -> Result<(SeedSet, LoadStats), CliError> {
    Ok(load_seed_file(path, LoadMode::Lenient)?)
}

fn address_bytes<I>(addrs: I) -> Vec<u8>
where
    I: IntoIterator<Item = NybbleSeq>,
{
    let mut out = Vec::new();
    write_target_list(&mut out, addrs).expect("writing to a Vec cannot fail");
    out
}

fn train_config(cfg: &PipelineConfig, stage: &str) -> TrainConfig {
    TrainConfig {
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        rng_seed: derive_seed(cfg.rng_seed, stage),
        patience: cfg.patience,
        latent_draws: cfg.latent_draws,
    }
}

fn losses_log(history: &[LossBreakdown]) -> String {
    let mut out = String::new();
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!(
            "epoch={} j_xent={:.6} j_kl={:.6} j_vae={:.6}\n",
            i + 1,
            l.j_xent,
            l.j_kl,
            l.j_vae
        ));
    }
    out
}

fn push_report_kv(kv: &mut String, label: &str, r: &GenerationReport) {
    kv.push_str(&format!(
        "{label}.n_sampled={}\n{label}.n_candidate={}\n{label}.n_hit={}\n{label}.n_new={}\n{label}.r_hit={}\n{label}.r_gen={}\n",
        r.n_sampled,
        r.n_candidate,
        r.n_hit,
        r.n_new,
        r.r_hit_percent(),
        r.r_gen_percent()
    ));
}

pub fn cmd_classify(cfg: &PipelineConfig, out_dir: &Path) -> Result<(), CliError> {
    let seeds_path = require_path(&cfg.seeds, "seeds")?;
    let mut w = ArtifactWriter::new(out_dir)?;
    let (seeds, stats) = w.time("load", || load_seeds(seeds_path))?;
    let split = w.time("classify", || classify_set(&seeds));

    let mut counts = BTreeMap::new();
    for (label, set) in &split {
        counts.insert(*label, set.len());
        w.write(
            &format!("class-{}.txt", label.name()),
            &address_bytes(set.iter().copied()),
        )?;
    }
    let report = render_class_report(&counts);
    w.write("class-report.txt", report.as_bytes())?;

    let total: usize = counts.values().sum();
    let mut kv = String::new();
    for (label, count) in &counts {
        let pct = if total == 0 {
            0.0
        } else {
            100.0 * *count as f64 / total as f64
        };
        kv.push_str(&format!("count.{}={}\n", label.name(), count));
        kv.push_str(&format!("pct.{}={:.2}\n", label.name(), pct));
    }
    kv.push_str(&format!("total={total}\nmalformed={}\n", stats.malformed));
    w.write("class-report.kv", kv.as_bytes())?;

    w.finish("classify", &cfg.snapshot())?;
    print!("{report}");
    Ok(())
}

pub fn cmd_cluster(cfg: &PipelineConfig, out_dir: &Path) -> Result<(), CliError> {
    let seeds_path = require_path(&cfg.seeds, "seeds")?;
    let mut w = ArtifactWriter::new(out_dir)?;
    let (seeds, _) = w.time("load", || load_seeds(seeds_path))?;

    let groups = group_by_prefix(&seeds, DEFAULT_PREFIX_NYBBLES);
    let (fps, pool) = fingerprint_groups(
        &seeds,
        DEFAULT_PREFIX_NYBBLES,
        DEFAULT_FP_START,
        DEFAULT_FP_END,
        cfg.min_group,
    )?;
    if fps.is_empty() {
        return Err(CliError::Config(format!(
            "no prefix group reaches min_group={}",
            cfg.min_group
        )));
    }

    let rng_seed = derive_seed(cfg.rng_seed, "cluster");
    let (model, curve): (ClusterModel, Option<Vec<f64>>) = match cfg.cluster_k {
        ClusterK::Fixed(k) => (w.time("kmeans", || kmeans(&fps, k, rng_seed))?, None),
        ClusterK::Auto => {
            let result = w.time("elbow", || elbow(&fps, cfg.cluster_kmax, rng_seed))?;
            let model = result.models[result.chosen_k - 1].clone();
            (model, Some(result.sse_curve))
        }
    };

    let mut clusters: Vec<SeedSet> = (0..model.k)
        .map(|i| SeedSet::new(format!("cluster-{i}")))
        .collect();
    for (fp, &assigned) in fps.iter().zip(&model.assignments) {
        for seq in groups[&fp.prefix].iter() {
            clusters[assigned].insert(*seq);
        }
    }
    for (i, set) in clusters.iter().enumerate() {
        w.write(
            &format!("cluster-{i}.txt"),
            &address_bytes(set.iter().copied()),
        )?;
    }
    w.write(
        "cluster-unassigned.txt",
        &address_bytes(pool.iter().copied()),
    )?;

    let mut sse_txt = String::new();
    match &curve {
        Some(curve) => {
            for (i, sse) in curve.iter().enumerate() {
                sse_txt.push_str(&format!("k={} sse={:.6}\n", i + 1, sse));
            }
        }
        None => sse_txt.push_str(&format!("k={} sse={:.6}\n", model.k, model.sse)),
    }
    w.write("sse-curve.txt", sse_txt.as_bytes())?;

    let mut centroid_txt = String::new();
    for centroid in &model.centroids {
        centroid_txt.push_str(&render_centroid(centroid));
        centroid_txt.push('\n');
    }
    w.write("centroids.txt", centroid_txt.as_bytes())?;

    let mut kv = format!(
        "k={}\nsse={:.6}\ngroups={}\nunassigned={}\n",
        model.k,
        model.sse,
        fps.len(),
        pool.len()
    );
    for (i, set) in clusters.iter().enumerate() {
        kv.push_str(&format!("cluster.{i}.addresses={}\n", set.len()));
    }
    w.write("cluster-report.kv", kv.as_bytes())?;

    w.finish("cluster", &cfg.snapshot())?;
    println!(
        "k={} sse={:.6} groups={} unassigned={}",
        model.k,
        model.sse,
        fps.len(),
        pool.len()
    );
    Ok(())
}

pub fn cmd_train(cfg: &PipelineConfig, out_dir: &Path) -> Result<(), CliError> {
    let seeds_path = require_path(&cfg.seeds, "seeds")?;
    let mut w = ArtifactWriter::new(out_dir)?;
    let (seeds, _) = w.time("load", || load_seeds(seeds_path))?;

    let tcfg = train_config(cfg, "train");
    let (params, history) = w.time("train", || train(&seeds, &tcfg))?;

    w.write("model.bin", &save_params(&params))?;
    w.write("losses.txt", losses_log(&history).as_bytes())?;

    let mut kv = format!(
        "seeds={}\nepochs_run={}\nparameters={}\n",
        seeds.len(),
        history.len(),
        params.param_count()
    );
    if let Some(last) = history.last() {
        kv.push_str(&format!(
            "final.j_xent={:.6}\nfinal.j_kl={:.6}\nfinal.j_vae={:.6}\n",
            last.j_xent, last.j_kl, last.j_vae
        ));
    }
    w.write("train-report.kv", kv.as_bytes())?;

    w.finish("train", &cfg.snapshot())?;
    if let Some(last) = history.last() {
        println!(
            "trained {} epochs on {} seeds: j_xent={:.4} j_kl={:.4} j_vae={:.4}",
            history.len(),
            seeds.len(),
            last.j_xent,
            last.j_kl,
            last.j_vae
        );
    } else {
        println!("initialized model without training (epochs=0)");
    }
    Ok(())
}

pub fn cmd_generate(cfg: &PipelineConfig, out_dir: &Path) -> Result<(), CliError> {
    let model_path = require_path(&cfg.model, "model")?;
    let mut w = ArtifactWriter::new(out_dir)?;
    let bytes = std::fs::read(model_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", model_path.display())))?;
    let params = load_params(&bytes)?;

    let candidates = w.time("generate", || {
        generate(&params, cfg.generate_n, derive_seed(cfg.rng_seed, "generate"))
    })?;
    let n_generated = candidates.len();
    let written = if cfg.exclude_seeds {
        let (seeds, _) = load_seeds(require_path(&cfg.seeds, "seeds")?)?;
        strip_seeds(&candidates, &seeds)
    } else {
        candidates
    };

    w.write("candidates.txt", &address_bytes(written.iter().copied()))?;
    let kv = format!(
        "n_sampled={}\nn_generated={}\nn_candidate={}\nexcluded={}\n",
        cfg.generate_n,
        n_generated,
        written.len(),
        n_generated - written.len()
    );
    w.write("generate-report.kv", kv.as_bytes())?;

    w.finish("generate", &cfg.snapshot())?;
    println!(
        "{} draws gave {} candidates ({} written)",
        cfg.generate_n,
        n_generated,
        written.len()
    );
    Ok(())
}

pub fn cmd_evaluate(cfg: &PipelineConfig, out_dir: &Path) -> Result<(), CliError> {
    let cand_path = require_path(&cfg.candidates, "candidates")?;
    let seeds_path = require_path(&cfg.seeds, "seeds")?;
    let oracle_path = require_path(&cfg.oracle, "oracle")?;
    let mut w = ArtifactWriter::new(out_dir)?;

    let (cand_set, _) = w.time("load", || load_seeds(cand_path))?;
    let candidates: Vec<NybbleSeq> = cand_set.iter().copied().collect();
    let (seeds, _) = load_seeds(seeds_path)?;
    let oracle = oracle_from_file(oracle_path)?;

    let n_sampled = cfg.n_sampled.unwrap_or(candidates.len());
    let report = w.time("evaluate", || evaluate(&candidates, &seeds, &oracle, n_sampled))?;

    let table = render_eval_table(&[("candidates".to_string(), report.clone())]);
    w.write("eval-report.txt", table.as_bytes())?;
    w.write("eval-report.kv", render_eval_kv(&report).as_bytes())?;

    w.finish("evaluate", &cfg.snapshot())?;
    print!("{table}");
    Ok(())
}

/// Splits the seed set into training categories for the budgeted arm.
fn categories(
    cfg: &PipelineConfig,
    seeds: &SeedSet,
) -> Result<Vec<(String, SeedSet)>, CliError> {
    match cfg.mode {
        ClassMode::None => Ok(Vec::new()),
        ClassMode::Manual => Ok(classify_set(seeds)
            .into_iter()
            .filter(|(_, set)| !set.is_empty())
            .map(|(label, set)| (label.name().to_string(), set))
            .collect()),
        ClassMode::Cluster => {
            let groups = group_by_prefix(seeds, DEFAULT_PREFIX_NYBBLES);
            let (fps, pool) = fingerprint_groups(
                seeds,
                DEFAULT_PREFIX_NYBBLES,
                DEFAULT_FP_START,
                DEFAULT_FP_END,
                cfg.min_group,
            )?;
            if fps.is_empty() {
                return Err(CliError::Config(format!(
                    "no prefix group reaches min_group={}",
                    cfg.min_group
                )));
            }
            let rng_seed = derive_seed(cfg.rng_seed, "cluster");
            let model = match cfg.cluster_k {
                ClusterK::Fixed(k) => kmeans(&fps, k, rng_seed)?,
                ClusterK::Auto => {
                    let result = elbow(&fps, cfg.cluster_kmax, rng_seed)?;
                    result.models[result.chosen_k - 1].clone()
                }
            };
            let mut sets: Vec<SeedSet> = (0..model.k)
                .map(|i| SeedSet::new(format!("cluster-{i}")))
                .collect();
            for (fp, &assigned) in fps.iter().zip(&model.assignments) {
                for seq in groups[&fp.prefix].iter() {
                    sets[assigned].insert(*seq);
                }
            }
            let mut out: Vec<(String, SeedSet)> = sets
                .into_iter()
                .enumerate()
                .filter(|(_, set)| !set.is_empty())
                .map(|(i, set)| (format!("cluster-{i}"), set))
                .collect();
            if !pool.is_empty() {
                out.push(("cluster-unassigned".to_string(), pool));
            }
            Ok(out)
        }
    }
}

fn format_factor(model: f64, baseline: f64) -> String {
    if baseline == 0.0 {
        if model > 0.0 {
            "inf".to_string()
        } else {
            "nan".to_string()
        }
    } else {
        format!("{:.2}", model / baseline)
    }
}

pub fn cmd_bench(cfg: &PipelineConfig, out_dir: &Path) -> Result<(), CliError> {
    let mut w = ArtifactWriter::new(out_dir)?;
    let ucfg = UniverseConfig {
        rng_seed: derive_seed(cfg.rng_seed, "universe"),
        fixed_iid: cfg.universe_fixed_iid,
        low64_subnet: cfg.universe_low64_subnet,
        slaac_eui64: cfg.universe_slaac_eui64,
        slaac_privacy: cfg.universe_slaac_privacy,
        seed_sample: cfg.universe_seed_sample,
    };
    let (oracle, seeds) = w.time("universe", || synth_universe(&ucfg))?;
    w.write(
        "universe-actives.txt",
        &address_bytes(oracle.members().copied()),
    )?;
    w.write("universe-seeds.txt", &address_bytes(seeds.iter().copied()))?;

    let mut rows: Vec<(String, GenerationReport)> = Vec::new();
    let mut kv = String::new();

    let tcfg = train_config(cfg, "train-unclassified");
    let (params, history) = w.time("train-unclassified", || train(&seeds, &tcfg))?;
    kv.push_str(&format!("unclassified.epochs_run={}\n", history.len()));
    let cands = w.time("generate-unclassified", || {
        generate(
            &params,
            cfg.generate_n,
            derive_seed(cfg.rng_seed, "generate-unclassified"),
        )
    })?;
    let report = evaluate(&cands, &seeds, &oracle, cfg.generate_n)?;
    w.write(
        "bench-candidates-unclassified.txt",
        &address_bytes(cands.iter().copied()),
    )?;
    rows.push(("unclassified".to_string(), report));

    if cfg.budget && cfg.mode != ClassMode::None {
        let cats = w.time("categorize", || categories(cfg, &seeds))?;
        let mut trained = Vec::new();
        for (label, subset) in &cats {
            let tcfg = train_config(cfg, &format!("train-{label}"));
            let (p, _) = w.time(&format!("train-{label}"), || train(subset, &tcfg))?;
            let probe = w.time(&format!("probe-{label}"), || {
                generate(
                    &p,
                    cfg.probe_n,
                    derive_seed(cfg.rng_seed, &format!("probe-{label}")),
                )
            })?;
            let probe_report = evaluate(&probe, &seeds, &oracle, cfg.probe_n)?;
            kv.push_str(&format!(
                "category.{label}.seeds={}\ncategory.{label}.probe_r_gen={}\n",
                subset.len(),
                probe_report.r_gen_percent()
            ));
            trained.push((label.clone(), p, probe_report.r_gen));
        }
        let rates: Vec<(String, f64)> = trained
            .iter()
            .map(|(label, _, r_gen)| (label.clone(), *r_gen))
            .collect();
        let budget = allocate_budget(&rates, cfg.generate_n)?;
        let mut combined: IndexSet<NybbleSeq> = IndexSet::new();
        for ((label, params, _), (_, draws)) in trained.iter().zip(&budget) {
            kv.push_str(&format!("category.{label}.draws={draws}\n"));
            if *draws == 0 {
                continue;
            }
            let c = w.time(&format!("generate-{label}"), || {
                generate(
                    params,
                    *draws,
                    derive_seed(cfg.rng_seed, &format!("generate-{label}")),
                )
            })?;
            combined.extend(c);
        }
        let cands: Vec<NybbleSeq> = combined.into_iter().collect();
        let report = evaluate(&cands, &seeds, &oracle, cfg.generate_n)?;
        w.write(
            "bench-candidates-per-category.txt",
            &address_bytes(cands.iter().copied()),
        )?;
        rows.push(("per-category".to_string(), report));
    }

    let prefixes: BTreeSet<NybblePrefix> = seeds
        .iter()
        .map(|s| s.prefix(DEFAULT_PREFIX_NYBBLES))
        .collect();
    let pool: Vec<NybblePrefix> = prefixes.into_iter().collect();
    let cands = w.time("baseline", || {
        random_baseline(cfg.generate_n, &pool, derive_seed(cfg.rng_seed, "baseline"))
    });
    let report = evaluate(&cands, &seeds, &oracle, cfg.generate_n)?;
    w.write(
        "bench-candidates-random.txt",
        &address_bytes(cands.iter().copied()),
    )?;
    rows.push(("random".to_string(), report));

    let random_r_gen = rows.last().unwrap().1.r_gen;
    for (label, r) in &rows {
        if label != "random" {
            kv.push_str(&format!(
                "factor.{label}={}\n",
                format_factor(r.r_gen, random_r_gen)
            ));
        }
    }
    for (label, r) in &rows {
        push_report_kv(&mut kv, label, r);
    }

    let table = render_eval_table(&rows);
    w.write("bench-report.txt", table.as_bytes())?;
    w.write("bench-report.kv", kv.as_bytes())?;

    w.finish("bench", &cfg.snapshot())?;
    print!("{table}");
    Ok(())
}
