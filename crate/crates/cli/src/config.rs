//! Flat `key=value` run configuration with include chaining.
//!
//! Lines are `key = value`; blank lines and `#` comments are skipped. An
//! `include = <path>` line splices another file in place (relative paths
//! resolve against the including file), so a run config can start from a
//! defaults file and override individual keys: the last assignment wins.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

const MAX_INCLUDE_DEPTH: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// How seeds are partitioned before per-category training in `bench`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassMode {
    None,
    Manual,
    Cluster,
}

impl ClassMode {
    pub fn name(self) -> &'static str {
        match self {
            ClassMode::None => "none",
            ClassMode::Manual => "manual",
            ClassMode::Cluster => "cluster",
        }
    }
}

/// Cluster count: fixed, or chosen by the elbow rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterK {
    Auto,
    Fixed(usize),
}

/// Everything a pipeline run needs, resolved from the config file plus the
/// `--seed` override.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Seed-address file (classify, cluster, train, evaluate).
    pub seeds: Option<PathBuf>,
    /// Model file (generate input; train writes `model.bin` to the out dir).
    pub model: Option<PathBuf>,
    /// Candidate-address file (evaluate input).
    pub candidates: Option<PathBuf>,
    /// Active-address file backing the evaluation oracle.
    pub oracle: Option<PathBuf>,
    pub mode: ClassMode,
    /// Smallest /32 group that gets its own fingerprint.
    pub min_group: usize,
    pub cluster_k: ClusterK,
    pub cluster_kmax: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub patience: Option<usize>,
    pub latent_draws: usize,
    /// Generator draws for `generate` and per arm in `bench`.
    pub generate_n: usize,
    /// Drop candidates already in the seed set before writing them.
    pub exclude_seeds: bool,
    /// Draw count reported to `evaluate`; defaults to the candidate count.
    pub n_sampled: Option<usize>,
    /// Run the per-category budgeted arm in `bench`.
    pub budget: bool,
    /// Rate-estimation draws per category in `bench`.
    pub probe_n: usize,
    pub universe_fixed_iid: usize,
    pub universe_low64_subnet: usize,
    pub universe_slaac_eui64: usize,
    pub universe_slaac_privacy: usize,
    pub universe_seed_sample: usize,
    pub rng_seed: u64,
    /// Rayon worker cap; default leaves the pool at its own default.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seeds: None,
            model: None,
            candidates: None,
            oracle: None,
            mode: ClassMode::Manual,
            min_group: 10,
            cluster_k: ClusterK::Auto,
            cluster_kmax: 10,
            batch_size: 128,
            epochs: 20,
            learning_rate: 1e-3,
            patience: None,
            latent_draws: 1,
            generate_n: 10_000,
            exclude_seeds: false,
            n_sampled: None,
            budget: true,
            probe_n: 10_000,
            universe_fixed_iid: 1 << 14,
            universe_low64_subnet: 1 << 14,
            universe_slaac_eui64: 1 << 14,
            universe_slaac_privacy: 1 << 14,
            universe_seed_sample: 5000,
            rng_seed: 0,
            workers: None,
        }
    }
}

fn parse_usize(key: &str, value: &str, min: usize) -> Result<usize, ConfigError> {
    let n: usize = value
        .parse()
        .map_err(|_| err(format!("{key}: expected an integer, got {value:?}")))?;
    if n < min {
        return Err(err(format!("{key}: must be at least {min}")));
    }
    Ok(n)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl PipelineConfig {
    /// Reads and resolves a config file, includes and all.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        for (key, value) in read_pairs(path.as_ref(), 0)? {
            cfg.apply(&key, &value)?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` assignment.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "seeds" => self.seeds = Some(PathBuf::from(value)),
            "model" => self.model = Some(PathBuf::from(value)),
            "candidates" => self.candidates = Some(PathBuf::from(value)),
            "oracle" => self.oracle = Some(PathBuf::from(value)),
            "mode" => {
                self.mode = match value {
                    "none" => ClassMode::None,
                    "manual" => ClassMode::Manual,
                    "cluster" => ClassMode::Cluster,
                    _ => {
                        return Err(err(format!(
                            "mode: expected none, manual, or cluster, got {value:?}"
                        )))
                    }
                }
            }
            "min_group" => self.min_group = parse_usize(key, value, 1)?,
            "cluster_k" => {
                self.cluster_k = if value == "auto" {
                    ClusterK::Auto
                } else {
                    ClusterK::Fixed(parse_usize(key, value, 1)?)
                }
            }
            "cluster_kmax" => self.cluster_kmax = parse_usize(key, value, 2)?,
            "batch_size" => self.batch_size = parse_usize(key, value, 1)?,
            "epochs" => self.epochs = parse_usize(key, value, 0)?,
            "learning_rate" => {
                let lr: f64 = value
                    .parse()
                    .map_err(|_| err(format!("learning_rate: expected a number, got {value:?}")))?;
                if !lr.is_finite() || lr <= 0.0 {
                    return Err(err("learning_rate: must be a positive finite number"));
                }
                self.learning_rate = lr;
            }
            "patience" => self.patience = Some(parse_usize(key, value, 1)?),
            "latent_draws" => self.latent_draws = parse_usize(key, value, 1)?,
            "generate_n" => self.generate_n = parse_usize(key, value, 1)?,
            "exclude_seeds" => self.exclude_seeds = parse_bool(key, value)?,
            "n_sampled" => self.n_sampled = Some(parse_usize(key, value, 1)?),
            "budget" => self.budget = parse_bool(key, value)?,
            "probe_n" => self.probe_n = parse_usize(key, value, 1)?,
            "universe_fixed_iid" => self.universe_fixed_iid = parse_usize(key, value, 1)?,
            "universe_low64_subnet" => self.universe_low64_subnet = parse_usize(key, value, 1)?,
            "universe_slaac_eui64" => self.universe_slaac_eui64 = parse_usize(key, value, 1)?,
            "universe_slaac_privacy" => {
                self.universe_slaac_privacy = parse_usize(key, value, 1)?
            }
            "universe_seed_sample" => self.universe_seed_sample = parse_usize(key, value, 1)?,
            "rng_seed" => {
                self.rng_seed = value
                    .parse()
                    .map_err(|_| err(format!("rng_seed: expected an integer, got {value:?}")))?
            }
            "workers" => self.workers = Some(parse_usize(key, value, 1)?),
            _ => return Err(err(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Canonical resolved listing, one entry per key in fixed order. Unset
    /// optional keys render as empty values.
    pub fn snapshot(&self) -> Vec<(String, String)> {
        fn path(p: &Option<PathBuf>) -> String {
            p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        }
        fn opt(n: &Option<usize>) -> String {
            n.map(|n| n.to_string()).unwrap_or_default()
        }
        let pairs = [
            ("batch_size", self.batch_size.to_string()),
            ("budget", self.budget.to_string()),
            ("candidates", path(&self.candidates)),
            (
                "cluster_k",
                match self.cluster_k {
                    ClusterK::Auto => "auto".to_string(),
                    ClusterK::Fixed(k) => k.to_string(),
                },
            ),
            ("cluster_kmax", self.cluster_kmax.to_string()),
            ("epochs", self.epochs.to_string()),
            ("exclude_seeds", self.exclude_seeds.to_string()),
            ("generate_n", self.generate_n.to_string()),
            ("latent_draws", self.latent_draws.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("min_group", self.min_group.to_string()),
            ("mode", self.mode.name().to_string()),
            ("model", path(&self.model)),
            ("n_sampled", opt(&self.n_sampled)),
            ("oracle", path(&self.oracle)),
            ("patience", opt(&self.patience)),
            ("probe_n", self.probe_n.to_string()),
            ("rng_seed", self.rng_seed.to_string()),
            ("seeds", path(&self.seeds)),
            ("universe_fixed_iid", self.universe_fixed_iid.to_string()),
            ("universe_low64_subnet", self.universe_low64_subnet.to_string()),
            ("universe_seed_sample", self.universe_seed_sample.to_string()),
            ("universe_slaac_eui64", self.universe_slaac_eui64.to_string()),
            (
                "universe_slaac_privacy",
                self.universe_slaac_privacy.to_string(),
            ),
            ("workers", opt(&self.workers)),
        ];
        pairs
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }
}

/// Parses config text into assignment pairs without touching the
/// filesystem, rejecting `include` lines. This is the grammar entry point.
pub fn parse_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(format!("line {}: expected key = value", idx + 1)));
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(err(format!("line {}: empty key", idx + 1)));
        }
        if value.is_empty() {
            return Err(err(format!("line {}: empty value for {key:?}", idx + 1)));
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

fn read_pairs(path: &Path, depth: usize) -> Result<Vec<(String, String)>, ConfigError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(err(format!(
            "include depth exceeds {MAX_INCLUDE_DEPTH} at {}",
            path.display()
        )));
    }
    let text = fs::read_to_string(path)
        .map_err(|e| err(format!("cannot read config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (key, value) in parse_text(&text)? {
        if key == "include" {
            let target = base.join(&value);
            out.extend(read_pairs(&target, depth + 1)?);
        } else {
            out.push((key, value));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn parses_flat_assignments_with_comments() {
        let pairs = parse_text("# header\n\nepochs = 5\n  seeds=a/b.txt  \n").unwrap();
        assert_eq!(
            pairs,
            vec![
                ("epochs".to_string(), "5".to_string()),
                ("seeds".to_string(), "a/b.txt".to_string())
            ]
        );
    }

    #[test]
    fn rejects_bad_lines_keys_and_values() {
        assert!(parse_text("no equals sign").is_err());
        assert!(parse_text("= value").is_err());
        assert!(parse_text("key =").is_err());

        let mut cfg = PipelineConfig::default();
        assert!(cfg.apply("epochs", "many").is_err());
        assert!(cfg.apply("batch_size", "0").is_err());
        assert!(cfg.apply("learning_rate", "-1").is_err());
        assert!(cfg.apply("mode", "magic").is_err());
        assert!(cfg.apply("no_such_key", "1").is_err());
    }

    #[test]
    fn include_splices_defaults_and_later_keys_override() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "defaults.conf", "epochs = 3\nbatch_size = 8\n");
        let run = write(
            dir.path(),
            "run.conf",
            "include = defaults.conf\nepochs = 9\nseeds = s.txt\n",
        );
        let cfg = PipelineConfig::from_file(&run).unwrap();
        assert_eq!(cfg.epochs, 9);
        assert_eq!(cfg.batch_size, 8);
        assert_eq!(cfg.seeds.as_deref(), Some(Path::new("s.txt")));
    }

    #[test]
    fn include_cycles_are_cut_off() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.conf", "include = b.conf\n");
        let b = write(dir.path(), "b.conf", "include = a.conf\n");
        assert!(PipelineConfig::from_file(&b).is_err());
    }

    #[test]
    fn missing_config_file_is_a_config_error() {
        assert!(PipelineConfig::from_file("/nonexistent/x.conf").is_err());
    }

    #[test]
    fn cluster_k_accepts_auto_and_integers() {
        let mut cfg = PipelineConfig::default();
        cfg.apply("cluster_k", "auto").unwrap();
        assert_eq!(cfg.cluster_k, ClusterK::Auto);
        cfg.apply("cluster_k", "4").unwrap();
        assert_eq!(cfg.cluster_k, ClusterK::Fixed(4));
        assert!(cfg.apply("cluster_k", "zero").is_err());
    }

    #[test]
    fn snapshot_is_stable_and_complete() {
        let mut cfg = PipelineConfig::default();
        cfg.apply("seeds", "x.txt").unwrap();
        cfg.apply("rng_seed", "7").unwrap();
        let snap = cfg.snapshot();
        assert_eq!(snap, cfg.snapshot());
        let keys: Vec<&str> = snap.iter().map(|(k, _)| k.as_str()).collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted, "snapshot keys must be ordered");
        assert!(snap.contains(&("rng_seed".to_string(), "7".to_string())));
        assert!(snap.contains(&("patience".to_string(), String::new())));
    }
}
