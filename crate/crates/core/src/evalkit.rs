//! Candidate-set scoring against an activity oracle, sampling-budget
//! allocation across seed categories, and a deterministic synthetic
//! active-address universe for benchmarking without live scanning.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::addr6::{LoadError, LoadMode, NybblePrefix, NybbleSeq, SeedSet, NYBBLES};
use crate::seeding::derive_seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no candidates to score")]
    EmptyCandidates,
    #[error("all category rates are zero")]
    AllRatesZero,
    #[error("seed sample {sample} exceeds universe size {universe}")]
    SampleExceedsUniverse { sample: usize, universe: usize },
    #[error("invalid evaluation input: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Load(#[from] LoadError),
}

/// Membership predicate over addresses: the stand-in for a live scan result.
///
/// Membership is fixed at construction, so repeat queries always agree and
/// the oracle can be shared across threads.
#[derive(Clone, Debug)]
pub struct ActivityOracle {
    members: SeedSet,
}

impl ActivityOracle {
    /// Builds an oracle over an explicit member list, recording where the
    /// list came from.
    pub fn from_members<I>(members: I, provenance: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = NybbleSeq>,
    {
        let mut set = SeedSet::new(provenance);
        for seq in members {
            set.insert(seq);
        }
        ActivityOracle { members: set }
    }

    pub fn active(&self, addr: &NybbleSeq) -> bool {
        self.members.contains(addr)
    }

    /// Where the membership list came from (file path or synthetic tag).
    pub fn provenance(&self) -> &str {
        self.members.source_label()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in insertion order, for writing fixture files.
    pub fn members(&self) -> impl Iterator<Item = &NybbleSeq> + '_ {
        self.members.iter()
    }
}

/// Loads a newline-delimited active-address file into an oracle. Duplicate
/// lines collapse to one member.
pub fn oracle_from_file(path: impl AsRef<Path>) -> Result<ActivityOracle, EvalError> {
    let (set, _) = crate::addr6::load_seed_file(path, LoadMode::Strict)?;
    Ok(ActivityOracle { members: set })
}

/// Outcome of scoring one candidate set against an oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationReport {
    /// Draws requested from the generator.
    pub n_sampled: usize,
    /// Deduplicated candidates actually scored.
    pub n_candidate: usize,
    /// Candidates the oracle reports active.
    pub n_hit: usize,
    /// Active candidates that are not already seeds.
    pub n_new: usize,
    /// n_hit / n_candidate.
    pub r_hit: f64,
    /// n_new / n_candidate.
    pub r_gen: f64,
}

/// Formats a unit-interval rate as a percentage with two decimals.
pub fn format_percent(rate: f64) -> String {
    format!("{:.2}%", rate * 100.0)
}

impl GenerationReport {
    pub fn r_hit_percent(&self) -> String {
        format_percent(self.r_hit)
    }

    pub fn r_gen_percent(&self) -> String {
        format_percent(self.r_gen)
    }
}

/// Scores deduplicated `candidates` against `oracle`. A candidate counts as
/// a hit when the oracle accepts it and as new when it is additionally not
/// in `seeds`. `n_sampled` is the number of generator draws that produced
/// the candidates, so it must be at least `candidates.len()`.
pub fn evaluate(
    candidates: &[NybbleSeq],
    seeds: &SeedSet,
    oracle: &ActivityOracle,
    n_sampled: usize,
) -> Result<GenerationReport, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::EmptyCandidates);
    }
    if n_sampled < candidates.len() {
        return Err(EvalError::InvalidConfig(format!(
            "{} candidates cannot come from {} draws",
            candidates.len(),
            n_sampled
        )));
    }
    let (n_hit, n_new) = candidates
        .par_iter()
        .map(|c| {
            if oracle.active(c) {
                (1usize, usize::from(!seeds.contains(c)))
            } else {
                (0, 0)
            }
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n_candidate = candidates.len();
    Ok(GenerationReport {
        n_sampled,
        n_candidate,
        n_hit,
        n_new,
        r_hit: n_hit as f64 / n_candidate as f64,
        r_gen: n_new as f64 / n_candidate as f64,
    })
}

/// Drops candidates that are already seeds, for pipelines that only want to
/// score previously unknown addresses.
pub fn strip_seeds(candidates: &[NybbleSeq], seeds: &SeedSet) -> Vec<NybbleSeq> {
    candidates
        .iter()
        .filter(|c| !seeds.contains(c))
        .copied()
        .collect()
}

/// Splits `n_total` draws across categories proportionally to their rates
/// using largest-remainder rounding, so the result sums to exactly
/// `n_total` and scaling every rate by the same factor changes nothing.
pub fn allocate_budget<L: Clone>(
    category_rates: &[(L, f64)],
    n_total: usize,
) -> Result<Vec<(L, usize)>, EvalError> {
    for (_, rate) in category_rates {
        if !rate.is_finite() || *rate < 0.0 {
            return Err(EvalError::InvalidConfig(format!("bad rate {rate}")));
        }
    }
    let sum: f64 = category_rates.iter().map(|(_, r)| r).sum();
    if sum == 0.0 {
        return Err(EvalError::AllRatesZero);
    }
    let mut draws = Vec::with_capacity(category_rates.len());
    let mut fractions = Vec::with_capacity(category_rates.len());
    let mut assigned = 0usize;
    for (i, (label, rate)) in category_rates.iter().enumerate() {
        let quota = n_total as f64 * rate / sum;
        let floor = quota.floor() as usize;
        assigned += floor;
        draws.push((label.clone(), floor));
        fractions.push((i, quota - quota.floor()));
    }
    fractions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(i, _) in fractions.iter().take(n_total - assigned) {
        draws[i].1 += 1;
    }
    Ok(draws)
}

/// Shape of the hidden synthetic universe and the seed sample drawn from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UniverseConfig {
    pub rng_seed: u64,
    /// Constant-IID addresses spread over enumerated subnets.
    pub fixed_iid: usize,
    /// Addresses whose IID carries several short zero-delimited fields.
    pub low64_subnet: usize,
    /// MAC-derived IIDs with the ff:fe infix.
    pub slaac_eui64: usize,
    /// High-entropy random IIDs.
    pub slaac_privacy: usize,
    /// Seeds sampled from the universe without replacement.
    pub seed_sample: usize,
}

impl Default for UniverseConfig {
    fn default() -> Self {
        UniverseConfig {
            rng_seed: 0,
            fixed_iid: 1 << 14,
            low64_subnet: 1 << 14,
            slaac_eui64: 1 << 14,
            slaac_privacy: 1 << 14,
            seed_sample: 5000,
        }
    }
}

impl UniverseConfig {
    pub fn universe_size(&self) -> usize {
        self.fixed_iid + self.low64_subnet + self.slaac_eui64 + self.slaac_privacy
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let pools = [
            ("fixed_iid", self.fixed_iid, 1usize << 32),
            ("low64_subnet", self.low64_subnet, 1 << 16),
            ("slaac_eui64", self.slaac_eui64, 1 << 24),
            ("slaac_privacy", self.slaac_privacy, 1 << 24),
        ];
        for (name, count, cap) in pools {
            if count == 0 {
                return Err(EvalError::InvalidConfig(format!("{name} count is zero")));
            }
            if count > cap {
                return Err(EvalError::InvalidConfig(format!(
                    "{name} count {count} exceeds pool capacity {cap}"
                )));
            }
        }
        if self.seed_sample == 0 {
            return Err(EvalError::InvalidConfig("seed_sample is zero".into()));
        }
        if self.seed_sample > self.universe_size() {
            return Err(EvalError::SampleExceedsUniverse {
                sample: self.seed_sample,
                universe: self.universe_size(),
            });
        }
        Ok(())
    }
}

const PREFIX_FIXED: [u8; 8] = [0xf, 0xd, 0x0, 0x1, 0x0, 0xd, 0xb, 0x8];
const PREFIX_LOW64: [u8; 8] = [0xf, 0xd, 0x0, 0x2, 0x0, 0xd, 0xb, 0x8];
const PREFIX_EUI64: [u8; 8] = [0xf, 0xd, 0x0, 0x3, 0x0, 0xd, 0xb, 0x8];
const PREFIX_PRIVACY: [u8; 8] = [0xf, 0xd, 0x0, 0x4, 0x0, 0xd, 0xb, 0x8];

fn assemble(prefix: &[u8; 8], subnet: &[u8; 8], iid: &[u8; 16]) -> NybbleSeq {
    let mut symbols = [0u8; NYBBLES];
    symbols[..8].copy_from_slice(prefix);
    symbols[8..16].copy_from_slice(subnet);
    symbols[16..].copy_from_slice(iid);
    NybbleSeq::new(symbols).expect("pool symbols are nybbles")
}

fn hex_digits<const N: usize>(value: usize) -> [u8; N] {
    let mut out = [0u8; N];
    for (k, slot) in out.iter_mut().rev().enumerate() {
        *slot = ((value >> (4 * k)) & 0xf) as u8;
    }
    out
}

fn pool_fixed_iid(count: usize) -> Vec<NybbleSeq> {
    let mut iid = [0u8; 16];
    iid[15] = 1;
    (0..count)
        .map(|s| assemble(&PREFIX_FIXED, &hex_digits(s), &iid))
        .collect()
}

fn pool_low64_subnet(count: usize) -> Vec<NybbleSeq> {
    let subnet = [0u8; 8];
    (0..count)
        .map(|i| {
            let d = hex_digits::<4>(i);
            let mut iid = [0u8; 16];
            iid[2] = d[1];
            iid[3] = d[2];
            iid[4] = 1;
            iid[12] = d[3];
            iid[13] = d[0];
            assemble(&PREFIX_LOW64, &subnet, &iid)
        })
        .collect()
}

fn pool_slaac_eui64(count: usize) -> Vec<NybbleSeq> {
    let subnet = hex_digits::<8>(1);
    let oui = [0x0, 0xa, 0x1, 0xb, 0x2, 0xc];
    (0..count)
        .map(|i| {
            let mut iid = [0u8; 16];
            iid[..6].copy_from_slice(&oui);
            iid[6..10].copy_from_slice(&[0xf, 0xf, 0xf, 0xe]);
            iid[10..].copy_from_slice(&hex_digits::<6>(i));
            assemble(&PREFIX_EUI64, &subnet, &iid)
        })
        .collect()
}

fn pool_slaac_privacy(count: usize, rng_seed: u64) -> Vec<NybbleSeq> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, "universe-privacy"));
    let subnet = hex_digits::<8>(1);
    let mut seen = indexmap::IndexSet::new();
    while seen.len() < count {
        let mut iid = [0u8; 16];
        for slot in iid.iter_mut() {
            *slot = rng.random_range(0..16) as u8;
        }
        if iid[6..10] == [0xf, 0xf, 0xf, 0xe] {
            continue;
        }
        if crate::seedclass::address_char_entropy(&iid)
            <= crate::seedclass::PRIVACY_ENTROPY_THRESHOLD
        {
            continue;
        }
        seen.insert(assemble(&PREFIX_PRIVACY, &subnet, &iid));
    }
    seen.into_iter().collect()
}

/// Builds the hidden active universe and samples a seed set from it without
/// replacement. The same config always yields the same universe, the same
/// sample, and the same ordering of both.
pub fn synth_universe(cfg: &UniverseConfig) -> Result<(ActivityOracle, SeedSet), EvalError> {
    cfg.validate()?;
    let mut members = pool_fixed_iid(cfg.fixed_iid);
    members.extend(pool_low64_subnet(cfg.low64_subnet));
    members.extend(pool_slaac_eui64(cfg.slaac_eui64));
    members.extend(pool_slaac_privacy(cfg.slaac_privacy, cfg.rng_seed));

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, "universe-sample"));
    let picks = rand::seq::index::sample(&mut rng, members.len(), cfg.seed_sample);
    let mut seeds = SeedSet::new(format!("synthetic-universe(rng_seed={})", cfg.rng_seed));
    for idx in picks {
        seeds.insert(members[idx]);
    }

    let oracle =
        ActivityOracle::from_members(members, format!("synthetic-universe(rng_seed={})", cfg.rng_seed));
    Ok((oracle, seeds))
}

/// Draws `n` addresses with uniform-random trailing nybbles under prefixes
/// cycled from `prefix_pool`, deduplicated in draw order. An empty pool
/// means fully random addresses.
pub fn random_baseline(n: usize, prefix_pool: &[NybblePrefix], rng_seed: u64) -> Vec<NybbleSeq> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seen = indexmap::IndexSet::with_capacity(n);
    for _ in 0..n {
        let mut symbols = [0u8; NYBBLES];
        let mut start = 0;
        if !prefix_pool.is_empty() {
            let p = &prefix_pool[rng.random_range(0..prefix_pool.len())];
            symbols[..p.len()].copy_from_slice(p.nybbles());
            start = p.len();
        }
        for slot in symbols.iter_mut().skip(start) {
            *slot = rng.random_range(0..16) as u8;
        }
        seen.insert(NybbleSeq::new(symbols).expect("random symbols are nybbles"));
    }
    seen.into_iter().collect()
}

/// Machine-readable report: one `key=value` line per field.
pub fn render_eval_kv(report: &GenerationReport) -> String {
    format!(
        "n_sampled={}\nn_candidate={}\nn_hit={}\nn_new={}\nr_hit={}\nr_gen={}\n",
        report.n_sampled,
        report.n_candidate,
        report.n_hit,
        report.n_new,
        report.r_hit_percent(),
        report.r_gen_percent()
    )
}

/// Aligned table with one row per labeled report.
pub fn render_eval_table(rows: &[(String, GenerationReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>10} {:>12} {:>10} {:>10} {:>8} {:>8}\n",
        "category", "n_sampled", "n_candidate", "n_hit", "n_new", "r_hit", "r_gen"
    ));
    for (label, r) in rows {
        out.push_str(&format!(
            "{:<16} {:>10} {:>12} {:>10} {:>10} {:>8} {:>8}\n",
            label,
            r.n_sampled,
            r.n_candidate,
            r.n_hit,
            r.n_new,
            r.r_hit_percent(),
            r.r_gen_percent()
        ));
    }
    out
}
