//! Seed classification by addressing scheme.
//!
//! Two routes: rule-based labeling of single addresses ([`classify_manual`])
//! and unsupervised clustering of per-prefix entropy fingerprints
//! ([`fingerprint`], [`kmeans`], [`elbow`]).
//!
//! Per-nybble entropy is normalized to [0, 1]: base-2 logarithm over the
//! 16-symbol alphabet divided by 4, so a constant column scores 0 and a
//! uniform column scores 1.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::addr6::{NybblePrefix, NybbleSeq, SeedSet, ALPHABET, NYBBLES};

/// First considered nybble of the default fingerprint window (0-based; the
/// nybble right after a /32 prefix).
pub const DEFAULT_FP_START: usize = 8;
/// One past the last considered nybble of the default window.
pub const DEFAULT_FP_END: usize = NYBBLES;
/// Default prefix width for grouping: 8 nybbles, a /32.
pub const DEFAULT_PREFIX_NYBBLES: usize = 8;
/// Groups smaller than this are routed to the unclassified pool; entropy
/// estimates from tiny samples are noise.
pub const DEFAULT_MIN_GROUP: usize = 10;
/// Seeded restarts per k when scanning for the elbow.
pub const ELBOW_RESTARTS: usize = 5;
/// Per-address IID entropy above this is treated as pseudorandom.
pub const PRIVACY_ENTROPY_THRESHOLD: f64 = 0.8;

const KMEANS_MAX_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeedClassError {
    #[error("empty address set")]
    EmptySet,
    #[error("bad nybble range {start}..{end}")]
    BadRange { start: usize, end: usize },
    #[error("need at least {k} fingerprints for k={k}, got {groups}")]
    TooFewGroups { groups: usize, k: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k_max must be at least 2")]
    BadKMax,
    #[error("fingerprints have differing lengths")]
    DimensionMismatch,
}

/// Addressing-scheme category of a single address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeLabel {
    FixedIid,
    Low64Subnet,
    SlaacEui64,
    SlaacPrivacy,
    Other,
}

impl SchemeLabel {
    pub const ALL: [SchemeLabel; 5] = [
        SchemeLabel::FixedIid,
        SchemeLabel::Low64Subnet,
        SchemeLabel::SlaacEui64,
        SchemeLabel::SlaacPrivacy,
        SchemeLabel::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeLabel::FixedIid => "fixed-iid",
            SchemeLabel::Low64Subnet => "low64-subnet",
            SchemeLabel::SlaacEui64 => "slaac-eui64",
            SchemeLabel::SlaacPrivacy => "slaac-privacy",
            SchemeLabel::Other => "other",
        }
    }
}

impl fmt::Display for SchemeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Normalized entropy of the symbol distribution at one nybble position
/// (0-based) across a set.
pub fn column_entropy(set: &SeedSet, position: usize) -> Result<f64, SeedClassError> {
    if set.is_empty() {
        return Err(SeedClassError::EmptySet);
    }
    if position >= NYBBLES {
        return Err(SeedClassError::BadRange {
            start: position,
            end: position + 1,
        });
    }
    let mut counts = [0usize; ALPHABET];
    for seq in set.iter() {
        counts[seq.symbols()[position] as usize] += 1;
    }
    Ok(normalized_entropy(&counts, set.len()))
}

fn normalized_entropy(counts: &[usize; ALPHABET], total: usize) -> f64 {
    let n = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    // log2 over a 16-symbol alphabet peaks at 4
    (h / 4.0).clamp(0.0, 1.0)
}

/// Normalized symbol entropy of one interface identifier (16 nybbles).
/// 0 for a constant IID, 1 when all 16 symbols are distinct.
pub fn address_char_entropy(iid: &[u8]) -> f64 {
    assert_eq!(iid.len(), 16, "IID must be exactly 16 nybbles");
    let mut counts = [0usize; ALPHABET];
    for &s in iid {
        counts[s as usize] += 1;
    }
    normalized_entropy(&counts, iid.len())
}

/// Per-nybble entropy vector of an address group over a window of positions.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyFingerprint {
    /// Leading nybbles shared by the group.
    pub prefix: NybblePrefix,
    /// First considered nybble (0-based).
    pub start: usize,
    /// One past the last considered nybble.
    pub end: usize,
    /// One entropy value per considered position, each in [0, 1].
    pub values: Vec<f64>,
    /// Number of addresses the fingerprint was estimated from.
    pub support: usize,
}

/// Entropy fingerprint of `set` over nybble positions `start..end` (0-based,
/// half-open). The default window is `8..32`: everything after a /32 prefix.
pub fn fingerprint(
    set: &SeedSet,
    prefix: NybblePrefix,
    start: usize,
    end: usize,
) -> Result<EntropyFingerprint, SeedClassError> {
    if set.is_empty() {
        return Err(SeedClassError::EmptySet);
    }
    if start >= end || end > NYBBLES {
        return Err(SeedClassError::BadRange { start, end });
    }
    let values = (start..end)
        .map(|i| column_entropy(set, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EntropyFingerprint {
        prefix,
        start,
        end,
        values,
        support: set.len(),
    })
}

/// Partitions a set by the first `prefix_nybbles` nybbles of each address.
pub fn group_by_prefix(set: &SeedSet, prefix_nybbles: usize) -> BTreeMap<NybblePrefix, SeedSet> {
    assert!(
        prefix_nybbles >= 1 && prefix_nybbles < NYBBLES,
        "prefix width {prefix_nybbles} outside 1..32"
    );
    let mut groups: BTreeMap<NybblePrefix, SeedSet> = BTreeMap::new();
    for seq in set.iter() {
        groups
            .entry(seq.prefix(prefix_nybbles))
            .or_default()
            .insert(*seq);
    }
    groups
}

/// Groups a seed set by prefix and fingerprints every group with at least
/// `min_group` members; smaller groups are pooled into the returned
/// remainder set. Fingerprints come back in prefix order.
pub fn fingerprint_groups(
    set: &SeedSet,
    prefix_nybbles: usize,
    start: usize,
    end: usize,
    min_group: usize,
) -> Result<(Vec<EntropyFingerprint>, SeedSet), SeedClassError> {
    let mut fps = Vec::new();
    let mut pool = SeedSet::new("unclassified");
    for (prefix, group) in group_by_prefix(set, prefix_nybbles) {
        if group.len() < min_group {
            for seq in group.iter() {
                pool.insert(*seq);
            }
        } else {
            fps.push(fingerprint(&group, prefix, start, end)?);
        }
    }
    Ok((fps, pool))
}

fn zero_runs_ge2(iid: &[u8]) -> usize {
    let mut runs = 0;
    let mut len = 0;
    for &s in iid {
        if s == 0 {
            len += 1;
        } else {
            if len >= 2 {
                runs += 1;
            }
            len = 0;
        }
    }
    if len >= 2 {
        runs += 1;
    }
    runs
}

/// Labels one address by feature matching on its IID, in precedence order:
///
/// 1. `SlaacEui64`: nybbles 22..26 (0-based) are `fffe`, the EUI-64 marker.
/// 2. `SlaacPrivacy`: IID symbol entropy above [`PRIVACY_ENTROPY_THRESHOLD`].
/// 3. `Low64Subnet`: two or more maximal runs of ≥ 2 zero nybbles in the IID.
/// 4. `FixedIid`: exactly one such run.
/// 5. `Other`.
///
/// The exact syntactic marker outranks the entropy rule, which outranks the
/// mutually exclusive zero-run rules.
pub fn classify_manual(seq: &NybbleSeq) -> SchemeLabel {
    let symbols = seq.symbols();
    if symbols[22..26] == [0xf, 0xf, 0xf, 0xe] {
        return SchemeLabel::SlaacEui64;
    }
    let iid = seq.iid();
    if address_char_entropy(iid) > PRIVACY_ENTROPY_THRESHOLD {
        return SchemeLabel::SlaacPrivacy;
    }
    match zero_runs_ge2(iid) {
        0 => SchemeLabel::Other,
        1 => SchemeLabel::FixedIid,
        _ => SchemeLabel::Low64Subnet,
    }
}

/// Splits a set into per-label subsets, preserving input order.
pub fn classify_set(set: &SeedSet) -> BTreeMap<SchemeLabel, SeedSet> {
    let mut out: BTreeMap<SchemeLabel, SeedSet> = BTreeMap::new();
    for label in SchemeLabel::ALL {
        out.insert(label, SeedSet::new(label.name()));
    }
    for seq in set.iter() {
        out.get_mut(&classify_manual(seq)).unwrap().insert(*seq);
    }
    out
}

/// One line per category: name, count, percentage.
pub fn render_class_report(counts: &BTreeMap<SchemeLabel, usize>) -> String {
    let total: usize = counts.values().sum();
    let mut out = String::new();
    for label in SchemeLabel::ALL {
        let count = counts.get(&label).copied().unwrap_or(0);
        let pct = if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        };
        out.push_str(&format!("{:<14} {:>10} {:>8.2}%\n", label.name(), count, pct));
    }
    out.push_str(&format!("{:<14} {:>10} {:>8.2}%\n", "total", total, if total == 0 { 0.0 } else { 100.0 }));
    out
}

/// Fitted k-means state over fingerprint vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index per input fingerprint, in input order.
    pub assignments: Vec<usize>,
    /// Sum over points of squared distance to the assigned centroid.
    pub sse: f64,
    pub rng_seed: u64,
    /// SSE recorded after every assignment step; non-increasing.
    pub sse_per_iter: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// Distance-weighted seeding: the first centroid is drawn uniformly, each
/// later one with probability proportional to squared distance from the
/// centroids chosen so far.
fn seed_centroids(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..points.len());
    centroids.push(points[first].to_vec());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| dist2(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut x = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if x < w {
                    pick = i;
                    break;
                }
                x -= w;
            }
            pick
        } else {
            // every point coincides with a centroid already
            rng.random_range(0..points.len())
        };
        centroids.push(points[idx].to_vec());
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, centroids.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Lloyd's algorithm to an assignment fixpoint (or an iteration cap),
/// deterministic for a given `rng_seed`. Clusters that empty out keep their
/// previous centroid.
pub fn kmeans(
    fingerprints: &[EntropyFingerprint],
    k: usize,
    rng_seed: u64,
) -> Result<ClusterModel, SeedClassError> {
    if k == 0 {
        return Err(SeedClassError::ZeroK);
    }
    if fingerprints.len() < k {
        return Err(SeedClassError::TooFewGroups {
            groups: fingerprints.len(),
            k,
        });
    }
    let dim = fingerprints[0].values.len();
    if fingerprints.iter().any(|f| f.values.len() != dim) {
        return Err(SeedClassError::DimensionMismatch);
    }
    let points: Vec<&[f64]> = fingerprints.iter().map(|f| f.values.as_slice()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut centroids = seed_centroids(&points, k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut sse_per_iter = Vec::new();

    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        let mut sse = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            sse += d;
        }
        sse_per_iter.push(sse);
        if !changed && sse_per_iter.len() > 1 {
            break;
        }

        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(*p) {
                *s += v;
            }
        }
        for (c, (sum, &count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if count > 0 {
                for (slot, &s) in c.iter_mut().zip(sum) {
                    *slot = s / count as f64;
                }
            }
        }
    }

    let sse = *sse_per_iter.last().unwrap();
    Ok(ClusterModel {
        k,
        centroids,
        assignments,
        sse,
        rng_seed,
        sse_per_iter,
    })
}

/// SSE curve over k = 1..=k_max plus the knee chosen by the largest second
/// difference of the curve.
#[derive(Clone, Debug)]
pub struct ElbowResult {
    /// `sse_curve[i]` is the best-of-restarts SSE at k = i + 1.
    pub sse_curve: Vec<f64>,
    pub chosen_k: usize,
    /// Best model per k, aligned with `sse_curve`.
    pub models: Vec<ClusterModel>,
}

/// Runs [`kmeans`] for k = 1..=k_max with [`ELBOW_RESTARTS`] seeded restarts
/// per k, keeping each k's lowest-SSE model. The knee is the k maximizing
/// the second difference of the SSE curve; when the curve has fewer than
/// three points that rule is undefined, so pick 1 unless splitting removes
/// more than half the SSE. Callers may override the choice.
pub fn elbow(
    fingerprints: &[EntropyFingerprint],
    k_max: usize,
    rng_seed: u64,
) -> Result<ElbowResult, SeedClassError> {
    if k_max < 2 {
        return Err(SeedClassError::BadKMax);
    }
    let k_max = k_max.min(fingerprints.len());
    if k_max < 1 || fingerprints.is_empty() {
        return Err(SeedClassError::TooFewGroups {
            groups: fingerprints.len(),
            k: 1,
        });
    }

    let mut models = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut best: Option<ClusterModel> = None;
        for r in 0..ELBOW_RESTARTS {
            let m = kmeans(
                fingerprints,
                k,
                crate::seeding::mix64(&[rng_seed, k as u64, r as u64]),
            )?;
            if best.as_ref().is_none_or(|b| m.sse < b.sse) {
                best = Some(m);
            }
        }
        models.push(best.unwrap());
    }
    let sse_curve: Vec<f64> = models.iter().map(|m| m.sse).collect();

    let chosen_k = if sse_curve.len() < 3 {
        if sse_curve.len() == 2 && sse_curve[1] < 0.5 * sse_curve[0] {
            2
        } else {
            1
        }
    } else {
        let mut best_k = 2;
        let mut best_d2 = f64::NEG_INFINITY;
        for i in 1..sse_curve.len() - 1 {
            let d2 = sse_curve[i - 1] - 2.0 * sse_curve[i] + sse_curve[i + 1];
            if d2 > best_d2 {
                best_d2 = d2;
                best_k = i + 1;
            }
        }
        best_k
    };

    Ok(ElbowResult {
        sse_curve,
        chosen_k,
        models,
    })
}

/// Centroid vector as comma-separated decimals, for the cluster export.
pub fn render_centroid(centroid: &[f64]) -> String {
    centroid
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr6::Ipv6Address;
    use rand::Rng;

    fn nyb(s: &str) -> NybbleSeq {
        s.parse().unwrap()
    }

    fn set_of(strs: &[&str]) -> SeedSet {
        strs.iter().map(|s| nyb(s)).collect()
    }

    /// Independent histogram-entropy oracle used to cross-check the
    /// implementation path.
    fn oracle_entropy(symbols: &[u8]) -> f64 {
        let n = symbols.len() as f64;
        let mut h = 0.0;
        for sym in 0..16u8 {
            let c = symbols.iter().filter(|&&v| v == sym).count();
            if c > 0 {
                let p = c as f64 / n;
                h -= p * p.log2();
            }
        }
        h / 4.0
    }

    #[test]
    fn constant_column_has_zero_entropy() {
        let set = set_of(&[
            &"0".repeat(32),
            &format!("{}1", "0".repeat(31)),
            &format!("{}2", "0".repeat(31)),
        ]);
        assert_eq!(column_entropy(&set, 0).unwrap(), 0.0);
    }

    #[test]
    fn uniform_column_has_unit_entropy() {
        let set: SeedSet = (0..16u8)
            .map(|v| {
                let mut sym = [0u8; 32];
                sym[5] = v;
                sym[31] = v; // keep members distinct
                NybbleSeq::new(sym).unwrap()
            })
            .collect();
        assert!((column_entropy(&set, 5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_symbol_column_scores_quarter() {
        // {0,0,1,1}: two symbols at probability 1/2 each
        let set: SeedSet = (0..4u8)
            .map(|i| {
                let mut sym = [0u8; 32];
                sym[9] = i / 2;
                sym[31] = i;
                NybbleSeq::new(sym).unwrap()
            })
            .collect();
        assert!((column_entropy(&set, 9).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_set_is_rejected() {
        assert_eq!(
            column_entropy(&SeedSet::default(), 0),
            Err(SeedClassError::EmptySet)
        );
    }

    #[test]
    fn matches_oracle_on_random_sets() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..200usize);
            let set: SeedSet = (0..n)
                .map(|i| {
                    let mut bits: u128 = rng.random();
                    bits = (bits & !0xffff) | i as u128; // force distinct
                    Ipv6Address::from_bits(bits).to_nybbles()
                })
                .collect();
            for pos in [0usize, 7, 15, 31] {
                let column: Vec<u8> = set.iter().map(|s| s.symbols()[pos]).collect();
                let want = oracle_entropy(&column);
                let got = column_entropy(&set, pos).unwrap();
                assert!((got - want).abs() < 1e-9, "pos {pos}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn singleton_fingerprint_is_zero() {
        let set = set_of(&["20010db8002000030000000000000301"]);
        let fp = fingerprint(&set, "20010db8".parse().unwrap(), 8, 32).unwrap();
        assert_eq!(fp.values.len(), 24);
        assert!(fp.values.iter().all(|&v| v == 0.0));
        assert_eq!(fp.support, 1);
    }

    #[test]
    fn uniform_random_tail_fingerprint_is_near_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let prefix: NybblePrefix = "20010db8".parse().unwrap();
        let set: SeedSet = (0..10_000)
            .map(|_| {
                let mut sym = [0u8; 32];
                for (i, s) in sym.iter_mut().enumerate() {
                    *s = if i < 8 {
                        prefix.nybbles()[i]
                    } else {
                        rng.random_range(0..16) as u8
                    };
                }
                NybbleSeq::new(sym).unwrap()
            })
            .collect();
        let fp = fingerprint(&set, prefix, 8, 32).unwrap();
        assert!(fp.values.iter().all(|&v| (v - 1.0).abs() < 0.05), "{:?}", fp.values);
    }

    #[test]
    fn single_position_fingerprint_matches_column_entropy() {
        let set = set_of(&[
            "20010db8002000030000000000000301",
            "20010db8002000030000000000000a01",
        ]);
        let fp = fingerprint(&set, "20010db8".parse().unwrap(), 28, 29).unwrap();
        assert_eq!(fp.values.len(), 1);
        assert_eq!(fp.values[0], column_entropy(&set, 28).unwrap());
    }

    #[test]
    fn bad_range_is_rejected() {
        let set = set_of(&["20010db8002000030000000000000301"]);
        let p: NybblePrefix = "2".parse().unwrap();
        assert!(matches!(
            fingerprint(&set, p.clone(), 8, 8),
            Err(SeedClassError::BadRange { .. })
        ));
        assert!(matches!(
            fingerprint(&set, p, 8, 33),
            Err(SeedClassError::BadRange { .. })
        ));
    }

    #[test]
    fn groups_by_shared_prefix() {
        let set = set_of(&[
            "20010db8002000030000000000000301",
            "20010db8002000030000000000000302",
        ]);
        assert_eq!(group_by_prefix(&set, 8).len(), 1);

        let set = set_of(&[
            "20010db8002000030000000000000301",
            "30010db8002000030000000000000301",
        ]);
        assert_eq!(group_by_prefix(&set, 8).len(), 2);
    }

    #[test]
    fn grouping_partitions_the_set() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let prefixes = ["20010db8", "20010db9", "2a000f10", "2a000f11", "24001000", "26040a80", "fd000001"];
        let set: SeedSet = (0..1000)
            .map(|i| {
                let p = prefixes[rng.random_range(0..prefixes.len())];
                let mut sym = [0u8; 32];
                for (j, c) in p.chars().enumerate() {
                    sym[j] = c.to_digit(16).unwrap() as u8;
                }
                sym[24] = (i / 256) as u8 % 16;
                sym[28] = ((i / 16) % 16) as u8;
                sym[31] = (i % 16) as u8;
                NybbleSeq::new(sym).unwrap()
            })
            .collect();
        let groups = group_by_prefix(&set, 8);
        assert_eq!(groups.len(), 7);
        let total: usize = groups.values().map(|g| g.len()).sum();
        assert_eq!(total, set.len());
        // disjointness: every member is in exactly the group of its own prefix
        for (prefix, group) in &groups {
            assert!(group.iter().all(|s| s.starts_with(prefix)));
        }
    }

    #[test]
    fn classifies_fixed_iid_sample() {
        // one maximal zero run (length 13) in the IID
        assert_eq!(
            classify_manual(&nyb("20010db8002000030000000000000301")),
            SchemeLabel::FixedIid
        );
    }

    #[test]
    fn classifies_eui64_marker_first() {
        // fffe at nybbles 22..26 wins regardless of the rest
        assert_eq!(
            classify_manual(&nyb("20010db80020000302591afffe030201")),
            SchemeLabel::SlaacEui64
        );
    }

    #[test]
    fn classifies_privacy_by_entropy() {
        // 16 distinct symbols: entropy 1.0 > 0.8
        assert_eq!(
            classify_manual(&nyb("20010db8002000030123456789abcdef")),
            SchemeLabel::SlaacPrivacy
        );
    }

    #[test]
    fn classifies_split_zero_runs_as_subnet() {
        // IID 0020000000000001: runs of 2 and 11 zeros
        assert_eq!(
            classify_manual(&nyb("20010db8002000030020000000000001")),
            SchemeLabel::Low64Subnet
        );
    }

    #[test]
    fn classifies_runless_iid_as_other() {
        // no zero run of length >= 2, entropy below threshold
        assert_eq!(
            classify_manual(&nyb("20010db800200003a1a2a1a2a1a2a1a2")),
            SchemeLabel::Other
        );
    }

    #[test]
    fn iid_entropy_hand_values() {
        assert_eq!(address_char_entropy(&[0u8; 16]), 0.0);
        let distinct: Vec<u8> = (0..16).collect();
        assert!((address_char_entropy(&distinct) - 1.0).abs() < 1e-12);
        let two = [[0xau8; 8], [0xbu8; 8]].concat();
        assert!((address_char_entropy(&two) - 0.25).abs() < 1e-12);
    }

    fn fp_at(values: Vec<f64>) -> EntropyFingerprint {
        EntropyFingerprint {
            prefix: "20010db8".parse().unwrap(),
            start: 8,
            end: 8 + values.len(),
            values,
            support: 100,
        }
    }

    fn blob(center: &[f64], n: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<EntropyFingerprint> {
        (0..n)
            .map(|_| {
                fp_at(
                    center
                        .iter()
                        .map(|&c| c + spread * (rng.random::<f64>() - 0.5))
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn k1_centroid_is_the_mean() {
        let fps = vec![
            fp_at(vec![0.0, 0.0]),
            fp_at(vec![1.0, 0.0]),
            fp_at(vec![0.0, 1.0]),
            fp_at(vec![1.0, 1.0]),
        ];
        let m = kmeans(&fps, 1, 42).unwrap();
        assert_eq!(m.centroids, vec![vec![0.5, 0.5]]);
        // SSE = sum of squared distances to the mean
        assert!((m.sse - 4.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut fps = blob(&[0.1, 0.1, 0.1], 20, 0.02, &mut rng);
        fps.extend(blob(&[0.9, 0.9, 0.9], 20, 0.02, &mut rng));
        let m = kmeans(&fps, 2, 1).unwrap();
        let first = m.assignments[0];
        assert!(m.assignments[..20].iter().all(|&a| a == first));
        assert!(m.assignments[20..].iter().all(|&a| a != first));
    }

    #[test]
    fn k_equals_n_gives_zero_sse() {
        let fps: Vec<_> = (0..6)
            .map(|i| fp_at(vec![i as f64, (i * i) as f64]))
            .collect();
        let m = kmeans(&fps, 6, 7).unwrap();
        assert_eq!(m.sse, 0.0);
    }

    #[test]
    fn too_few_groups_is_rejected() {
        let fps = vec![fp_at(vec![0.0]), fp_at(vec![1.0])];
        assert_eq!(
            kmeans(&fps, 3, 0),
            Err(SeedClassError::TooFewGroups { groups: 2, k: 3 })
        );
    }

    #[test]
    fn sse_is_monotone_and_reruns_are_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut fps = blob(&[0.2; 4], 30, 0.3, &mut rng);
        fps.extend(blob(&[0.8; 4], 30, 0.3, &mut rng));
        let a = kmeans(&fps, 4, 99).unwrap();
        let b = kmeans(&fps, 4, 99).unwrap();
        assert_eq!(a, b);
        for w in a.sse_per_iter.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "SSE increased: {:?}",
                a.sse_per_iter
            );
        }
    }

    #[test]
    fn elbow_finds_three_blobs() {
        // regimes are high-entropy in different positions, so the centers
        // sit near mutually equidistant corners rather than on a line
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut fps = blob(&[0.9, 0.1, 0.1, 0.1], 15, 0.02, &mut rng);
        fps.extend(blob(&[0.1, 0.9, 0.1, 0.1], 15, 0.02, &mut rng));
        fps.extend(blob(&[0.1, 0.1, 0.9, 0.1], 15, 0.02, &mut rng));
        let res = elbow(&fps, 8, 4).unwrap();
        assert_eq!(res.sse_curve.len(), 8);
        assert_eq!(res.chosen_k, 3);
    }

    #[test]
    fn elbow_boundary_kmax_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let fps = blob(&[0.5, 0.5], 25, 0.1, &mut rng);
        let res = elbow(&fps, 2, 8).unwrap();
        assert_eq!(res.sse_curve.len(), 2);
        assert!(res.chosen_k == 1 || res.chosen_k == 2);
    }

    #[test]
    fn centroid_export_has_24_decimals() {
        let c = vec![0.5; 24];
        let rendered = render_centroid(&c);
        assert_eq!(rendered.split(',').count(), 24);
        assert!(rendered.starts_with("0.500000,"));
    }

    #[test]
    fn class_report_lists_every_category() {
        let set = set_of(&[
            "20010db8002000030000000000000301",
            "20010db8002000030123456789abcdef",
        ]);
        let by_label = classify_set(&set);
        let counts: BTreeMap<SchemeLabel, usize> =
            by_label.iter().map(|(l, s)| (*l, s.len())).collect();
        let report = render_class_report(&counts);
        assert_eq!(report.lines().count(), 6);
        assert!(report.contains("fixed-iid"));
        assert!(report.contains("50.00%"));
    }
}
