//! IPv6 address representations and seed-set ingestion.
//!
//! An address moves between four forms: textual (any valid presentation
//! format on input, one canonical form on output), the 128-bit value
//! [`Ipv6Address`], the 32-symbol hexadecimal [`NybbleSeq`], and the 32×16
//! indicator [`OneHotGrid`] consumed by the model. All conversions are exact
//! and invertible.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexSet;
use thiserror::Error;

/// Number of nybbles (hex digits) in an IPv6 address.
pub const NYBBLES: usize = 32;
/// Size of the nybble alphabet Ω = {0, 1, ..., f}.
pub const ALPHABET: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AddrError {
    #[error("malformed address: {0}")]
    Malformed(String),
}

fn malformed(reason: impl Into<String>) -> AddrError {
    AddrError::Malformed(reason.into())
}

/// Errors from line-oriented seed loading.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("line {line}: {source}")]
    Malformed { line: usize, source: AddrError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One IPv6 address as its 128-bit value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ipv6Address(u128);

impl Ipv6Address {
    pub const fn from_bits(bits: u128) -> Self {
        Ipv6Address(bits)
    }

    pub const fn bits(self) -> u128 {
        self.0
    }

    /// The eight 16-bit groups, most significant first.
    pub fn groups(self) -> [u16; 8] {
        let mut g = [0u16; 8];
        for (i, slot) in g.iter_mut().enumerate() {
            *slot = (self.0 >> (112 - 16 * i)) as u16;
        }
        g
    }

    /// The 32 nybbles, most significant first.
    pub fn to_nybbles(self) -> NybbleSeq {
        let mut sym = [0u8; NYBBLES];
        for (i, slot) in sym.iter_mut().enumerate() {
            *slot = ((self.0 >> (124 - 4 * i)) & 0xf) as u8;
        }
        NybbleSeq(sym)
    }

    pub fn from_nybbles(seq: NybbleSeq) -> Self {
        let mut bits = 0u128;
        for &s in seq.symbols() {
            bits = (bits << 4) | u128::from(s);
        }
        Ipv6Address(bits)
    }
}

impl From<std::net::Ipv6Addr> for Ipv6Address {
    fn from(a: std::net::Ipv6Addr) -> Self {
        Ipv6Address(a.to_bits())
    }
}

impl From<Ipv6Address> for std::net::Ipv6Addr {
    fn from(a: Ipv6Address) -> Self {
        std::net::Ipv6Addr::from_bits(a.0)
    }
}

impl FromStr for Ipv6Address {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, AddrError> {
        parse_text(s)
    }
}

impl fmt::Display for Ipv6Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_canonical(*self))
    }
}

impl fmt::Debug for Ipv6Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ipv6Address({self})")
    }
}

/// The colon-free form of one address: exactly 32 symbols over Ω.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NybbleSeq([u8; NYBBLES]);

impl NybbleSeq {
    /// Wraps raw symbol values; every value must be below 16.
    pub fn new(symbols: [u8; NYBBLES]) -> Result<Self, AddrError> {
        if let Some(bad) = symbols.iter().find(|&&s| s >= 16) {
            return Err(malformed(format!("symbol value {bad} outside 0..16")));
        }
        Ok(NybbleSeq(symbols))
    }

    pub fn symbols(&self) -> &[u8; NYBBLES] {
        &self.0
    }

    /// The interface identifier: the last 16 nybbles.
    pub fn iid(&self) -> &[u8] {
        &self.0[16..]
    }

    pub fn to_address(self) -> Ipv6Address {
        Ipv6Address::from_nybbles(self)
    }

    /// The first `len` nybbles as a prefix.
    pub fn prefix(&self, len: usize) -> NybblePrefix {
        assert!(len >= 1 && len < NYBBLES, "prefix length {len} outside 1..32");
        NybblePrefix(self.0[..len].to_vec())
    }

    pub fn starts_with(&self, p: &NybblePrefix) -> bool {
        self.0.starts_with(&p.0)
    }
}

impl From<Ipv6Address> for NybbleSeq {
    fn from(a: Ipv6Address) -> Self {
        a.to_nybbles()
    }
}

impl FromStr for NybbleSeq {
    type Err = AddrError;

    /// Parses exactly 32 hex digits (either case).
    fn from_str(s: &str) -> Result<Self, AddrError> {
        if s.len() != NYBBLES {
            return Err(malformed(format!("expected 32 nybbles, got {}", s.len())));
        }
        let mut sym = [0u8; NYBBLES];
        for (slot, c) in sym.iter_mut().zip(s.chars()) {
            *slot = c
                .to_digit(16)
                .ok_or_else(|| malformed(format!("invalid character {c:?}")))? as u8;
        }
        Ok(NybbleSeq(sym))
    }
}

impl fmt::Display for NybbleSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.0 {
            write!(f, "{s:x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for NybbleSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NybbleSeq({self})")
    }
}

/// A leading run of nybbles shared by a group of addresses.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NybblePrefix(Vec<u8>);

impl NybblePrefix {
    pub fn new(nybbles: Vec<u8>) -> Result<Self, AddrError> {
        if nybbles.is_empty() || nybbles.len() >= NYBBLES {
            return Err(malformed(format!(
                "prefix length {} outside 1..32",
                nybbles.len()
            )));
        }
        if let Some(bad) = nybbles.iter().find(|&&s| s >= 16) {
            return Err(malformed(format!("symbol value {bad} outside 0..16")));
        }
        Ok(NybblePrefix(nybbles))
    }

    pub fn nybbles(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl FromStr for NybblePrefix {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, AddrError> {
        let mut nybbles = Vec::with_capacity(s.len());
        for c in s.chars() {
            nybbles.push(
                c.to_digit(16)
                    .ok_or_else(|| malformed(format!("invalid character {c:?}")))?
                    as u8,
            );
        }
        NybblePrefix::new(nybbles)
    }
}

impl fmt::Display for NybblePrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.0 {
            write!(f, "{s:x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for NybblePrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NybblePrefix({self})")
    }
}

/// Parses any valid IPv6 presentation form: full 8-group, zero-compressed
/// via one `::`, leading zeros omitted, and an optional embedded IPv4
/// dotted quad in the final position.
pub fn parse_text(text: &str) -> Result<Ipv6Address, AddrError> {
    if text.is_empty() {
        return Err(malformed("empty input"));
    }
    if !text.is_ascii() {
        return Err(malformed("non-ASCII character"));
    }

    let (head, tail, compressed) = match text.find("::") {
        Some(i) => {
            let rest = &text[i + 2..];
            if rest.contains("::") {
                return Err(malformed("more than one \"::\""));
            }
            (&text[..i], rest, true)
        }
        None => (text, "", false),
    };

    // An IPv4 dotted quad may only occupy the final position of the address.
    let head_groups = parse_section(head, !compressed)?;
    let tail_groups = parse_section(tail, compressed)?;

    let total = head_groups.len() + tail_groups.len();
    if compressed {
        if total > 7 {
            return Err(malformed("too many groups"));
        }
    } else if total != 8 {
        return Err(malformed(if total < 8 {
            "too few groups"
        } else {
            "too many groups"
        }));
    }

    let mut groups = [0u16; 8];
    groups[..head_groups.len()].copy_from_slice(&head_groups);
    groups[8 - tail_groups.len()..].copy_from_slice(&tail_groups);

    let bits = groups
        .iter()
        .fold(0u128, |acc, &g| (acc << 16) | u128::from(g));
    Ok(Ipv6Address(bits))
}

fn parse_section(part: &str, v4_allowed: bool) -> Result<Vec<u16>, AddrError> {
    if part.is_empty() {
        return Ok(Vec::new());
    }
    let tokens: Vec<&str> = part.split(':').collect();
    let mut groups = Vec::with_capacity(tokens.len() + 1);
    let last = tokens.len() - 1;
    for (i, tok) in tokens.iter().enumerate() {
        if tok.is_empty() {
            return Err(malformed("empty group"));
        }
        if tok.contains('.') {
            if !(v4_allowed && i == last) {
                return Err(malformed("IPv4 tail only allowed in final position"));
            }
            groups.extend(parse_v4_tail(tok)?);
        } else {
            groups.push(parse_hex_group(tok)?);
        }
    }
    Ok(groups)
}

fn parse_hex_group(tok: &str) -> Result<u16, AddrError> {
    if tok.len() > 4 {
        return Err(malformed("group longer than 4 hex digits"));
    }
    let mut v: u16 = 0;
    for c in tok.chars() {
        let d = c
            .to_digit(16)
            .ok_or_else(|| malformed(format!("invalid character {c:?}")))?;
        v = (v << 4) | d as u16;
    }
    Ok(v)
}

fn parse_v4_tail(tok: &str) -> Result<[u16; 2], AddrError> {
    let octets: Vec<&str> = tok.split('.').collect();
    if octets.len() != 4 {
        return Err(malformed("invalid IPv4 tail"));
    }
    let mut bytes = [0u8; 4];
    for (slot, o) in bytes.iter_mut().zip(&octets) {
        if o.is_empty()
            || o.len() > 3
            || (o.len() > 1 && o.starts_with('0'))
            || !o.bytes().all(|c| c.is_ascii_digit())
        {
            return Err(malformed("invalid IPv4 tail"));
        }
        let v: u16 = o.parse().map_err(|_| malformed("invalid IPv4 tail"))?;
        if v > 255 {
            return Err(malformed("invalid IPv4 tail"));
        }
        *slot = v as u8;
    }
    Ok([
        u16::from_be_bytes([bytes[0], bytes[1]]),
        u16::from_be_bytes([bytes[2], bytes[3]]),
    ])
}

/// The single canonical textual form: lowercase hex, the leftmost longest
/// run of two or more zero groups compressed to `::`, never a dotted quad.
/// Injective over addresses, so canonical strings can stand in for values.
pub fn format_canonical(addr: Ipv6Address) -> String {
    let groups = addr.groups();

    let mut best: Option<(usize, usize)> = None; // (start, len)
    let mut i = 0;
    while i < 8 {
        if groups[i] == 0 {
            let start = i;
            while i < 8 && groups[i] == 0 {
                i += 1;
            }
            let len = i - start;
            if len >= 2 && best.is_none_or(|(_, blen)| len > blen) {
                best = Some((start, len));
            }
        } else {
            i += 1;
        }
    }

    let mut out = String::with_capacity(39);
    match best {
        Some((start, len)) => {
            for (i, g) in groups[..start].iter().enumerate() {
                if i > 0 {
                    out.push(':');
                }
                out.push_str(&format!("{g:x}"));
            }
            out.push_str("::");
            for (i, g) in groups[start + len..].iter().enumerate() {
                if i > 0 {
                    out.push(':');
                }
                out.push_str(&format!("{g:x}"));
            }
        }
        None => {
            for (i, g) in groups.iter().enumerate() {
                if i > 0 {
                    out.push(':');
                }
                out.push_str(&format!("{g:x}"));
            }
        }
    }
    out
}

/// The model input space: row i is the indicator vector of nybble i.
#[derive(Clone, PartialEq, Eq)]
pub struct OneHotGrid {
    cells: [[u8; ALPHABET]; NYBBLES],
}

impl OneHotGrid {
    pub fn get(&self, position: usize, symbol: usize) -> u8 {
        self.cells[position][symbol]
    }

    pub fn row(&self, position: usize) -> &[u8; ALPHABET] {
        &self.cells[position]
    }

    /// Inverts the encoding; every row has exactly one set cell.
    pub fn to_seq(&self) -> NybbleSeq {
        let mut sym = [0u8; NYBBLES];
        for (slot, row) in sym.iter_mut().zip(&self.cells) {
            *slot = row.iter().position(|&v| v == 1).expect("one-hot row") as u8;
        }
        NybbleSeq(sym)
    }
}

impl fmt::Debug for OneHotGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OneHotGrid({})", self.to_seq())
    }
}

/// Encodes a nybble sequence as its 32×16 indicator grid.
pub fn encode_onehot(seq: &NybbleSeq) -> OneHotGrid {
    let mut cells = [[0u8; ALPHABET]; NYBBLES];
    for (row, &s) in cells.iter_mut().zip(seq.symbols()) {
        row[s as usize] = 1;
    }
    OneHotGrid { cells }
}

/// A duplicate-free set of seed addresses, in first-seen order.
#[derive(Clone, Debug, Default)]
pub struct SeedSet {
    members: IndexSet<NybbleSeq>,
    source_label: String,
}

impl SeedSet {
    pub fn new(label: impl Into<String>) -> Self {
        SeedSet {
            members: IndexSet::new(),
            source_label: label.into(),
        }
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn set_source_label(&mut self, label: impl Into<String>) {
        self.source_label = label.into();
    }

    /// Inserts a member; returns false if it was already present.
    pub fn insert(&mut self, seq: NybbleSeq) -> bool {
        self.members.insert(seq)
    }

    pub fn contains(&self, seq: &NybbleSeq) -> bool {
        self.members.contains(seq)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NybbleSeq> + '_ {
        self.members.iter()
    }

    pub fn get_index(&self, i: usize) -> Option<&NybbleSeq> {
        self.members.get_index(i)
    }
}

impl FromIterator<NybbleSeq> for SeedSet {
    fn from_iter<T: IntoIterator<Item = NybbleSeq>>(iter: T) -> Self {
        SeedSet {
            members: iter.into_iter().collect(),
            source_label: String::new(),
        }
    }
}

/// How the loader reacts to lines that fail to parse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Skip malformed lines and count them.
    #[default]
    Lenient,
    /// Abort on the first malformed line.
    Strict,
}

/// Per-load accounting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    /// Lines that parsed as addresses, duplicates included.
    pub parsed: usize,
    /// Parsed addresses already present in the set.
    pub duplicates: usize,
    /// Lines that failed to parse (always 0 in strict mode).
    pub malformed: usize,
}

/// Loads a newline-delimited address file. Blank lines and lines starting
/// with `#` are skipped; everything else must be a textual IPv6 address.
pub fn load_seed_set<R: BufRead>(
    source: R,
    mode: LoadMode,
) -> Result<(SeedSet, LoadStats), LoadError> {
    let mut set = SeedSet::default();
    let mut stats = LoadStats::default();
    for (idx, line) in source.split(b'\n').enumerate() {
        let raw = line?;
        let text = match std::str::from_utf8(&raw) {
            Ok(t) => t.trim(),
            Err(_) => {
                if mode == LoadMode::Strict {
                    return Err(LoadError::Malformed {
                        line: idx + 1,
                        source: malformed("invalid UTF-8"),
                    });
                }
                stats.malformed += 1;
                continue;
            }
        };
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        match parse_text(text) {
            Ok(addr) => {
                stats.parsed += 1;
                if !set.insert(addr.to_nybbles()) {
                    stats.duplicates += 1;
                }
            }
            Err(e) => {
                if mode == LoadMode::Strict {
                    return Err(LoadError::Malformed {
                        line: idx + 1,
                        source: e,
                    });
                }
                stats.malformed += 1;
            }
        }
    }
    Ok((set, stats))
}

/// [`load_seed_set`] over a file, labeling the set with the path.
pub fn load_seed_file(
    path: impl AsRef<Path>,
    mode: LoadMode,
) -> Result<(SeedSet, LoadStats), LoadError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let (mut set, stats) = load_seed_set(io::BufReader::new(file), mode)?;
    set.set_source_label(path.display().to_string());
    Ok((set, stats))
}

/// Writes one canonical address per line, no header: a scanner target list.
pub fn write_target_list<W: Write, I>(mut out: W, addrs: I) -> io::Result<()>
where
    I: IntoIterator<Item = NybbleSeq>,
{
    for seq in addrs {
        writeln!(out, "{}", format_canonical(seq.to_address()))?;
    }
    Ok(())
}
