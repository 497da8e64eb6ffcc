//! Partial top orderings and rankings, dataset manipulation and descriptive
//! summaries.
//!
//! Items are labelled `1..=K` and missing positions are coded as `0`. An
//! *ordering* lists items from most to least preferred; a *ranking* gives the
//! position of each item (rank 1 is most liked). A top-(K-1) sequence carries
//! the same information as a complete one, so it is completed on ingestion and
//! every stored row has a depth in `{1, .., K-2, K}`.
//!
//! Vectors indexed by item (`gamma`, `missing_positions`, supports, ...) use
//! position `i` for item `i + 1`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the two inverse views a matrix of sequences uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Ordering,
    Ranking,
}

impl Format {
    pub fn opposite(self) -> Format {
        match self {
            Format::Ordering => Format::Ranking,
            Format::Ranking => Format::Ordering,
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Format::Ordering => f.write_str("ordering"),
            Format::Ranking => f.write_str("ranking"),
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ordering" | "orderings" => Ok(Format::Ordering),
            "ranking" | "rankings" => Ok(Format::Ranking),
            other => Err(Error::InvalidArgument(format!(
                "unknown format '{other}' (expected 'ordering' or 'ranking')"
            ))),
        }
    }
}

/// Validates an ordering row in place and completes a top-(K-1) prefix.
/// Returns the number of ranked items. `row_no` is only used in error messages.
pub(crate) fn normalize_ordering(row: &mut [u32], row_no: usize) -> Result<usize> {
    let k = row.len();
    if k == 0 {
        return Err(Error::Dimension("sequences must have at least one column".into()));
    }
    let mut seen = vec![false; k];
    let mut ranked = 0usize;
    let mut ended = false;
    for &v in row.iter() {
        if v == 0 {
            ended = true;
            continue;
        }
        if ended {
            return Err(Error::NonPrefix { row: row_no });
        }
        if v as usize > k {
            return Err(Error::EntryOutOfRange { row: row_no, value: v, k });
        }
        if seen[v as usize - 1] {
            return Err(Error::DuplicateEntry { row: row_no, value: v });
        }
        seen[v as usize - 1] = true;
        ranked += 1;
    }
    if ranked == 0 {
        return Err(Error::EmptyRow { row: row_no });
    }
    if ranked + 1 == k {
        let last = seen.iter().position(|&s| !s).expect("one item left") as u32 + 1;
        row[k - 1] = last;
        ranked = k;
    }
    Ok(ranked)
}

/// Ranking counterpart of [`normalize_ordering`].
pub(crate) fn normalize_ranking(row: &mut [u32], row_no: usize) -> Result<usize> {
    let k = row.len();
    if k == 0 {
        return Err(Error::Dimension("sequences must have at least one column".into()));
    }
    let mut seen = vec![false; k];
    let mut ranked = 0usize;
    for &v in row.iter() {
        if v == 0 {
            continue;
        }
        if v as usize > k {
            return Err(Error::EntryOutOfRange { row: row_no, value: v, k });
        }
        if seen[v as usize - 1] {
            return Err(Error::DuplicateEntry { row: row_no, value: v });
        }
        seen[v as usize - 1] = true;
        ranked += 1;
    }
    if ranked == 0 {
        return Err(Error::EmptyRow { row: row_no });
    }
    if seen[..ranked].iter().any(|&s| !s) {
        return Err(Error::RankGap { row: row_no });
    }
    if ranked + 1 == k {
        let slot = row.iter().position(|&v| v == 0).expect("one item left");
        row[slot] = k as u32;
        ranked = k;
    }
    Ok(ranked)
}

fn ordering_to_ranking(ordering: &[u32]) -> Vec<u32> {
    let mut ranking = vec![0; ordering.len()];
    for (pos, &item) in ordering.iter().enumerate() {
        if item != 0 {
            ranking[item as usize - 1] = pos as u32 + 1;
        }
    }
    ranking
}

fn ranking_to_ordering(ranking: &[u32]) -> Vec<u32> {
    let mut ordering = vec![0; ranking.len()];
    for (item, &rank) in ranking.iter().enumerate() {
        if rank != 0 {
            ordering[rank as usize - 1] = item as u32 + 1;
        }
    }
    ordering
}

/// A top-t partial ordering: entry `j` holds the item ranked `j + 1`-th.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartialOrdering {
    entries: Vec<u32>,
    nranked: usize,
}

impl PartialOrdering {
    pub fn new(mut entries: Vec<u32>) -> Result<Self> {
        let nranked = normalize_ordering(&mut entries, 1)?;
        Ok(Self { entries, nranked })
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn nranked(&self) -> usize {
        self.nranked
    }

    /// The ranked prefix.
    pub fn ranked(&self) -> &[u32] {
        &self.entries[..self.nranked]
    }

    pub fn is_complete(&self) -> bool {
        self.nranked == self.entries.len()
    }

    pub fn to_ranking(&self) -> PartialRanking {
        PartialRanking {
            entries: ordering_to_ranking(&self.entries),
            nranked: self.nranked,
        }
    }
}

/// A partial ranking: entry `i` holds the rank of item `i + 1`, `0` if unranked.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartialRanking {
    entries: Vec<u32>,
    nranked: usize,
}

impl PartialRanking {
    pub fn new(mut entries: Vec<u32>) -> Result<Self> {
        let nranked = normalize_ranking(&mut entries, 1)?;
        Ok(Self { entries, nranked })
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn nranked(&self) -> usize {
        self.nranked
    }

    pub fn to_ordering(&self) -> PartialOrdering {
        PartialOrdering {
            entries: ranking_to_ordering(&self.entries),
            nranked: self.nranked,
        }
    }
}

/// Converts every row of `rows` (declared to be in `format`) to the opposite
/// format. Rows are validated and top-(K-1) rows completed first.
pub fn ord_rank_switch(rows: &[Vec<u32>], format: Format) -> Result<Vec<Vec<u32>>> {
    let k = common_width(rows)?;
    rows.iter()
        .enumerate()
        .map(|(s, row)| {
            let mut row = row.clone();
            debug_assert_eq!(row.len(), k);
            match format {
                Format::Ordering => {
                    normalize_ordering(&mut row, s + 1)?;
                    Ok(ordering_to_ranking(&row))
                }
                Format::Ranking => {
                    normalize_ranking(&mut row, s + 1)?;
                    Ok(ranking_to_ordering(&row))
                }
            }
        })
        .collect()
}

fn common_width(rows: &[Vec<u32>]) -> Result<usize> {
    let k = rows.first().map(Vec::len).unwrap_or(0);
    if let Some(s) = rows.iter().position(|r| r.len() != k) {
        return Err(Error::Dimension(format!(
            "row {} has {} columns, expected {k}",
            s + 1,
            rows[s].len()
        )));
    }
    Ok(k)
}

/// A sample of N partial top orderings over K items.
///
/// Each row is stored as a full permutation: the ranked prefix followed by the
/// unranked items in increasing order. This lets stage rates be computed as
/// suffix sums without any set bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    k: usize,
    order: Vec<u32>,
    nranked: Vec<usize>,
}

impl Dataset {
    fn with_capacity(k: usize, n: usize) -> Self {
        Self {
            k,
            order: Vec::with_capacity(n * k),
            nranked: Vec::with_capacity(n),
        }
    }

    /// Appends a validated prefix (already completed if it had length K-1).
    pub(crate) fn push_prefix(&mut self, prefix: &[u32]) {
        let k = self.k;
        debug_assert!(!prefix.is_empty() && prefix.len() <= k && prefix.len() + 1 != k);
        let mut ranked = vec![false; k];
        for &item in prefix {
            ranked[item as usize - 1] = true;
        }
        self.order.extend_from_slice(prefix);
        self.order.extend(
            (1..=k as u32).filter(|&item| !ranked[item as usize - 1]),
        );
        self.nranked.push(prefix.len());
    }

    /// Appends a complete ordering truncated to `depth` ranked items.
    pub(crate) fn push_truncated(&mut self, full: &[u32], depth: usize) {
        let depth = if depth + 1 == self.k { self.k } else { depth };
        self.push_prefix(&full[..depth]);
    }

    pub(crate) fn empty(k: usize) -> Self {
        Self::with_capacity(k, 0)
    }

    pub fn from_orderings(rows: &[Vec<u32>]) -> Result<Self> {
        let k = common_width(rows)?;
        if rows.is_empty() {
            return Err(Error::InvalidArgument("a dataset needs at least one row".into()));
        }
        let mut data = Self::with_capacity(k, rows.len());
        let mut buf = vec![0u32; k];
        for (s, row) in rows.iter().enumerate() {
            buf.copy_from_slice(row);
            let n = normalize_ordering(&mut buf, s + 1)?;
            data.push_prefix(&buf[..n]);
        }
        Ok(data)
    }

    pub fn from_rankings(rows: &[Vec<u32>]) -> Result<Self> {
        let orderings = ord_rank_switch(rows, Format::Ranking)?;
        Self::from_orderings(&orderings)
    }

    pub fn from_format(rows: &[Vec<u32>], format: Format) -> Result<Self> {
        match format {
            Format::Ordering => Self::from_orderings(rows),
            Format::Ranking => Self::from_rankings(rows),
        }
    }

    pub fn from_freq(freq: &FreqTable, format: Format) -> Result<Self> {
        Self::from_format(&freq_to_unit(freq), format)
    }

    pub fn n(&self) -> usize {
        self.nranked.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nranked(&self) -> &[usize] {
        &self.nranked
    }

    /// Items ranked by unit `s`, most liked first.
    pub fn ranked(&self, s: usize) -> &[u32] {
        let start = s * self.k;
        &self.order[start..start + self.nranked[s]]
    }

    /// Items left unranked by unit `s`, in increasing label order.
    pub fn unranked(&self, s: usize) -> &[u32] {
        let start = s * self.k;
        &self.order[start + self.nranked[s]..start + self.k]
    }

    /// Ranked prefix followed by the unranked items.
    pub(crate) fn full_order(&self, s: usize) -> &[u32] {
        &self.order[s * self.k..(s + 1) * self.k]
    }

    pub fn ordering(&self, s: usize) -> PartialOrdering {
        PartialOrdering {
            entries: self.ordering_row(s),
            nranked: self.nranked[s],
        }
    }

    /// Zero-padded ordering row of unit `s`.
    pub fn ordering_row(&self, s: usize) -> Vec<u32> {
        let mut row = self.ranked(s).to_vec();
        row.resize(self.k, 0);
        row
    }

    pub fn ranking_row(&self, s: usize) -> Vec<u32> {
        ordering_to_ranking(&self.ordering_row(s))
    }

    pub fn to_orderings(&self) -> Vec<Vec<u32>> {
        (0..self.n()).map(|s| self.ordering_row(s)).collect()
    }

    pub fn to_rankings(&self) -> Vec<Vec<u32>> {
        (0..self.n()).map(|s| self.ranking_row(s)).collect()
    }

    pub fn to_format(&self, format: Format) -> Vec<Vec<u32>> {
        match format {
            Format::Ordering => self.to_orderings(),
            Format::Ranking => self.to_rankings(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.nranked.iter().all(|&n| n == self.k)
    }

    /// r_i: number of units ranking item `i + 1` first.
    pub fn top_choice_counts(&self) -> Vec<u64> {
        let mut r = vec![0u64; self.k];
        for s in 0..self.n() {
            r[self.order[s * self.k] as usize - 1] += 1;
        }
        r
    }

    /// Items still available at stage `t` (1-based) for unit `s`: those not
    /// among the first `t - 1` ranked items.
    pub fn available_items(&self, s: usize, t: usize) -> Vec<u32> {
        assert!(t >= 1 && t <= self.nranked[s], "stage {t} outside 1..={}", self.nranked[s]);
        let mut items = self.full_order(s)[t - 1..].to_vec();
        items.sort_unstable();
        items
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut out = Self::with_capacity(self.k, rows.len());
        for &s in rows {
            out.order.extend_from_slice(self.full_order(s));
            out.nranked.push(self.nranked[s]);
        }
        out
    }

    /// Unit indices grouped by number of ranked items.
    pub fn depth_strata(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (s, &n) in self.nranked.iter().enumerate() {
            strata.entry(n).or_default().push(s);
        }
        strata
    }
}

/// Frequency distribution of distinct sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreqTable {
    k: usize,
    sequences: Vec<Vec<u32>>,
    counts: Vec<u64>,
}

impl FreqTable {
    pub fn new(sequences: Vec<Vec<u32>>, counts: Vec<u64>) -> Result<Self> {
        if sequences.len() != counts.len() {
            return Err(Error::Dimension(format!(
                "{} sequences but {} counts",
                sequences.len(),
                counts.len()
            )));
        }
        let k = common_width(&sequences)?;
        if let Some(m) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidArgument(format!(
                "frequency table row {} has nonpositive count",
                m + 1
            )));
        }
        let mut seen = HashMap::with_capacity(sequences.len());
        for (m, seq) in sequences.iter().enumerate() {
            if let Some(prev) = seen.insert(seq.as_slice(), m) {
                return Err(Error::InvalidArgument(format!(
                    "frequency table rows {} and {} are identical",
                    prev + 1,
                    m + 1
                )));
            }
        }
        Ok(Self { k, sequences, counts })
    }

    /// Aggregates raw rows; distinct rows are listed in lexicographic order.
    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let k = common_width(rows)?;
        let mut tally: BTreeMap<&[u32], u64> = BTreeMap::new();
        for row in rows {
            *tally.entry(row.as_slice()).or_default() += 1;
        }
        let (sequences, counts) = tally.into_iter().map(|(s, c)| (s.to_vec(), c)).unzip();
        Ok(Self { k, sequences, counts })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn sequences(&self) -> &[Vec<u32>] {
        &self.sequences
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn unit_to_freq(data: &Dataset) -> FreqTable {
    FreqTable::from_rows(&data.to_orderings()).expect("dataset rows share K")
}

/// Expands a frequency table, replicating each sequence `count` times in
/// table order.
pub fn freq_to_unit(freq: &FreqTable) -> Vec<Vec<u32>> {
    let mut rows = Vec::with_capacity(freq.total() as usize);
    for (seq, &count) in freq.sequences.iter().zip(&freq.counts) {
        rows.extend(std::iter::repeat_n(seq.clone(), count as usize));
    }
    rows
}

/// How complete orderings are censored by [`make_partial`].
#[derive(Debug, Clone, PartialEq)]
pub enum Censoring {
    /// Number of top positions kept for each unit.
    Depths(Vec<usize>),
    /// Probabilities of top-1, .., top-(K-2) truncation, the last entry being
    /// the probability of keeping the complete ordering (length K-1).
    Probabilities(Vec<f64>),
}

/// Truncates complete orderings, either to given depths or to depths drawn
/// independently from censoring probabilities.
pub fn make_partial<R: Rng + ?Sized>(
    data: &Dataset,
    censoring: &Censoring,
    rng: &mut R,
) -> Result<Dataset> {
    let k = data.k;
    if let Some(s) = (0..data.n()).find(|&s| data.nranked[s] != k) {
        return Err(Error::InvalidArgument(format!(
            "make_partial expects complete orderings; row {} ranks {} of {k} items",
            s + 1,
            data.nranked[s]
        )));
    }
    let depths: Vec<usize> = match censoring {
        Censoring::Depths(depths) => {
            if depths.len() != data.n() {
                return Err(Error::Dimension(format!(
                    "{} depths for {} units",
                    depths.len(),
                    data.n()
                )));
            }
            if let Some(&d) = depths.iter().find(|&&d| d == 0 || d > k) {
                return Err(Error::InvalidArgument(format!("depth {d} outside 1..={k}")));
            }
            depths.clone()
        }
        Censoring::Probabilities(probs) => {
            if k < 2 || probs.len() != k - 1 {
                return Err(Error::Dimension(format!(
                    "censoring probabilities must have length K-1 = {}, got {}",
                    k.saturating_sub(1),
                    probs.len()
                )));
            }
            if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidArgument(
                    "censoring probabilities must be nonnegative".into(),
                ));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidArgument(format!(
                    "censoring probabilities sum to {total}, expected 1"
                )));
            }
            let index = WeightedIndex::new(probs)
                .map_err(|e| Error::InvalidArgument(format!("censoring probabilities: {e}")))?;
            (0..data.n())
                .map(|_| {
                    let m = index.sample(rng);
                    if m + 1 == probs.len() {
                        k
                    } else {
                        m + 1
                    }
                })
                .collect()
        }
    };
    let mut out = Dataset::with_capacity(k, data.n());
    for (s, &depth) in depths.iter().enumerate() {
        out.push_truncated(data.full_order(s), depth);
    }
    Ok(out)
}

/// Orders `items` by a Plackett-Luce draw with the given supports (indexed by
/// item - 1), using independent exponential arrival times.
pub(crate) fn pl_shuffle<R: Rng + ?Sized>(items: &mut [u32], supports: &[f64], rng: &mut R) {
    if items.len() < 2 {
        return;
    }
    let mut keyed: Vec<(f64, u32)> = items
        .iter()
        .map(|&item| {
            let e: f64 = Exp1.sample(rng);
            (e / supports[item as usize - 1], item)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (slot, (_, item)) in items.iter_mut().zip(keyed) {
        *slot = item;
    }
}

/// Completes each partial ordering by sampling the unranked items without
/// replacement with probabilities proportional to `probitems`.
pub fn make_complete<R: Rng + ?Sized>(
    data: &Dataset,
    probitems: &[f64],
    rng: &mut R,
) -> Result<Dataset> {
    if probitems.len() != data.k {
        return Err(Error::Dimension(format!(
            "probitems has length {}, expected K = {}",
            probitems.len(),
            data.k
        )));
    }
    if let Some(i) = probitems.iter().position(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "probitems entry for item {} must be positive",
            i + 1
        )));
    }
    let k = data.k;
    let mut out = Dataset::with_capacity(k, data.n());
    let mut full = vec![0u32; k];
    for s in 0..data.n() {
        full.copy_from_slice(data.full_order(s));
        pl_shuffle(&mut full[data.nranked[s]..], probitems, rng);
        out.order.extend_from_slice(&full);
        out.nranked.push(k);
    }
    Ok(out)
}

/// Descriptive summaries of a partial ordering dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummaries {
    pub nranked: Vec<usize>,
    /// Number of units by depth (only observed depths are listed).
    pub nranked_distr: BTreeMap<usize, u64>,
    /// Number of units leaving each item unranked.
    pub missing_positions: Vec<u64>,
    /// Mean of the observed ranks of each item; `None` if never ranked.
    pub mean_rank: Vec<Option<f64>>,
    /// `marginal_rank_distr[r][i]`: units giving rank `r + 1` to item `i + 1`.
    pub marginal_rank_distr: Vec<Vec<u64>>,
    pub paired_comparisons: Vec<Vec<u64>>,
}

pub fn rank_summaries(data: &Dataset) -> RankSummaries {
    let k = data.k;
    let mut nranked_distr = BTreeMap::new();
    let mut missing = vec![0u64; k];
    let mut marginal = vec![vec![0u64; k]; k];
    let mut rank_sum = vec![0u64; k];
    for s in 0..data.n() {
        *nranked_distr.entry(data.nranked[s]).or_insert(0u64) += 1;
        for (pos, &item) in data.ranked(s).iter().enumerate() {
            marginal[pos][item as usize - 1] += 1;
            rank_sum[item as usize - 1] += pos as u64 + 1;
        }
        for &item in data.unranked(s) {
            missing[item as usize - 1] += 1;
        }
    }
    let mean_rank = (0..k)
        .map(|i| {
            let observed = data.n() as u64 - missing[i];
            (observed > 0).then(|| rank_sum[i] as f64 / observed as f64)
        })
        .collect();
    RankSummaries {
        nranked: data.nranked.clone(),
        nranked_distr,
        missing_positions: missing,
        mean_rank,
        marginal_rank_distr: marginal,
        paired_comparisons: paired_comparisons(data),
    }
}

/// τ\[i\]\[j\]: number of units preferring item `i + 1` to item `j + 1`; a ranked
/// item beats every unranked one and two unranked items are not compared.
pub fn paired_comparisons(data: &Dataset) -> Vec<Vec<u64>> {
    let k = data.k;
    let mut tau = vec![0u64; k * k];
    for s in 0..data.n() {
        accumulate_pairs(data.full_order(s), data.nranked[s], k, &mut tau);
    }
    tau.chunks(k).map(<[u64]>::to_vec).collect()
}

/// Adds the pairwise preferences implied by one row (full order + depth) to a
/// flat K×K matrix.
#[inline]
pub(crate) fn accumulate_pairs(full: &[u32], depth: usize, k: usize, tau: &mut [u64]) {
    for (j, &winner) in full[..depth].iter().enumerate() {
        let base = (winner as usize - 1) * k;
        for &loser in &full[j + 1..] {
            tau[base + loser as usize - 1] += 1;
        }
    }
}

/// One-hot encoding of 1-based component labels.
pub fn binary_group_ind(labels: &[usize], g: usize) -> Result<Vec<Vec<u8>>> {
    labels
        .iter()
        .enumerate()
        .map(|(s, &label)| {
            if label == 0 || label > g {
                return Err(Error::InvalidArgument(format!(
                    "label {label} of unit {} outside 1..={g}",
                    s + 1
                )));
            }
            let mut row = vec![0u8; g];
            row[label - 1] = 1;
            Ok(row)
        })
        .collect()
}

/// Incidence u_si and item totals γ_i of a dataset. The availability
/// indicators δ_sti are not materialized: item `i` is available at stages
/// `1..=exposure(s, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    k: usize,
    u: Vec<u8>,
    exposure: Vec<u32>,
    gamma: Vec<u64>,
}

impl SufficientStats {
    pub fn new(data: &Dataset) -> Self {
        let k = data.k;
        let mut u = vec![0u8; data.n() * k];
        let mut exposure = vec![0u32; data.n() * k];
        let mut gamma = vec![0u64; k];
        for s in 0..data.n() {
            let depth = data.nranked[s];
            for (pos, &item) in data.full_order(s).iter().enumerate() {
                let i = item as usize - 1;
                if pos < depth {
                    u[s * k + i] = 1;
                    gamma[i] += 1;
                }
                exposure[s * k + i] = (pos + 1).min(depth) as u32;
            }
        }
        Self { k, u, exposure, gamma }
    }

    /// u_si for item label `item` (1-based).
    pub fn u(&self, s: usize, item: usize) -> u8 {
        self.u[s * self.k + item - 1]
    }

    pub fn u_row(&self, s: usize) -> &[u8] {
        &self.u[s * self.k..(s + 1) * self.k]
    }

    /// Number of stages at which `item` (1-based) is still available for unit `s`.
    pub fn exposure(&self, s: usize, item: usize) -> usize {
        self.exposure[s * self.k + item - 1] as usize
    }

    /// δ_sti for 1-based stage `t` and item label `item`.
    pub fn delta(&self, s: usize, t: usize, item: usize) -> bool {
        t >= 1 && t <= self.exposure(s, item)
    }

    pub fn gamma(&self) -> &[u64] {
        &self.gamma
    }
}

pub fn sufficient_stats(data: &Dataset) -> SufficientStats {
    SufficientStats::new(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dublin_west_head_conversion() {
        let ord = vec![vec![7, 9, 4, 2, 8, 0, 0, 0, 0]];
        assert_eq!(
            ord_rank_switch(&ord, Format::Ordering).unwrap(),
            vec![vec![0, 4, 0, 3, 0, 0, 1, 5, 2]]
        );
    }

    #[test]
    fn complete_identity_switch() {
        let rows = vec![vec![1, 2, 3]];
        assert_eq!(ord_rank_switch(&rows, Format::Ordering).unwrap(), rows);
    }

    #[test]
    fn switch_rejects_invalid_rows() {
        assert!(matches!(
            ord_rank_switch(&[vec![1, 1, 0]], Format::Ordering),
            Err(Error::DuplicateEntry { row: 1, value: 1 })
        ));
        assert!(matches!(
            ord_rank_switch(&[vec![1, 4, 0]], Format::Ordering),
            Err(Error::EntryOutOfRange { value: 4, k: 3, .. })
        ));
        assert!(matches!(
            ord_rank_switch(&[vec![1, 0, 2, 0]], Format::Ordering),
            Err(Error::NonPrefix { .. })
        ));
        assert!(matches!(
            ord_rank_switch(&[vec![1, 0, 3, 0]], Format::Ranking),
            Err(Error::RankGap { .. })
        ));
        assert!(matches!(
            ord_rank_switch(&[vec![0, 0, 0]], Format::Ranking),
            Err(Error::EmptyRow { .. })
        ));
    }

    #[test]
    fn top_k_minus_one_is_completed() {
        let o = PartialOrdering::new(vec![2, 1, 0]).unwrap();
        assert_eq!(o.entries(), &[2, 1, 3]);
        assert!(o.is_complete());
        let r = PartialRanking::new(vec![0, 2, 1, 0]).unwrap();
        assert_eq!(r.nranked(), 2);
        let r = PartialRanking::new(vec![0, 2, 1]).unwrap();
        assert_eq!(r.entries(), &[3, 2, 1]);
    }

    #[test]
    fn toy_freq_expansion() {
        let freq = FreqTable::new(
            vec![vec![0, 0, 1, 0], vec![0, 1, 0, 2], vec![4, 1, 2, 3]],
            vec![2, 1, 3],
        )
        .unwrap();
        let rows = freq_to_unit(&freq);
        assert_eq!(
            rows,
            vec![
                vec![0, 0, 1, 0],
                vec![0, 0, 1, 0],
                vec![0, 1, 0, 2],
                vec![4, 1, 2, 3],
                vec![4, 1, 2, 3],
                vec![4, 1, 2, 3],
            ]
        );
        assert!(Dataset::from_rankings(&rows).is_ok());
    }

    #[test]
    fn freq_table_rejects_bad_input() {
        assert!(FreqTable::new(vec![vec![1, 2]], vec![0]).is_err());
        assert!(FreqTable::new(vec![vec![1, 2], vec![1, 2]], vec![1, 1]).is_err());
        assert!(FreqTable::new(vec![vec![1, 2]], vec![1, 2]).is_err());
    }

    #[test]
    fn single_row_freq() {
        let data = Dataset::from_orderings(&[vec![2, 1, 3]]).unwrap();
        let freq = unit_to_freq(&data);
        assert_eq!(freq.sequences(), &[vec![2, 1, 3]]);
        assert_eq!(freq.counts(), &[1]);
    }

    #[test]
    fn summaries_on_small_inputs() {
        let one = Dataset::from_orderings(&[vec![2, 1]]).unwrap();
        assert_eq!(rank_summaries(&one).marginal_rank_distr, vec![vec![0, 1], vec![1, 0]]);

        let toy = Dataset::from_orderings(&[vec![1, 2, 0], vec![1, 0, 0], vec![2, 3, 1]]).unwrap();
        let summ = rank_summaries(&toy);
        assert_eq!(summ.marginal_rank_distr[0], vec![2, 1, 0]);
        // (1,2,0) is top-(K-1) and gets completed to (1,2,3)
        assert_eq!(summ.nranked, vec![3, 1, 3]);
        assert_eq!(summ.missing_positions, vec![0, 1, 1]);
        assert_eq!(summ.mean_rank[0], Some(5.0 / 3.0));
    }

    #[test]
    fn paired_comparisons_of_partial_rows() {
        let data = Dataset::from_orderings(&[vec![3, 0, 0, 0]]).unwrap();
        let tau = paired_comparisons(&data);
        assert_eq!(tau[2], vec![1, 1, 0, 1]);
        assert_eq!(tau[0], vec![0, 0, 0, 0]);
        let data = Dataset::from_orderings(&[vec![2, 3, 1]]).unwrap();
        let tau = paired_comparisons(&data);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(tau[i][j] + tau[j][i], 1);
                }
            }
        }
    }

    #[test]
    fn group_indicators() {
        assert_eq!(
            binary_group_ind(&[1, 2, 1], 2).unwrap(),
            vec![vec![1, 0], vec![0, 1], vec![1, 0]]
        );
        assert_eq!(binary_group_ind(&[1, 1], 1).unwrap(), vec![vec![1], vec![1]]);
        assert!(binary_group_ind(&[3], 2).is_err());
        assert!(binary_group_ind(&[0], 2).is_err());
    }

    #[test]
    fn stats_of_complete_and_top1_rows() {
        let data = Dataset::from_orderings(&[vec![2, 1, 3], vec![3, 2, 1]]).unwrap();
        let st = sufficient_stats(&data);
        assert_eq!(st.u_row(0), &[1, 1, 1]);
        assert_eq!(st.gamma(), &[2, 2, 2]);

        let data = Dataset::from_orderings(&[vec![3, 0, 0, 0]]).unwrap();
        let st = sufficient_stats(&data);
        assert_eq!(st.u_row(0), &[0, 0, 1, 0]);
        assert_eq!(data.available_items(0, 1), vec![1, 2, 3, 4]);
        for item in 1..=4 {
            assert!(st.delta(0, 1, item));
            assert!(!st.delta(0, 2, item));
        }
    }

    #[test]
    fn make_partial_modes() {
        let rows = vec![vec![1, 2, 3, 4], vec![4, 3, 2, 1]];
        let data = Dataset::from_orderings(&rows).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let same = make_partial(&data, &Censoring::Depths(vec![4, 4]), &mut rng).unwrap();
        assert_eq!(same, data);
        let cut = make_partial(&data, &Censoring::Depths(vec![1, 3]), &mut rng).unwrap();
        assert_eq!(cut.to_orderings(), vec![vec![1, 0, 0, 0], vec![4, 3, 2, 1]]);
        assert!(make_partial(&data, &Censoring::Depths(vec![0, 4]), &mut rng).is_err());
        assert!(make_partial(&data, &Censoring::Probabilities(vec![0.5, 0.5]), &mut rng).is_err());
        assert!(
            make_partial(&data, &Censoring::Probabilities(vec![-0.1, 0.6, 0.5]), &mut rng).is_err()
        );
        let partial = Dataset::from_orderings(&[vec![1, 0, 0, 0]]).unwrap();
        assert!(make_partial(&partial, &Censoring::Depths(vec![1]), &mut rng).is_err());
    }

    #[test]
    fn make_complete_keeps_prefix() {
        let data =
            Dataset::from_orderings(&[vec![1, 2, 3, 4], vec![3, 1, 0, 0], vec![2, 0, 0, 0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let full = make_complete(&data, &[1.0, 2.0, 3.0, 4.0], &mut rng).unwrap();
        assert!(full.is_complete());
        assert_eq!(full.ordering_row(0), vec![1, 2, 3, 4]);
        assert_eq!(&full.ordering_row(1)[..2], &[3, 1]);
        assert_eq!(full.ordering_row(2)[0], 2);
        assert!(make_complete(&data, &[1.0, 0.0, 1.0, 1.0], &mut rng).is_err());
    }
}
