//! Reading and writing datasets, frequency tables, chains and reports.
//!
//! Datasets come as CSV matrices (orderings or rankings, one unit per row,
//! 0 or empty or `NA` for missing entries, optional header line) or as
//! PrefLib SOC/SOI files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::GibbsChain;
use crate::rank_data::{Dataset, Format, FreqTable};

/// On-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    CsvOrdering,
    CsvRanking,
    Preflib,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv-ordering" | "ordering" => Ok(Self::CsvOrdering),
            "csv-ranking" | "ranking" => Ok(Self::CsvRanking),
            "preflib" | "soi" | "soc" => Ok(Self::Preflib),
            other => Err(Error::InvalidArgument(format!("unknown data format {other:?}"))),
        }
    }
}

impl std::fmt::Display for DataFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::CsvOrdering => "csv-ordering",
            Self::CsvRanking => "csv-ranking",
            Self::Preflib => "preflib",
        })
    }
}

fn parse_cell(cell: &str) -> Option<u32> {
    let cell = cell.trim().trim_matches('"');
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
        return Some(0);
    }
    cell.parse().ok().or_else(|| {
        // integral floats such as "3.0"
        cell.parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v <= u32::MAX as f64)
            .map(|v| v as u32)
    })
}

/// Parses a CSV matrix of nonnegative integers. A first line containing a
/// non-numeric cell is taken as a header and skipped.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<u32>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: Option<Vec<u32>> = record.iter().map(parse_cell).collect();
        match parsed {
            Some(row) => rows.push(row),
            None if idx == 0 => continue,
            None => {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("non-integer entry in {:?}", record.iter().collect::<Vec<_>>()),
                })
            }
        }
    }
    if let Some(first) = rows.first() {
        if let Some(pos) = rows.iter().position(|r| r.len() != first.len()) {
            return Err(Error::Parse {
                line: pos + 1,
                msg: format!("{} columns, expected {}", rows[pos].len(), first.len()),
            });
        }
    }
    Ok(rows)
}

/// CSV text of an integer matrix with optional header.
pub fn format_matrix(rows: &[Vec<u32>], header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in rows {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Pads ordering rows to `k` columns with zeros.
fn pad_rows(rows: &mut [Vec<u32>], k: usize) -> Result<()> {
    for (s, row) in rows.iter_mut().enumerate() {
        if row.len() > k {
            return Err(Error::Dimension(format!(
                "row {} has {} columns but K = {k}",
                s + 1,
                row.len()
            )));
        }
        row.resize(k, 0);
    }
    Ok(())
}

/// Parses dataset text. `k` overrides the number of items; ordering files
/// with fewer columns are padded with zeros.
pub fn parse_dataset(text: &str, format: DataFormat, k: Option<usize>) -> Result<Dataset> {
    match format {
        DataFormat::Preflib => parse_preflib(text, k),
        DataFormat::CsvOrdering | DataFormat::CsvRanking => {
            let mut rows = parse_matrix(text)?;
            if rows.is_empty() {
                return Err(Error::InvalidArgument("dataset has no rows".into()));
            }
            if let Some(k) = k {
                if format == DataFormat::CsvOrdering {
                    pad_rows(&mut rows, k)?;
                } else if rows[0].len() != k {
                    return Err(Error::Dimension(format!(
                        "ranking rows have {} columns but K = {k}",
                        rows[0].len()
                    )));
                }
            }
            let fmt = if format == DataFormat::CsvOrdering {
                Format::Ordering
            } else {
                Format::Ranking
            };
            Dataset::from_format(&rows, fmt)
        }
    }
}

/// Text form of a dataset. CSV output has a header `x1,...,xK`.
pub fn format_dataset(data: &Dataset, format: DataFormat) -> String {
    let header: Vec<String> = (1..=data.k()).map(|i| format!("x{i}")).collect();
    match format {
        DataFormat::CsvOrdering => format_matrix(&data.to_orderings(), Some(&header)),
        DataFormat::CsvRanking => format_matrix(&data.to_rankings(), Some(&header)),
        DataFormat::Preflib => format_preflib(data),
    }
}

pub fn load_dataset(path: &Path, format: DataFormat, k: Option<usize>) -> Result<Dataset> {
    parse_dataset(&fs::read_to_string(path)?, format, k)
}

pub fn save_dataset(path: &Path, data: &Dataset, format: DataFormat) -> Result<()> {
    fs::write(path, format_dataset(data, format))?;
    Ok(())
}

fn parse_item_list(list: &str, line: usize) -> Result<Vec<u32>> {
    if list.contains('{') {
        return Err(Error::Parse {
            line,
            msg: "tied items are not supported".into(),
        });
    }
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u32>().map_err(|_| Error::Parse {
                line,
                msg: format!("bad item id {s:?}"),
            })
        })
        .collect()
}

/// Parses PrefLib SOC/SOI content. Both the current layout (`# KEY: value`
/// metadata, then `count: i1,i2,...`) and the legacy one (candidate count,
/// candidate names, a totals line, then `count,i1,i2,...`) are accepted.
/// K is taken from `k` if given, else from the metadata, else from the
/// largest item id.
pub fn parse_preflib(text: &str, k: Option<usize>) -> Result<Dataset> {
    let mut declared: Option<usize> = None;
    let mut blocks: Vec<(u64, Vec<u32>)> = Vec::new();
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let legacy = lines
        .first()
        .is_some_and(|(_, l)| !l.starts_with('#') && !l.contains(':'));
    if legacy {
        let (line, first) = lines[0];
        let m: usize = first.parse().map_err(|_| Error::Parse {
            line,
            msg: "expected number of alternatives".into(),
        })?;
        declared = Some(m);
        let body = lines.get(m + 2..).unwrap_or(&[]);
        if lines.len() < m + 2 {
            return Err(Error::Parse {
                line,
                msg: "truncated legacy header".into(),
            });
        }
        for &(line, l) in body {
            let (count, items) = l.split_once(',').ok_or_else(|| Error::Parse {
                line,
                msg: "expected count,items".into(),
            })?;
            let count = count.trim().parse::<u64>().map_err(|_| Error::Parse {
                line,
                msg: format!("malformed count {count:?}"),
            })?;
            blocks.push((count, parse_item_list(items, line)?));
        }
    } else {
        for &(line, l) in &lines {
            if let Some(meta) = l.strip_prefix('#') {
                if let Some((key, value)) = meta.split_once(':') {
                    if key.trim().eq_ignore_ascii_case("NUMBER ALTERNATIVES") {
                        declared = Some(value.trim().parse().map_err(|_| Error::Parse {
                            line,
                            msg: format!("bad alternative count {:?}", value.trim()),
                        })?);
                    }
                }
                continue;
            }
            let (count, items) = l.split_once(':').ok_or_else(|| Error::Parse {
                line,
                msg: "expected `count: items`".into(),
            })?;
            let count = count.trim().parse::<u64>().map_err(|_| Error::Parse {
                line,
                msg: format!("malformed count {:?}", count.trim()),
            })?;
            blocks.push((count, parse_item_list(items, line)?));
        }
    }
    if blocks.is_empty() {
        return Err(Error::InvalidArgument("no preference lines found".into()));
    }
    let max_id = blocks.iter().flat_map(|(_, v)| v.iter()).copied().max().unwrap_or(0) as usize;
    let k = k.or(declared).unwrap_or(max_id);
    let mut rows = Vec::new();
    for (count, items) in &blocks {
        if items.is_empty() {
            return Err(Error::InvalidArgument("empty preference line".into()));
        }
        let row_no = rows.len() + 1;
        if items.len() > k {
            return Err(Error::Dimension(format!(
                "row {row_no}: {} items listed but K = {k}",
                items.len()
            )));
        }
        if let Some(&bad) = items.iter().find(|&&i| i == 0 || i as usize > k) {
            return Err(Error::EntryOutOfRange { row: row_no, value: bad, k });
        }
        let mut row = items.clone();
        row.resize(k, 0);
        for _ in 0..*count {
            rows.push(row.clone());
        }
    }
    Dataset::from_orderings(&rows)
}

/// PrefLib text of a dataset; consecutive identical rows share one line.
pub fn format_preflib(data: &Dataset) -> String {
    let mut groups: Vec<(u64, &[u32])> = Vec::new();
    for s in 0..data.n() {
        let ranked = data.ranked(s);
        match groups.last_mut() {
            Some((c, prev)) if *prev == ranked => *c += 1,
            _ => groups.push((1, ranked)),
        }
    }
    let kind = if data.is_complete() { "soc" } else { "soi" };
    let mut out = String::new();
    let _ = writeln!(out, "# DATA TYPE: {kind}");
    let _ = writeln!(out, "# NUMBER ALTERNATIVES: {}", data.k());
    for i in 1..=data.k() {
        let _ = writeln!(out, "# ALTERNATIVE NAME {i}: item {i}");
    }
    let _ = writeln!(out, "# NUMBER VOTERS: {}", data.n());
    let _ = writeln!(out, "# NUMBER UNIQUE ORDERS: {}", groups.len());
    for (count, items) in groups {
        let list: Vec<String> = items.iter().map(u32::to_string).collect();
        let _ = writeln!(out, "{count}: {}", list.join(","));
    }
    out
}

/// Frequency table CSV: K sequence columns then a `freq` column.
pub fn parse_freq(text: &str) -> Result<FreqTable> {
    let rows = parse_matrix(text)?;
    if rows.is_empty() || rows[0].len() < 2 {
        return Err(Error::InvalidArgument("frequency table needs K columns plus counts".into()));
    }
    let (seqs, counts) = rows
        .into_iter()
        .map(|mut r| {
            let c = r.pop().unwrap() as u64;
            (r, c)
        })
        .unzip();
    FreqTable::new(seqs, counts)
}

pub fn format_freq(freq: &FreqTable) -> String {
    let mut header: Vec<String> = (1..=freq.k()).map(|i| format!("x{i}")).collect();
    header.push("freq".into());
    let mut out = header.join(",");
    out.push('\n');
    for (seq, c) in freq.sequences().iter().zip(freq.counts()) {
        let line: Vec<String> = seq.iter().map(u32::to_string).collect();
        let _ = writeln!(out, "{},{c}", line.join(","));
    }
    out
}

/// Metadata stored next to a chain CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub k: usize,
    pub g: usize,
    pub seed: Option<u64>,
    pub n_iter: usize,
    pub n_burn: usize,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Chain trace CSV: columns `p_{g}_{i}` (component-major), `w_{g}`, `log_lik`,
/// `deviance`, one row per kept draw.
pub fn format_chain(chain: &GibbsChain) -> String {
    let (k, g) = (chain.k(), chain.g());
    let mut header: Vec<String> = Vec::with_capacity(g * k + g + 2);
    for c in 1..=g {
        for i in 1..=k {
            header.push(format!("p_{c}_{i}"));
        }
    }
    header.extend((1..=g).map(|c| format!("w_{c}")));
    header.push("log_lik".into());
    header.push("deviance".into());
    let mut out = header.join(",");
    out.push('\n');
    for l in 0..chain.len() {
        let mut cells: Vec<String> = chain.supports_at(l).iter().map(f64::to_string).collect();
        cells.extend(chain.weights_at(l).iter().map(f64::to_string));
        cells.push(chain.log_lik()[l].to_string());
        cells.push(chain.deviance()[l].to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses a chain CSV. Without metadata, K and G are inferred from the
/// header.
pub fn parse_chain(text: &str, meta: Option<&ChainMeta>) -> Result<GibbsChain> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let g = header.iter().filter(|h| h.starts_with("w_")).count();
    let np = header.iter().filter(|h| h.starts_with("p_")).count();
    if g == 0 || np % g != 0 || header.len() != np + g + 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "chain header must list p_g_i, w_g, log_lik and deviance columns".into(),
        });
    }
    let k = np / g;
    let mut supports = Vec::new();
    let mut weights = Vec::new();
    let mut log_lik = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let values: Vec<f64> = record
            .iter()
            .map(|c| {
                c.parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 2,
                    msg: format!("bad number {c:?}"),
                })
            })
            .collect::<Result<_>>()?;
        supports.extend_from_slice(&values[..np]);
        weights.extend_from_slice(&values[np..np + g]);
        log_lik.push(values[np + g]);
    }
    let (seed, n_iter, n_burn) = match meta {
        Some(m) => {
            if m.k != k || m.g != g {
                return Err(Error::Dimension(format!(
                    "chain metadata says K = {}, G = {} but the header has K = {k}, G = {g}",
                    m.k, m.g
                )));
            }
            (m.seed, m.n_iter, m.n_burn)
        }
        None => (None, log_lik.len(), 0),
    };
    GibbsChain::from_traces(k, g, supports, weights, log_lik, seed, n_iter, n_burn)
}

/// Writes the chain CSV and its JSON metadata (same stem, `.json`).
pub fn save_chain(path: &Path, chain: &GibbsChain) -> Result<()> {
    fs::write(path, format_chain(chain))?;
    let meta = ChainMeta {
        k: chain.k(),
        g: chain.g(),
        seed: chain.seed(),
        n_iter: chain.n_iter(),
        n_burn: chain.n_burn(),
    };
    write_json(&sidecar(path), &meta)
}

pub fn load_chain(path: &Path) -> Result<GibbsChain> {
    let text = fs::read_to_string(path)?;
    let meta_path = sidecar(path);
    let meta: Option<ChainMeta> = if meta_path.exists() {
        Some(read_json(&meta_path)?)
    } else {
        None
    };
    parse_chain(&text, meta.as_ref())
}

/// Permutation log, 1-based: column `slot_g` names the raw component placed
/// in slot g.
pub fn format_permutations(perms: &[Vec<usize>]) -> String {
    let g = perms.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=g).map(|c| format!("slot_{c}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for p in perms {
        let line: Vec<String> = p.iter().map(|h| (h + 1).to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Serializes records (one struct per row) as CSV.
pub fn write_csv_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
