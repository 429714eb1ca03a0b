//! Medians, the permutation test on medians, and the report tables built from replicate logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::activation::{ActivationKind, N_ACTIVATIONS, REGISTRY};
use crate::architecture::Architecture;
use crate::error::{Error, Result};
use crate::harness::{ExperimentMethod, ReplicateRecord};
use crate::seed::{derive_seed, rng_from_seed, stream};

pub const DEFAULT_ROUNDS: usize = 10_000;

/// Order-statistic median; the even case averages the two central values.
pub fn median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::contract("median of an empty list"));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PermutationTestResult {
    /// `|median(a) - median(b)|`
    pub observed: f64,
    /// `(1 + #{rounds with statistic >= observed}) / (rounds + 1)`
    pub p_value: f64,
    pub rounds: usize,
}

/// Slack for the `>=` comparison, absorbing rounding in averaged medians.
const TIE_EPS: f64 = 1e-12;

fn median_gap(a: &[f64], b: &[f64]) -> f64 {
    (median(a).expect("nonempty") - median(b).expect("nonempty")).abs()
}

fn check_groups(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::contract(format!(
            "permutation test needs at least 2 values per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Two-sided Monte-Carlo permutation test on the absolute median difference.
pub fn permutation_test_medians<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    rounds: usize,
    rng: &mut R,
) -> Result<PermutationTestResult> {
    check_groups(a, b)?;
    let observed = median_gap(a, b);
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let na = a.len();
    let mut hits = 0usize;
    for _ in 0..rounds {
        pooled.shuffle(rng);
        let (pa, pb) = pooled.split_at(na);
        if median_gap(pa, pb) >= observed - TIE_EPS {
            hits += 1;
        }
    }
    Ok(PermutationTestResult {
        observed,
        p_value: (1 + hits) as f64 / (rounds + 1) as f64,
        rounds,
    })
}

/// Exact permutation p-value by enumerating every relabeling (pooled size at most 24).
pub fn exact_permutation_p(a: &[f64], b: &[f64]) -> Result<f64> {
    check_groups(a, b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    if n > 24 {
        return Err(Error::contract(format!("exact enumeration over {n} values is too large")));
    }
    let observed = median_gap(a, b);
    let (mut total, mut hits) = (0u64, 0u64);
    let (mut ga, mut gb) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        ga.clear();
        gb.clear();
        for (i, &v) in pooled.iter().enumerate() {
            if mask >> i & 1 == 1 {
                ga.push(v);
            } else {
                gb.push(v);
            }
        }
        total += 1;
        if median_gap(&ga, &gb) >= observed - TIE_EPS {
            hits += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// `"!!"` below 0.001, `"!"` below 0.05, else empty.
pub fn significance_markers(p: f64) -> &'static str {
    if p < 0.001 {
        "!!"
    } else if p < 0.05 {
        "!"
    } else {
        ""
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Input,
    Hidden,
    Output,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::Input, Position::Hidden, Position::Output];

    pub fn name(self) -> &'static str {
        match self {
            Position::Input => "input",
            Position::Hidden => "hidden",
            Position::Output => "output",
        }
    }
}

/// Per-bucket activation frequencies, indexed by registry position.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyTable {
    buckets: [Vec<f64>; 3],
}

impl FrequencyTable {
    pub fn frequency(&self, position: Position, kind: ActivationKind) -> f64 {
        self.buckets[position as usize][kind.index()]
    }

    /// Nonzero entries of a bucket, most frequent first, ties in registry order; at most `k`.
    pub fn top(&self, position: Position, k: usize) -> Vec<(ActivationKind, f64)> {
        let mut entries: Vec<(ActivationKind, f64)> = REGISTRY
            .iter()
            .map(|&kind| (kind, self.frequency(position, kind)))
            .filter(|(_, f)| *f > 0.0)
            .collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.index().cmp(&b.0.index())));
        entries.truncate(k);
        entries
    }
}

/// Position 0 is the input bucket, the last position the output bucket, the rest are pooled.
pub fn af_frequency_table(architectures: &[Architecture]) -> Result<FrequencyTable> {
    let first = architectures
        .first()
        .ok_or_else(|| Error::contract("frequency table of no architectures"))?;
    let l = first.len();
    if l < 3 {
        return Err(Error::contract(format!("frequency table needs at least 3 layers, got {l}")));
    }
    let mut counts = [vec![0.0; N_ACTIVATIONS], vec![0.0; N_ACTIVATIONS], vec![0.0; N_ACTIVATIONS]];
    for arch in architectures {
        if arch.len() != l {
            return Err(Error::contract(format!("mixed architecture lengths {l} and {}", arch.len())));
        }
        for (i, kind) in arch.iter().enumerate() {
            let bucket = if i == 0 {
                Position::Input
            } else if i + 1 == l {
                Position::Output
            } else {
                Position::Hidden
            };
            counts[bucket as usize][kind.index()] += 1.0;
        }
    }
    for bucket in &mut counts {
        let total: f64 = bucket.iter().sum();
        bucket.iter_mut().for_each(|c| *c /= total);
    }
    Ok(FrequencyTable { buckets: counts })
}

/// Rounds to 3 decimals and prints the shortest representation (`0.04`, `0.829`, `1`).
pub fn format_score(x: f64) -> String {
    let r = (x * 1000.0).round() / 1000.0;
    if r == 0.0 {
        "0".into()
    } else {
        r.to_string()
    }
}

/// One Table-1 row: per-method medians plus the winner and its significance against the runner-up.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub n_layers: usize,
    pub medians: BTreeMap<ExperimentMethod, f64>,
    pub top: ExperimentMethod,
    pub runner_up: Option<ExperimentMethod>,
    pub test: Option<PermutationTestResult>,
}

impl SummaryRow {
    pub fn markers(&self) -> &'static str {
        self.test.map_or("", |t| significance_markers(t.p_value))
    }
}

/// Groups records by `(dataset, n_layers)` and summarizes each group.
///
/// The top method has the highest median; ties go to the earlier column
/// (standard, random, tpe, cmaes). Its scores are tested against the runner-up's with `rounds`
/// permutations seeded from `(seed, row index)`.
pub fn summarize(records: &[ReplicateRecord], rounds: usize, seed: u64) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<(String, usize), BTreeMap<ExperimentMethod, Vec<f64>>> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.dataset.clone(), r.n_layers)).or_default();
        for (&m, outcome) in &r.methods {
            g.entry(m).or_default().push(outcome.score);
        }
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (row_index, ((dataset, n_layers), scores)) in groups.into_iter().enumerate() {
        let mut medians = BTreeMap::new();
        for (&m, s) in &scores {
            medians.insert(m, median(s)?);
        }
        let mut ranked: Vec<(ExperimentMethod, f64)> = medians.iter().map(|(&m, &v)| (m, v)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let top = ranked[0].0;
        let runner_up = ranked.get(1).map(|r| r.0);
        let test = match runner_up {
            Some(second) if scores[&top].len() >= 2 && scores[&second].len() >= 2 => {
                let mut rng = rng_from_seed(derive_seed(seed, stream::STATS, row_index as u64));
                Some(permutation_test_medians(&scores[&top], &scores[&second], rounds, &mut rng)?)
            }
            _ => None,
        };
        rows.push(SummaryRow { dataset, n_layers, medians, top, runner_up, test });
    }
    Ok(rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `dataset,lay,standard,random,tpe,cmaes,top,p-markers`; absent methods leave empty cells.
pub fn table1_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("dataset,lay,standard,random,tpe,cmaes,top,p-markers\n");
    for r in rows {
        let _ = write!(out, "{},{}", csv_field(&r.dataset), r.n_layers);
        for m in ExperimentMethod::ALL {
            let cell = r.medians.get(&m).map(|&v| format_score(v)).unwrap_or_default();
            let _ = write!(out, ",{cell}");
        }
        let _ = writeln!(out, ",{},{}", r.top, r.markers());
    }
    out
}

/// Best architectures of the search methods (standard excluded), grouped by layer count.
fn searched_architectures<'a>(
    records: impl Iterator<Item = &'a ReplicateRecord>,
) -> BTreeMap<usize, Vec<Architecture>> {
    let mut by_layers: BTreeMap<usize, Vec<Architecture>> = BTreeMap::new();
    for r in records {
        for (m, outcome) in &r.methods {
            if *m != ExperimentMethod::Standard {
                by_layers.entry(r.n_layers).or_default().push(outcome.architecture.clone());
            }
        }
    }
    by_layers
}

/// `lay,position,rank,af,frequency`: the top-`k` activations of each bucket, pooled over datasets.
pub fn table2_csv(records: &[ReplicateRecord], k: usize) -> Result<String> {
    let mut out = String::from("lay,position,rank,af,frequency\n");
    for (lay, archs) in searched_architectures(records.iter()) {
        let table = af_frequency_table(&archs)?;
        for pos in Position::ALL {
            for (rank, (kind, f)) in table.top(pos, k).into_iter().enumerate() {
                let _ = writeln!(out, "{lay},{},{},{kind},{}", pos.name(), rank + 1, format_score(f));
            }
        }
    }
    Ok(out)
}

/// `dataset,lay,position,af,frequency`: the single most frequent activation per bucket and dataset.
pub fn table3_csv(records: &[ReplicateRecord]) -> Result<String> {
    let mut datasets: Vec<&str> = records.iter().map(|r| r.dataset.as_str()).collect();
    datasets.sort_unstable();
    datasets.dedup();
    let mut out = String::from("dataset,lay,position,af,frequency\n");
    for name in datasets {
        for (lay, archs) in searched_architectures(records.iter().filter(|r| r.dataset == name)) {
            let table = af_frequency_table(&archs)?;
            for pos in Position::ALL {
                if let Some((kind, f)) = table.top(pos, 1).first() {
                    let _ = writeln!(out, "{},{lay},{},{kind},{}", csv_field(name), pos.name(), format_score(*f));
                }
            }
        }
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_table1(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_text(path, &table1_csv(rows))
}

/// The three report files written by `analyze`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reports {
    pub table1: String,
    pub table2: String,
    pub table3: String,
}

pub fn build_reports(records: &[ReplicateRecord], rounds: usize, seed: u64, top_k: usize) -> Result<Reports> {
    Ok(Reports {
        table1: table1_csv(&summarize(records, rounds, seed)?),
        table2: table2_csv(records, top_k)?,
        table3: table3_csv(records)?,
    })
}

impl Reports {
    /// Writes `table1.csv`, `table2.csv` and `table3.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        write_text(&dir.join("table1.csv"), &self.table1)?;
        write_text(&dir.join("table2.csv"), &self.table2)?;
        write_text(&dir.join("table3.csv"), &self.table3)
    }
}
