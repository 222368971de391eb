use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{JcasError, Result};

/// One solved cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: String,
    pub i_w: usize,
    /// Sweep value (`K` or `δ`); the system's own `K` without a sweep.
    pub value: f64,
    pub seed: u64,
    pub final_h: f64,
    pub min_sinr_db: f64,
    pub min_scnr_db: f64,
    pub layers: usize,
    pub runtime_s: f64,
}

/// Per-(mode, value) statistics over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: String,
    pub i_w: usize,
    pub value: f64,
    pub seeds: usize,
    pub mean_h: f64,
    pub mean_min_sinr_db: f64,
    pub mean_min_scnr_db: f64,
    pub mean_layers: f64,
    pub mean_runtime_s: f64,
    pub median_runtime_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    /// `"K"`, `"delta"` or `"none"`.
    pub axis: String,
    pub rows: Vec<ResultRow>,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| JcasError::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| JcasError::io(path, e))?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| JcasError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for (i, r) in rdr.deserialize().enumerate() {
        rows.push(r.map_err(|e| JcasError::Format {
            path: path.to_path_buf(),
            field: format!("row {}", i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Groups keyed by `(mode, i_w)` in first-seen order, values sorted.
type Groups<'a> = Vec<((String, usize), BTreeMap<OrdF64, Vec<&'a ResultRow>>)>;

#[derive(Clone, Copy, Debug)]
struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl ResultTable {
    pub fn new(axis: &str, rows: Vec<ResultRow>) -> Self {
        ResultTable {
            axis: axis.to_string(),
            rows,
        }
    }

    fn groups(&self) -> Groups<'_> {
        let mut out: Groups<'_> = Vec::new();
        for r in &self.rows {
            let key = (r.mode.clone(), r.i_w);
            let idx = match out.iter().position(|(k, _)| *k == key) {
                Some(i) => i,
                None => {
                    out.push((key, BTreeMap::new()));
                    out.len() - 1
                }
            };
            out[idx].1.entry(OrdF64(r.value)).or_default().push(r);
        }
        out
    }

    /// Statistics per `(mode, i_w, value)`, in sweep order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for ((mode, i_w), by_value) in self.groups() {
            for (value, rows) in by_value {
                let col = |f: fn(&ResultRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
                let runtimes = col(|r| r.runtime_s);
                out.push(SummaryRow {
                    mode: mode.clone(),
                    i_w,
                    value: value.0,
                    seeds: rows.len(),
                    mean_h: mean(&col(|r| r.final_h)),
                    mean_min_sinr_db: mean(&col(|r| r.min_sinr_db)),
                    mean_min_scnr_db: mean(&col(|r| r.min_scnr_db)),
                    mean_layers: mean(&col(|r| r.layers as f64)),
                    mean_runtime_s: mean(&runtimes),
                    median_runtime_s: median(&runtimes),
                });
            }
        }
        out
    }

    /// Summary rows of one curve group, in sweep order.
    pub fn series(&self, mode: &str, i_w: usize) -> Vec<SummaryRow> {
        self.summary()
            .into_iter()
            .filter(|s| s.mode == mode && s.i_w == i_w)
            .collect()
    }

    /// Fails unless every `(mode, i_w)` group has exactly one row per
    /// `(value, seed)` over the same value and seed sets.
    pub fn check_complete(&self) -> Result<()> {
        let values: BTreeSet<OrdF64> = self.rows.iter().map(|r| OrdF64(r.value)).collect();
        let seeds: BTreeSet<u64> = self.rows.iter().map(|r| r.seed).collect();
        for ((mode, i_w), by_value) in self.groups() {
            for v in &values {
                let rows = by_value.get(v).map(Vec::as_slice).unwrap_or(&[]);
                let got: BTreeSet<u64> = rows.iter().map(|r| r.seed).collect();
                if rows.len() != seeds.len() || got != seeds {
                    return Err(JcasError::InvalidConfig(format!(
                        "incomplete result grid: {mode} (I_w={i_w}) at {}={} has {} of {} seeds",
                        self.axis,
                        v.0,
                        rows.len(),
                        seeds.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_rows(&self.rows, path.as_ref())
    }

    pub fn save_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_rows(&self.summary(), path.as_ref())
    }

    /// Reads rows written by [`ResultTable::save_csv`] and checks the grid.
    pub fn load_csv(axis: &str, path: impl AsRef<Path>) -> Result<Self> {
        let table = ResultTable::new(axis, read_rows(path.as_ref())?);
        table.check_complete()?;
        Ok(table)
    }

    /// The table with wall-time columns zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        for r in &mut t.rows {
            r.runtime_s = 0.0;
        }
        t
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Mean utility of one curve group at one outer layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub mode: String,
    pub i_w: usize,
    pub delta: f64,
    pub layer: usize,
    pub mean_h: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTable {
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceTable {
    /// Distinct `(mode, i_w, delta)` curves in first-seen order.
    pub fn curves(&self) -> Vec<(String, usize, f64)> {
        let mut out: Vec<(String, usize, f64)> = Vec::new();
        for p in &self.points {
            let key = (p.mode.clone(), p.i_w, p.delta);
            if !out.contains(&key) {
                out.push(key);
            }
        }
        out
    }

    /// `mean_h` by layer for one curve.
    pub fn curve(&self, mode: &str, i_w: usize, delta: f64) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.mode == mode && p.i_w == i_w && p.delta == delta)
            .map(|p| p.mean_h)
            .collect()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_rows(&self.points, path.as_ref())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Ok(ConvergenceTable {
            points: read_rows(path.as_ref())?,
        })
    }
}
