//! Labeled example pools and the synthetic classification task that stands
//! in for image benchmarks.
//!
//! The task has `signal_dims` coordinates whose class means differ and the
//! remaining coordinates centered at 0.5 for every class, with isotropic
//! Gaussian noise clipped into `[0, 1]^dim`. A high ratio of noise to signal
//! dimensions gives models room to memorize individual training points.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::container::{read_container, write_container};
use crate::error::{Error, Result};
use crate::rng::{derived_rng, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    PrivateTrain,
    PublicTest,
    Surrogate,
    Synthetic,
}

/// Inputs with class labels. `ids` are globally unique example identifiers,
/// stable across subsetting, used for disjointness checks and per-example seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub ids: Vec<u64>,
    pub num_classes: usize,
    pub split_tag: SplitTag,
}

impl LabeledSet {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        labels: Vec<usize>,
        ids: Vec<u64>,
        num_classes: usize,
        split_tag: SplitTag,
    ) -> Result<Self> {
        let set = Self { inputs, labels, ids, num_classes, split_tag };
        set.validate()?;
        Ok(set)
    }

    /// Ids default to positions.
    pub fn from_parts(inputs: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize, split_tag: SplitTag) -> Result<Self> {
        let ids = (0..inputs.len() as u64).collect();
        Self::new(inputs, labels, ids, num_classes, split_tag)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.labels.len() || self.inputs.len() != self.ids.len() {
            return Err(Error::SizeMismatch(format!(
                "{} inputs, {} labels, {} ids",
                self.inputs.len(),
                self.labels.len(),
                self.ids.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::InvalidClass { class: bad, num_classes: self.num_classes });
        }
        if let Some(first) = self.inputs.first() {
            let dim = first.len();
            if let Some(row) = self.inputs.iter().find(|r| r.len() != dim) {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            num_classes: self.num_classes,
            split_tag: self.split_tag,
        }
    }

    pub fn range(&self, start: usize, end: usize) -> Self {
        let idx: Vec<usize> = (start..end.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn with_tag(mut self, tag: SplitTag) -> Self {
        self.split_tag = tag;
        self
    }

    /// Concatenation; ids are kept as they are.
    pub fn concat(&self, other: &Self, tag: SplitTag) -> Result<Self> {
        if !self.is_empty() && !other.is_empty() && self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let mut out = self.clone();
        out.inputs.extend(other.inputs.iter().cloned());
        out.labels.extend(&other.labels);
        out.ids.extend(&other.ids);
        out.num_classes = self.num_classes.max(other.num_classes);
        out.split_tag = tag;
        Ok(out)
    }

    pub fn is_disjoint_from(&self, other: &Self) -> bool {
        let ids: HashSet<u64> = self.ids.iter().copied().collect();
        other.ids.iter().all(|i| !ids.contains(i))
    }

    /// CSV with header `id,x0,..,x{d-1},label`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim()).map(|i| format!("x{i}")));
        header.push("label".into());
        w.write_record(&header)?;
        for ((x, y), id) in self.inputs.iter().zip(&self.labels).zip(&self.ids) {
            let mut row = vec![id.to_string()];
            row.extend(x.iter().map(|v| format!("{v:?}")));
            row.push(y.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout above; the `id` column is optional.
    pub fn read_csv(path: &Path, num_classes: usize, split_tag: SplitTag) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let has_id = r.headers()?.get(0) == Some("id");
        let (mut inputs, mut labels, mut ids) = (Vec::new(), Vec::new(), Vec::new());
        for (row_no, rec) in r.records().enumerate() {
            let rec = rec?;
            let fields: Vec<&str> = rec.iter().collect();
            if fields.len() < 2 {
                return Err(Error::Format(format!("row {row_no} too short")));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("row {row_no}: {e}")));
            let start = usize::from(has_id);
            let id = if has_id {
                fields[0].trim().parse::<u64>().map_err(|e| Error::Format(format!("row {row_no}: {e}")))?
            } else {
                row_no as u64
            };
            let label = fields[fields.len() - 1]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Format(format!("row {row_no}: {e}")))?;
            let x = fields[start..fields.len() - 1].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
            inputs.push(x);
            labels.push(label);
            ids.push(id);
        }
        Self::new(inputs, labels, ids, num_classes, split_tag)
    }

    pub fn write_bin(&self, path: &Path) -> Result<()> {
        let header = SetHeader {
            format: SET_FORMAT.into(),
            n: self.len(),
            dim: self.dim(),
            num_classes: self.num_classes,
            split_tag: self.split_tag,
        };
        let mut block = Vec::with_capacity(self.len() * (self.dim() + 2));
        for ((x, y), id) in self.inputs.iter().zip(&self.labels).zip(&self.ids) {
            block.push(*id as f64);
            block.extend_from_slice(x);
            block.push(*y as f64);
        }
        write_container(BufWriter::new(File::create(path)?), &header, &block)
    }

    pub fn read_bin(path: &Path) -> Result<Self> {
        let (h, block): (SetHeader, Vec<f64>) = read_container(BufReader::new(File::open(path)?))?;
        if h.format != SET_FORMAT {
            return Err(Error::Format(format!("not a labeled set: {}", h.format)));
        }
        let stride = h.dim + 2;
        if block.len() != h.n * stride {
            return Err(Error::Format("labeled set block has wrong length".into()));
        }
        let (mut inputs, mut labels, mut ids) = (Vec::new(), Vec::new(), Vec::new());
        for row in block.chunks_exact(stride) {
            ids.push(row[0] as u64);
            inputs.push(row[1..=h.dim].to_vec());
            labels.push(row[stride - 1] as usize);
        }
        Self::new(inputs, labels, ids, h.num_classes, h.split_tag)
    }
}

const SET_FORMAT: &str = "dinfer-labeled-set-v1";

#[derive(Serialize, Deserialize)]
struct SetHeader {
    format: String,
    n: usize,
    dim: usize,
    num_classes: usize,
    split_tag: SplitTag,
}

/// Synthetic Gaussian-blob task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlobTask {
    pub num_classes: usize,
    pub dim: usize,
    /// Leading coordinates whose means depend on the class.
    pub signal_dims: usize,
    /// Class means on signal coordinates are uniform in `0.5 ± spread`.
    pub spread: f64,
    /// Per-coordinate noise standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlobTask {
    fn default() -> Self {
        Self { num_classes: 10, dim: 200, signal_dims: 8, spread: 0.2, noise: 0.18, seed: 0 }
    }
}

impl BlobTask {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.dim == 0 || self.signal_dims == 0 || self.signal_dims > self.dim {
            return Err(Error::InvalidParameter(format!("bad blob task {self:?}")));
        }
        if !(self.noise > 0.0) || !(0.0..=0.5).contains(&self.spread) {
            return Err(Error::InvalidParameter(format!("bad blob noise/spread {self:?}")));
        }
        Ok(())
    }

    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let mut rng = derived_rng(self.seed, stream::TASK, u64::MAX);
        (0..self.num_classes)
            .map(|_| {
                (0..self.dim)
                    .map(|j| {
                        if j < self.signal_dims {
                            rng.random_range(0.5 - self.spread..=0.5 + self.spread)
                        } else {
                            0.5
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// `n` examples with ids `first_id..first_id + n`. Each example is a pure
    /// function of `(task seed, id)`, so pools with disjoint id ranges are
    /// independent draws.
    pub fn draw(&self, first_id: u64, n: usize, tag: SplitTag) -> LabeledSet {
        let means = self.class_means();
        let mut inputs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for id in first_id..first_id + n as u64 {
            let mut rng = derived_rng(self.seed, stream::TASK, id);
            let (x, y) = self.sample(&means, &mut rng);
            inputs.push(x);
            labels.push(y);
            ids.push(id);
        }
        LabeledSet { inputs, labels, ids, num_classes: self.num_classes, split_tag: tag }
    }

    fn sample(&self, means: &[Vec<f64>], rng: &mut Rng) -> (Vec<f64>, usize) {
        let y = rng.random_range(0..self.num_classes);
        let x = means[y]
            .iter()
            .map(|mu| (mu + self.noise * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0))
            .collect();
        (x, y)
    }
}

/// Disjoint pools drawn from one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolSizes {
    /// Victim's private training set.
    pub victim: usize,
    /// Public points never used by the victim.
    pub public: usize,
    /// Private training set of the independent model (and overlap adversary).
    pub independent: usize,
    /// Unlabeled task-distribution data for query attacks.
    pub surrogate: usize,
    /// Held-out evaluation set.
    pub test: usize,
}

impl Default for PoolSizes {
    fn default() -> Self {
        Self { victim: 500, public: 500, independent: 500, surrogate: 20_000, test: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct TaskPools {
    pub victim: LabeledSet,
    pub public: LabeledSet,
    pub independent: LabeledSet,
    pub surrogate: LabeledSet,
    pub test: LabeledSet,
}

impl TaskPools {
    pub fn generate(task: &BlobTask, sizes: &PoolSizes) -> Result<Self> {
        task.validate()?;
        let mut next = 0u64;
        let mut take = |n: usize, tag: SplitTag| {
            let set = task.draw(next, n, tag);
            next += n as u64;
            set
        };
        Ok(Self {
            victim: take(sizes.victim, SplitTag::PrivateTrain),
            public: take(sizes.public, SplitTag::PublicTest),
            independent: take(sizes.independent, SplitTag::PrivateTrain),
            surrogate: take(sizes.surrogate, SplitTag::Surrogate),
            test: take(sizes.test, SplitTag::PublicTest),
        })
    }
}
