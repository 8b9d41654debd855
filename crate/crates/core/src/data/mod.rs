//! Dataset representation, deterministic splits and mini-batching, plus
//! CSV serialization of encoded datasets.

mod adult;
mod synth;

pub use adult::{load_adult, parse_adult_csv, AdultEncoder, RawRecord, MISSING_MARKER};
pub use synth::{synth_generate, SynthSpec};

use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Which label a probe or protocol targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Private,
    NonPrivate,
}

/// What one encoded feature column holds.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    /// Min-max normalized continuous attribute; `min`/`max` are the fitted
    /// normalization statistics.
    Continuous { min: f64, max: f64 },
    /// One indicator column of a one-hot encoded categorical attribute.
    OneHot { category: String },
    /// Column of unknown provenance (e.g. re-loaded from an encoded CSV).
    Opaque,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDesc {
    /// Source attribute name (or a synthetic column name).
    pub attribute: String,
    pub kind: ColumnKind,
}

/// Description of every encoded feature column, in order, plus the full
/// encoded width including the two label one-hot pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub columns: Vec<ColumnDesc>,
    /// Feature width + 4 (one-hot pairs for the two extracted labels).
    pub encoded_width: usize,
}

impl ColumnMap {
    pub fn feature_width(&self) -> usize {
        self.columns.len()
    }

    pub fn opaque(width: usize) -> Self {
        ColumnMap {
            columns: (0..width)
                .map(|i| ColumnDesc {
                    attribute: format!("f{i}"),
                    kind: ColumnKind::Opaque,
                })
                .collect(),
            encoded_width: width + 4,
        }
    }
}

/// Encoded records with the two binary labels split out of the features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `(n, d)` feature matrix; values live in `[0, 1]`.
    pub features: Array2<f64>,
    pub y_private: Vec<u8>,
    pub y_nonprivate: Vec<u8>,
    pub column_map: ColumnMap,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self, target: Target) -> &[u8] {
        match target {
            Target::Private => &self.y_private,
            Target::NonPrivate => &self.y_nonprivate,
        }
    }

    /// Fraction of records carrying the most common value of `target`.
    pub fn majority_rate(&self, target: Target) -> f64 {
        let labels = self.labels(target);
        if labels.is_empty() {
            return 0.0;
        }
        let ones = labels.iter().filter(|&&y| y == 1).count() as f64;
        let n = labels.len() as f64;
        (ones / n).max(1.0 - ones / n)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = if indices.is_empty() {
            Array2::zeros((0, self.dim()))
        } else {
            let rows: Vec<_> = indices.iter().map(|&i| self.features.row(i)).collect();
            ndarray::stack(ndarray::Axis(0), &rows).expect("consistent row widths")
        };
        Dataset {
            features,
            y_private: indices.iter().map(|&i| self.y_private[i]).collect(),
            y_nonprivate: indices.iter().map(|&i| self.y_nonprivate[i]).collect(),
            column_map: self.column_map.clone(),
        }
    }

    /// Writes the encoded dataset as CSV: feature columns, then the two
    /// label columns. Floats use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names: Vec<String> = (0..self.dim()).map(|i| format!("f{i}")).collect();
        writeln!(w, "{},y_private,y_nonprivate", names.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{},{}",
                row.join(","),
                self.y_private[i],
                self.y_nonprivate[i]
            )?;
        }
        Ok(())
    }

    /// Reads a dataset previously written by [`Dataset::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Dataset> {
        let mut features: Vec<f64> = Vec::new();
        let mut y_private = Vec::new();
        let mut y_nonprivate = Vec::new();
        let mut width = None;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                continue; // header
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 3 {
                return Err(Error::MalformedRecord {
                    line: lineno + 1,
                    reason: "fewer than 3 columns".into(),
                });
            }
            let d = fields.len() - 2;
            match width {
                None => width = Some(d),
                Some(w) if w != d => {
                    return Err(Error::MalformedRecord {
                        line: lineno + 1,
                        reason: format!("expected {w} feature columns, found {d}"),
                    })
                }
                _ => {}
            }
            for f in &fields[..d] {
                features.push(f.parse().map_err(|_| Error::MalformedRecord {
                    line: lineno + 1,
                    reason: format!("bad float {f:?}"),
                })?);
            }
            let parse_label = |s: &str| -> Result<u8> {
                match s.trim() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::MalformedRecord {
                        line: lineno + 1,
                        reason: format!("bad label {other:?}"),
                    }),
                }
            };
            y_private.push(parse_label(fields[d])?);
            y_nonprivate.push(parse_label(fields[d + 1])?);
        }
        let width = width.ok_or_else(|| Error::EmptyDataset("CSV has no records".into()))?;
        let n = y_private.len();
        Ok(Dataset {
            features: Array2::from_shape_vec((n, width), features)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?,
            y_private,
            y_nonprivate,
            column_map: ColumnMap::opaque(width),
        })
    }
}

/// Train/test split configuration.
#[derive(Debug, Clone, Copy)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Deterministic shuffled split: `floor(fraction * n)` records to train,
/// the rest to test. Disjoint and exhaustive.
pub fn split(dataset: &Dataset, config: SplitConfig) -> Result<(Dataset, Dataset)> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction {} outside (0,1)",
            config.train_fraction
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::EmptyDataset("need at least 2 records to split".into()));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    indices.shuffle(&mut rng);
    let n_train = (config.train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidConfig(format!(
            "fraction {} leaves an empty side for n = {n}",
            config.train_fraction
        )));
    }
    let train = dataset.subset(&indices[..n_train]);
    let test = dataset.subset(&indices[n_train..]);
    Ok((train, test))
}

/// One epoch worth of mini-batch index lists: a seeded permutation of
/// `0..n` chunked into batches of `n_b` (last batch may be short).
pub fn minibatches(n: usize, n_b: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(n_b >= 1, "batch size must be at least 1");
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    indices.chunks(n_b).map(|c| c.to_vec()).collect()
}
