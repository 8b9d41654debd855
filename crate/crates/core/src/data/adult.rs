//! UCI-Adult-style ingestion: missing-value cleaning, min-max
//! normalization of continuous attributes and one-hot encoding of
//! categoricals, with gender and income extracted as labels.

use std::collections::BTreeMap;
use std::io::BufRead;

use ndarray::Array2;

use super::{ColumnDesc, ColumnKind, ColumnMap, Dataset};
use crate::error::{Error, Result};

/// The literal missing-value token of the published Adult distribution.
pub const MISSING_MARKER: &str = "?";

const CONTINUOUS: [(&str, usize); 6] = [
    ("age", 0),
    ("fnlwgt", 2),
    ("education-num", 4),
    ("capital-gain", 10),
    ("capital-loss", 11),
    ("hours-per-week", 12),
];

const CATEGORICAL: [(&str, usize); 7] = [
    ("workclass", 1),
    ("education", 3),
    ("marital-status", 5),
    ("occupation", 6),
    ("relationship", 7),
    ("race", 8),
    ("native-country", 13),
];

const SEX_COL: usize = 9;
const INCOME_COL: usize = 14;
const NUM_COLS: usize = 15;

/// One parsed Adult row: the 14 attributes plus the income label.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub continuous: [f64; 6],
    pub categorical: [String; 7],
    /// 1 = Male, 0 = Female.
    pub sex: u8,
    /// 1 = more than 50K, 0 = at most 50K.
    pub income: u8,
    pub has_missing: bool,
}

/// Parses the published Adult CSV layout (14 attributes + income).
/// Rows are returned as-is; missing-value rows are flagged, not dropped.
pub fn parse_adult_csv<R: BufRead>(reader: R, has_header: bool) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if idx == 0 && has_header {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != NUM_COLS {
            return Err(Error::MalformedRecord {
                line: lineno,
                reason: format!("expected {NUM_COLS} fields, found {}", fields.len()),
            });
        }
        let mut continuous = [0.0; 6];
        let mut has_missing = fields.iter().any(|f| *f == MISSING_MARKER);
        for (slot, (name, col)) in continuous.iter_mut().zip(CONTINUOUS) {
            if fields[col] == MISSING_MARKER {
                has_missing = true;
                continue;
            }
            *slot = fields[col].parse().map_err(|_| Error::MalformedRecord {
                line: lineno,
                reason: format!("non-numeric {name}: {:?}", fields[col]),
            })?;
        }
        let categorical: [String; 7] =
            CATEGORICAL.map(|(_, col)| fields[col].to_string());
        let sex = match fields[SEX_COL] {
            "Male" => 1,
            "Female" => 0,
            MISSING_MARKER => {
                has_missing = true;
                0
            }
            other => {
                return Err(Error::MalformedRecord {
                    line: lineno,
                    reason: format!("unexpected sex value {other:?}"),
                })
            }
        };
        // The original test split suffixes income labels with a period.
        let income = match fields[INCOME_COL].trim_end_matches('.') {
            "<=50K" => 0,
            ">50K" => 1,
            MISSING_MARKER => {
                has_missing = true;
                0
            }
            other => {
                return Err(Error::MalformedRecord {
                    line: lineno,
                    reason: format!("unexpected income value {other:?}"),
                })
            }
        };
        records.push(RawRecord {
            continuous,
            categorical,
            sex,
            income,
            has_missing,
        });
    }
    Ok(records)
}

/// Fitted preprocessing state: per-attribute category vocabularies and
/// per-attribute min/max normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct AdultEncoder {
    vocab: Vec<BTreeMap<String, usize>>,
    min: [f64; 6],
    max: [f64; 6],
}

impl AdultEncoder {
    /// Builds vocabularies and normalization statistics from the given
    /// (already cleaned) records.
    pub fn fit(records: &[RawRecord]) -> Result<AdultEncoder> {
        if records.is_empty() {
            return Err(Error::EmptyDataset("no records to fit on".into()));
        }
        let mut vocab: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); 7];
        let mut min = [f64::INFINITY; 6];
        let mut max = [f64::NEG_INFINITY; 6];
        for r in records {
            for (v, value) in vocab.iter_mut().zip(&r.categorical) {
                let next = v.len();
                v.entry(value.clone()).or_insert(next);
            }
            for i in 0..6 {
                min[i] = min[i].min(r.continuous[i]);
                max[i] = max[i].max(r.continuous[i]);
            }
        }
        // BTreeMap iteration is sorted by category name; reassign indices
        // in that order so the encoding does not depend on record order.
        for v in &mut vocab {
            let keys: Vec<String> = v.keys().cloned().collect();
            for (i, k) in keys.into_iter().enumerate() {
                v.insert(k, i);
            }
        }
        Ok(AdultEncoder { vocab, min, max })
    }

    pub fn feature_width(&self) -> usize {
        6 + self.vocab.iter().map(|v| v.len()).sum::<usize>()
    }

    /// Feature width plus the gender and income one-hot pairs.
    pub fn encoded_width(&self) -> usize {
        self.feature_width() + 4
    }

    pub fn column_map(&self) -> ColumnMap {
        let mut columns = Vec::with_capacity(self.feature_width());
        for (i, (name, _)) in CONTINUOUS.iter().enumerate() {
            columns.push(ColumnDesc {
                attribute: (*name).to_string(),
                kind: ColumnKind::Continuous {
                    min: self.min[i],
                    max: self.max[i],
                },
            });
        }
        for ((name, _), vocab) in CATEGORICAL.iter().zip(&self.vocab) {
            let mut cats: Vec<(&String, &usize)> = vocab.iter().collect();
            cats.sort_by_key(|(_, &i)| i);
            for (cat, _) in cats {
                columns.push(ColumnDesc {
                    attribute: (*name).to_string(),
                    kind: ColumnKind::OneHot {
                        category: cat.clone(),
                    },
                });
            }
        }
        ColumnMap {
            encoded_width: columns.len() + 4,
            columns,
        }
    }

    /// Encodes cleaned records. Unknown categories are rejected. With
    /// `clip` set, continuous values outside the fitted range are clipped
    /// to `[0, 1]` (used on the test side).
    pub fn encode(&self, records: &[RawRecord], clip: bool) -> Result<Dataset> {
        if records.is_empty() {
            return Err(Error::EmptyDataset("no records to encode".into()));
        }
        let d = self.feature_width();
        let n = records.len();
        let mut features = Array2::zeros((n, d));
        let mut y_private = Vec::with_capacity(n);
        let mut y_nonprivate = Vec::with_capacity(n);
        for (row, r) in records.iter().enumerate() {
            for i in 0..6 {
                let range = self.max[i] - self.min[i];
                let mut v = if range > 0.0 {
                    (r.continuous[i] - self.min[i]) / range
                } else {
                    0.0
                };
                if clip {
                    v = v.clamp(0.0, 1.0);
                } else if !(0.0..=1.0).contains(&v) {
                    return Err(Error::MalformedRecord {
                        line: row + 1,
                        reason: format!(
                            "continuous value {} outside fitted range",
                            r.continuous[i]
                        ),
                    });
                }
                features[[row, i]] = v;
            }
            let mut offset = 6;
            for (k, vocab) in self.vocab.iter().enumerate() {
                let idx = vocab.get(&r.categorical[k]).ok_or_else(|| {
                    Error::UnknownCategory {
                        attribute: CATEGORICAL[k].0.to_string(),
                        value: r.categorical[k].clone(),
                    }
                })?;
                features[[row, offset + idx]] = 1.0;
                offset += vocab.len();
            }
            y_private.push(r.sex);
            y_nonprivate.push(r.income);
        }
        Ok(Dataset {
            features,
            y_private,
            y_nonprivate,
            column_map: self.column_map(),
        })
    }

    /// Inverse of `encode` for one feature row: denormalizes continuous
    /// columns and reads one-hot groups back into category names.
    pub fn decode_row(&self, row: ndarray::ArrayView1<f64>) -> RawRecord {
        let mut continuous = [0.0; 6];
        for i in 0..6 {
            continuous[i] = self.min[i] + row[i] * (self.max[i] - self.min[i]);
        }
        let mut categorical: [String; 7] = Default::default();
        let mut offset = 6;
        for (k, vocab) in self.vocab.iter().enumerate() {
            let size = vocab.len();
            let group = row.slice(ndarray::s![offset..offset + size]);
            let best = group
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            categorical[k] = vocab
                .iter()
                .find(|(_, &i)| i == best)
                .map(|(name, _)| name.clone())
                .unwrap_or_default();
            offset += size;
        }
        RawRecord {
            continuous,
            categorical,
            sex: 0,
            income: 0,
            has_missing: false,
        }
    }
}

/// One-shot preprocessing: drops missing-value rows, fits the encoder on
/// the retained records and encodes them.
pub fn load_adult(records: &[RawRecord]) -> Result<(Dataset, AdultEncoder)> {
    let clean: Vec<RawRecord> = records.iter().filter(|r| !r.has_missing).cloned().collect();
    let encoder = AdultEncoder::fit(&clean)?;
    let dataset = encoder.encode(&clean, false)?;
    Ok((dataset, encoder))
}
