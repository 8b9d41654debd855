//! Synthetic categorical datasets for fast property tests: label-coupled
//! one-hot groups plus independent noise columns.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ColumnDesc, ColumnKind, ColumnMap, Dataset};
use crate::error::{Error, Result};

/// Shape and coupling of a generated dataset.
///
/// The first one-hot group signals `y_nonprivate` and the second signals
/// `y_private`: the hot index agrees with the label with probability
/// `(1 + correlation) / 2`. Both signal groups must have size 2 so that
/// correlation 0 yields exact independence. Remaining groups and all
/// continuous columns are independent noise.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n: usize,
    pub group_sizes: Vec<usize>,
    pub num_continuous: usize,
    pub correlation: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("synth n must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::InvalidConfig(format!(
                "correlation {} outside [0,1]",
                self.correlation
            )));
        }
        if self.group_sizes.len() < 2 {
            return Err(Error::InvalidConfig(
                "need at least two one-hot groups (the two label signals)".into(),
            ));
        }
        if self.group_sizes[0] != 2 || self.group_sizes[1] != 2 {
            return Err(Error::InvalidConfig(
                "the two signal groups must have size 2".into(),
            ));
        }
        if self.group_sizes.iter().any(|&s| s < 2) {
            return Err(Error::InvalidConfig("one-hot groups need >= 2 categories".into()));
        }
        Ok(())
    }

    pub fn feature_width(&self) -> usize {
        self.group_sizes.iter().sum::<usize>() + self.num_continuous
    }
}

/// Deterministic-by-seed generation per the coupling rule above.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.feature_width();
    let mut features = Array2::zeros((spec.n, d));
    let mut y_private = Vec::with_capacity(spec.n);
    let mut y_nonprivate = Vec::with_capacity(spec.n);
    let agree_p = (1.0 + spec.correlation) / 2.0;
    for row in 0..spec.n {
        let y_np: u8 = rng.gen_range(0..2);
        let y_p: u8 = rng.gen_range(0..2);
        let mut offset = 0;
        for (g, &size) in spec.group_sizes.iter().enumerate() {
            let hot = match g {
                0 | 1 => {
                    let label = if g == 0 { y_np } else { y_p } as usize;
                    if rng.gen::<f64>() < agree_p {
                        label
                    } else {
                        1 - label
                    }
                }
                _ => rng.gen_range(0..size),
            };
            features[[row, offset + hot]] = 1.0;
            offset += size;
        }
        for _ in 0..spec.num_continuous {
            features[[row, offset]] = rng.gen::<f64>();
            offset += 1;
        }
        y_private.push(y_p);
        y_nonprivate.push(y_np);
    }
    let mut columns = Vec::with_capacity(d);
    for (g, &size) in spec.group_sizes.iter().enumerate() {
        for c in 0..size {
            columns.push(ColumnDesc {
                attribute: format!("group{g}"),
                kind: ColumnKind::OneHot {
                    category: format!("c{c}"),
                },
            });
        }
    }
    for c in 0..spec.num_continuous {
        columns.push(ColumnDesc {
            attribute: format!("cont{c}"),
            kind: ColumnKind::Continuous { min: 0.0, max: 1.0 },
        });
    }
    Ok(Dataset {
        features,
        y_private,
        y_nonprivate,
        column_map: ColumnMap {
            encoded_width: d + 4,
            columns,
        },
    })
}
