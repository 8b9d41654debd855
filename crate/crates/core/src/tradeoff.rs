//! Utility-privacy curves: knob sweeps over (k, lambda), the
//! Gaussian-input-noise baseline, convex-hull AUC scoring and CSV
//! emission.

use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, Target};
use crate::error::{Error, Result};
use crate::eval::{
    eval_accuracy, strong_adversary_protocol, train_probe, utility_protocol, EvalMode, ProbeConfig,
};
use crate::obfuscator::ObfuscatorModel;
use crate::privatize::{obfuscate_dataset, PrivacyParams};

/// Which adversary supplies the leakage coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryKind {
    Weak,
    Strong,
}

impl AdversaryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdversaryKind::Weak => "weak",
            AdversaryKind::Strong => "strong",
        }
    }
}

/// Which obfuscation family produced a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Proposed,
    GaussianInput,
}

impl CurveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CurveKind::Proposed => "proposed",
            CurveKind::GaussianInput => "gaussian_input",
        }
    }
}

/// One measured (leakage, utility) point and the settings behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    pub k: f64,
    pub lambda: f64,
    pub leakage: f64,
    pub utility: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurveMeta {
    pub adversary: AdversaryKind,
    pub eval_mode: EvalMode,
    pub kind: CurveKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurve {
    pub points: Vec<TradeoffPoint>,
    pub meta: CurveMeta,
}

/// Where the AUC region is anchored: the paper flags both choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OriginConvention {
    /// Hull anchored at (0, 0); raw area.
    Zero,
    /// Hull anchored at (0.5, 0.5); area normalized by the 0.5 x 0.5 box.
    Half,
}

/// Area under the upper convex hull of the curve's points, anchored at
/// the convention's origin and integrated from the origin's x to the
/// largest leakage. Points below or left of the origin are clamped to it.
pub fn convex_hull_auc(points: &[TradeoffPoint], convention: OriginConvention) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyDataset("AUC of an empty curve".into()));
    }
    let (ox, oy, norm) = match convention {
        OriginConvention::Zero => (0.0, 0.0, 1.0),
        OriginConvention::Half => (0.5, 0.5, 0.25),
    };
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.leakage.max(ox) - ox, p.utility.max(oy) - oy))
        .collect();
    pts.push((0.0, 0.0));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    // Andrew monotone chain, upper hull.
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut area = 0.0;
    for w in hull.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    Ok(area / norm)
}

/// The datasets a sweep draws on.
pub struct SweepData<'a> {
    /// Released training data; the utility probe trains on its obfuscation.
    pub train: &'a Dataset,
    /// The adversaries' "similar" dataset, disjoint from `train`.
    pub adv_train: &'a Dataset,
    pub test: &'a Dataset,
}

fn cell_seed(base: u64, cell: usize) -> u64 {
    base.wrapping_add(cell as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// The (k, lambda) grid expanded into per-cell privacy settings with the
/// cell seeds already derived. The k = 0 cells run with both privacy
/// functions disabled: they are the no-noise identity corner, the
/// max-utility / max-leakage reference.
pub fn sweep_cells(k_grid: &[f64], lambda_grid: &[f64], base_seed: u64) -> Vec<PrivacyParams> {
    let mut cells = Vec::new();
    for &lambda in lambda_grid {
        for &k in k_grid {
            cells.push(if k == 0.0 {
                PrivacyParams::identity()
            } else {
                PrivacyParams {
                    k,
                    lambda,
                    g_enabled: true,
                    f_enabled: true,
                    noise_seed: 0,
                }
            });
        }
    }
    for (cell, privacy) in cells.iter_mut().enumerate() {
        privacy.noise_seed = cell_seed(base_seed, cell);
    }
    cells
}

/// Evaluates grid cells one at a time so callers can persist partial
/// results and resume.
pub struct SweepRunner<'a> {
    model: &'a ObfuscatorModel,
    data: &'a SweepData<'a>,
    adversary: AdversaryKind,
    eval_mode: EvalMode,
    probe: &'a ProbeConfig,
    /// The weak adversary never sees obfuscated data during training, so
    /// one training (with the recorded seed) serves every cell.
    weak: Option<crate::nn::NetworkParams>,
}

impl<'a> SweepRunner<'a> {
    pub fn new(
        model: &'a ObfuscatorModel,
        data: &'a SweepData<'a>,
        adversary: AdversaryKind,
        eval_mode: EvalMode,
        probe: &'a ProbeConfig,
    ) -> Result<Self> {
        let weak = match adversary {
            AdversaryKind::Weak => Some(train_probe(probe, data.adv_train, Target::Private)?.0),
            AdversaryKind::Strong => None,
        };
        Ok(SweepRunner {
            model,
            data,
            adversary,
            eval_mode,
            probe,
            weak,
        })
    }

    pub fn meta(&self, kind: CurveKind) -> CurveMeta {
        CurveMeta {
            adversary: self.adversary,
            eval_mode: self.eval_mode,
            kind,
        }
    }

    /// Measures one grid cell; `privacy.noise_seed` doubles as the cell's
    /// probe seed so a cell is reproducible from its point alone.
    pub fn point(&self, privacy: &PrivacyParams) -> Result<TradeoffPoint> {
        let seed = privacy.noise_seed;
        let obf_test = obfuscate_dataset(self.model, self.data.test, privacy)?;
        let leakage = match &self.weak {
            Some(weak) => eval_accuracy(weak, &self.probe.spec, &obf_test, Target::Private)?,
            None => {
                strong_adversary_protocol(
                    self.model,
                    privacy,
                    self.data.adv_train,
                    &obf_test,
                    self.probe,
                )?
                .accuracy
            }
        };
        let mut cell_probe = self.probe.clone();
        cell_probe.hyper.seed = seed;
        let utility = utility_protocol(
            self.model,
            privacy,
            self.data.train,
            self.data.test,
            &cell_probe,
            self.eval_mode,
        )?
        .accuracy;
        Ok(TradeoffPoint {
            k: privacy.k,
            lambda: if privacy.g_enabled { privacy.lambda } else { 0.0 },
            leakage,
            utility,
            seed,
        })
    }
}

/// One point per (k, lambda) grid cell, leakage from the chosen adversary
/// and utility from the utility protocol.
pub fn sweep(
    model: &ObfuscatorModel,
    data: &SweepData,
    k_grid: &[f64],
    lambda_grid: &[f64],
    adversary: AdversaryKind,
    eval_mode: EvalMode,
    probe: &ProbeConfig,
) -> Result<TradeoffCurve> {
    let runner = SweepRunner::new(model, data, adversary, eval_mode, probe)?;
    let points = sweep_cells(k_grid, lambda_grid, probe.hyper.seed)
        .iter()
        .map(|privacy| runner.point(privacy))
        .collect::<Result<Vec<_>>>()?;
    Ok(TradeoffCurve {
        points,
        meta: runner.meta(CurveKind::Proposed),
    })
}

fn add_input_noise(dataset: &Dataset, sigma2: f64, seed: u64) -> Dataset {
    if sigma2 == 0.0 {
        return dataset.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma2.sqrt()).expect("valid std");
    let noise = Array2::from_shape_fn(dataset.features.dim(), |_| normal.sample(&mut rng));
    Dataset {
        features: &dataset.features + &noise,
        y_private: dataset.y_private.clone(),
        y_nonprivate: dataset.y_nonprivate.clone(),
        column_map: dataset.column_map.clone(),
    }
}

/// Comparison floor: Gaussian noise added straight to the input features
/// (no autoencoder), swept over `sigma2_grid` and scored with the same
/// adversary and utility protocols as the proposed curve. A weak
/// adversary trains once on the clean auxiliary data; a strong one
/// retrains per cell on its own noisy copy of that data.
pub fn gaussian_input_baseline(
    data: &SweepData,
    sigma2_grid: &[f64],
    adversary: AdversaryKind,
    eval_mode: EvalMode,
    probe: &ProbeConfig,
) -> Result<TradeoffCurve> {
    let weak = match adversary {
        AdversaryKind::Weak => Some(train_probe(probe, data.adv_train, Target::Private)?.0),
        AdversaryKind::Strong => None,
    };
    let mut points = Vec::new();
    for (cell, &sigma2) in sigma2_grid.iter().enumerate() {
        let seed = cell_seed(probe.hyper.seed ^ 0xBA5E, cell);
        let noisy_test = add_input_noise(data.test, sigma2, seed);
        let leakage = match &weak {
            Some(weak) => eval_accuracy(weak, &probe.spec, &noisy_test, Target::Private)?,
            None => {
                let dummy = add_input_noise(data.adv_train, sigma2, seed ^ 0xD0_0D);
                let mut adv_probe = probe.clone();
                adv_probe.hyper.seed = seed;
                let (params, _) = train_probe(&adv_probe, &dummy, Target::Private)?;
                eval_accuracy(&params, &probe.spec, &noisy_test, Target::Private)?
            }
        };
        let noisy_train = add_input_noise(data.train, sigma2, seed.wrapping_add(1));
        let mut cell_probe = probe.clone();
        cell_probe.hyper.seed = seed;
        let (util_params, _) = train_probe(&cell_probe, &noisy_train, Target::NonPrivate)?;
        let utility = match eval_mode {
            EvalMode::OriginalTest => {
                eval_accuracy(&util_params, &probe.spec, data.test, Target::NonPrivate)?
            }
            EvalMode::ObfuscatedTest => {
                eval_accuracy(&util_params, &probe.spec, &noisy_test, Target::NonPrivate)?
            }
        };
        points.push(TradeoffPoint {
            k: sigma2,
            lambda: 0.0,
            leakage,
            utility,
            seed,
        });
    }
    Ok(TradeoffCurve {
        points,
        meta: CurveMeta {
            adversary,
            eval_mode,
            kind: CurveKind::GaussianInput,
        },
    })
}

pub const CURVE_HEADER: &str = "k,lambda,leakage,utility,adversary_type,eval_mode,seed,curve";

/// One row per point, stable column order, shortest round-trip floats.
pub fn emit_curve<W: Write>(curve: &TradeoffCurve, mut w: W) -> Result<()> {
    writeln!(w, "{CURVE_HEADER}")?;
    for p in &curve.points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.k,
            p.lambda,
            p.leakage,
            p.utility,
            curve.meta.adversary.as_str(),
            curve.meta.eval_mode.as_str(),
            p.seed,
            curve.meta.kind.as_str()
        )?;
    }
    Ok(())
}

/// Inverse of [`emit_curve`].
pub fn parse_curve<R: BufRead>(r: R) -> Result<TradeoffCurve> {
    let mut points = Vec::new();
    let mut meta: Option<CurveMeta> = None;
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if idx == 0 {
            if line.trim() != CURVE_HEADER {
                return Err(Error::MalformedRecord {
                    line: 1,
                    reason: "unexpected curve header".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::MalformedRecord {
                line: idx + 1,
                reason: format!("expected 8 columns, found {}", f.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::MalformedRecord {
                line: idx + 1,
                reason: format!("bad number {s:?}"),
            })
        };
        let adversary = match f[4] {
            "weak" => AdversaryKind::Weak,
            "strong" => AdversaryKind::Strong,
            other => {
                return Err(Error::MalformedRecord {
                    line: idx + 1,
                    reason: format!("bad adversary {other:?}"),
                })
            }
        };
        let eval_mode = match f[5] {
            "original_test" => EvalMode::OriginalTest,
            "obfuscated_test" => EvalMode::ObfuscatedTest,
            other => {
                return Err(Error::MalformedRecord {
                    line: idx + 1,
                    reason: format!("bad eval mode {other:?}"),
                })
            }
        };
        let kind = match f[7] {
            "proposed" => CurveKind::Proposed,
            "gaussian_input" => CurveKind::GaussianInput,
            other => {
                return Err(Error::MalformedRecord {
                    line: idx + 1,
                    reason: format!("bad curve kind {other:?}"),
                })
            }
        };
        let this_meta = CurveMeta {
            adversary,
            eval_mode,
            kind,
        };
        match meta {
            None => meta = Some(this_meta),
            Some(m) if m != this_meta => {
                return Err(Error::MalformedRecord {
                    line: idx + 1,
                    reason: "mixed curve metadata".into(),
                })
            }
            _ => {}
        }
        points.push(TradeoffPoint {
            k: num(f[0])?,
            lambda: num(f[1])?,
            leakage: num(f[2])?,
            utility: num(f[3])?,
            seed: f[6].parse().map_err(|_| Error::MalformedRecord {
                line: idx + 1,
                reason: format!("bad seed {:?}", f[6]),
            })?,
        });
    }
    let meta = meta.ok_or_else(|| Error::EmptyDataset("curve CSV has no points".into()))?;
    Ok(TradeoffCurve { points, meta })
}

/// (x, y) vertices of the upper hull used by the AUC, for plotting.
pub fn hull_vertices(points: &[TradeoffPoint], convention: OriginConvention) -> Vec<(f64, f64)> {
    let (ox, oy) = match convention {
        OriginConvention::Zero => (0.0, 0.0),
        OriginConvention::Half => (0.5, 0.5),
    };
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.leakage.max(ox), p.utility.max(oy)))
        .collect();
    pts.push((ox, oy));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            if (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(leakage: f64, utility: f64) -> TradeoffPoint {
        TradeoffPoint {
            k: 0.0,
            lambda: 0.0,
            leakage,
            utility,
            seed: 0,
        }
    }

    #[test]
    fn auc_of_unit_strip_with_origin_anchor() {
        // Hull (0,0) -> (0.5,1) -> (1,1): triangle 0.25 plus strip 0.5.
        let auc = convex_hull_auc(&[pt(0.5, 1.0), pt(1.0, 1.0)], OriginConvention::Zero).unwrap();
        assert!((auc - 0.75).abs() < 1e-12, "auc {auc}");
    }

    #[test]
    fn auc_single_point_is_the_origin_triangle() {
        let auc = convex_hull_auc(&[pt(0.8, 0.6)], OriginConvention::Zero).unwrap();
        assert!((auc - 0.24).abs() < 1e-12, "auc {auc}");
    }

    #[test]
    fn interior_points_do_not_change_the_auc() {
        let base = vec![pt(0.5, 0.9), pt(1.0, 0.95)];
        let a = convex_hull_auc(&base, OriginConvention::Zero).unwrap();
        let mut more = base.clone();
        more.push(pt(0.7, 0.5)); // strictly below the hull
        let b = convex_hull_auc(&more, OriginConvention::Zero).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn auc_is_order_invariant_and_bounded() {
        let a = vec![pt(0.6, 0.8), pt(0.9, 0.85), pt(0.7, 0.7)];
        let mut b = a.clone();
        b.reverse();
        let auc_a = convex_hull_auc(&a, OriginConvention::Zero).unwrap();
        let auc_b = convex_hull_auc(&b, OriginConvention::Zero).unwrap();
        assert_eq!(auc_a, auc_b);
        assert!((0.0..=1.0).contains(&auc_a));
    }

    #[test]
    fn auc_weakly_increases_with_utility() {
        let lo = vec![pt(0.6, 0.7), pt(0.9, 0.8)];
        let hi = vec![pt(0.6, 0.75), pt(0.9, 0.8)];
        let a = convex_hull_auc(&lo, OriginConvention::Zero).unwrap();
        let b = convex_hull_auc(&hi, OriginConvention::Zero).unwrap();
        assert!(b >= a);
    }

    #[test]
    fn half_convention_normalizes_the_quarter_box() {
        // The full box corner (1,1): hull (0.5,0.5)->(1,1), area 0.125,
        // normalized to 0.5.
        let auc = convex_hull_auc(&[pt(1.0, 1.0)], OriginConvention::Half).unwrap();
        assert!((auc - 0.5).abs() < 1e-12, "auc {auc}");
    }

    #[test]
    fn half_convention_ignores_points_below_the_floor() {
        let a = convex_hull_auc(&[pt(0.9, 0.9)], OriginConvention::Half).unwrap();
        let b = convex_hull_auc(&[pt(0.9, 0.9), pt(0.7, 0.3)], OriginConvention::Half).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn empty_curve_is_rejected() {
        assert!(convex_hull_auc(&[], OriginConvention::Zero).is_err());
    }

    #[test]
    fn hull_never_lies_below_any_point() {
        let pts = vec![pt(0.55, 0.8), pt(0.7, 0.85), pt(0.95, 0.75)];
        let hull = hull_vertices(&pts, OriginConvention::Zero);
        for p in &pts {
            // Interpolate the hull at p.leakage.
            let mut y = f64::NEG_INFINITY;
            for w in hull.windows(2) {
                if w[0].0 <= p.leakage && p.leakage <= w[1].0 {
                    let t = if w[1].0 > w[0].0 {
                        (p.leakage - w[0].0) / (w[1].0 - w[0].0)
                    } else {
                        0.0
                    };
                    y = y.max(w[0].1 + t * (w[1].1 - w[0].1));
                }
            }
            assert!(y >= p.utility - 1e-12);
        }
    }

    #[test]
    fn curve_csv_round_trip_is_exact() {
        let curve = TradeoffCurve {
            points: vec![
                TradeoffPoint {
                    k: 60.0,
                    lambda: -3000.0,
                    leakage: 0.71234,
                    utility: 0.8412,
                    seed: 42,
                },
                TradeoffPoint {
                    k: 0.0,
                    lambda: 0.0,
                    leakage: 0.84,
                    utility: 0.85,
                    seed: 43,
                },
            ],
            meta: CurveMeta {
                adversary: AdversaryKind::Weak,
                eval_mode: EvalMode::OriginalTest,
                kind: CurveKind::Proposed,
            },
        };
        let mut buf = Vec::new();
        emit_curve(&curve, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 3);
        let back = parse_curve(&buf[..]).unwrap();
        assert_eq!(back, curve);
        let mut again = Vec::new();
        emit_curve(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }
}
