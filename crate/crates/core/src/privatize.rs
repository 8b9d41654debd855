//! Post-hoc privacy functions: `g` clamps the classifier head to a one-hot
//! log-distribution (`0` at the true class, `lambda` elsewhere) and `f`
//! adds zero-mean Gaussian noise with per-record variance `k * nu` to the
//! rest head. Both are applied only after training.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::obfuscator::{concat_bottleneck, ObfuscatorModel};

/// Floor for `nu`, guarding degenerate all-zero rest outputs.
pub const NU_EPSILON: f64 = 1e-8;

/// Data-provider knobs: noise multiplier `k` (variance = `k * nu`), clamp
/// value `lambda`, per-function toggles and the noise seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    pub k: f64,
    pub lambda: f64,
    pub g_enabled: bool,
    pub f_enabled: bool,
    pub noise_seed: u64,
}

impl PrivacyParams {
    /// The paper's operating point: variance `60 nu`, `lambda = -3000`,
    /// both functions active.
    pub fn reference() -> Self {
        PrivacyParams {
            k: 60.0,
            lambda: -3000.0,
            g_enabled: true,
            f_enabled: true,
            noise_seed: 0,
        }
    }

    /// Identity obfuscation: plain reconstruction.
    pub fn identity() -> Self {
        PrivacyParams {
            k: 0.0,
            lambda: -3000.0,
            g_enabled: false,
            f_enabled: false,
            noise_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 0.0 {
            return Err(Error::InvalidConfig(format!("k = {} must be >= 0", self.k)));
        }
        if self.lambda > 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda = {} must be <= 0",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Per-record noise unit: the mean of the rest-head outputs, floored at
/// [`NU_EPSILON`].
pub fn nu(w_p: ArrayView1<f64>) -> f64 {
    let mean = w_p.sum() / w_p.len() as f64;
    mean.max(NU_EPSILON)
}

/// `f`: adds i.i.d. `N(0, k * nu)` per coordinate. Identity when disabled
/// or `k = 0`.
pub fn apply_f(w_p: ArrayView1<f64>, params: &PrivacyParams, rng: &mut ChaCha8Rng) -> Array1<f64> {
    if !params.f_enabled || params.k == 0.0 {
        return w_p.to_owned();
    }
    let std = (params.k * nu(w_p)).sqrt();
    w_p.mapv(|v| v + std * rng.sample::<f64, _>(StandardNormal))
}

/// `g`: replaces the classifier log-probabilities with `0` at the true
/// class and `lambda` everywhere else. Passthrough when disabled.
pub fn apply_g(w_np: ArrayView1<f64>, y_np: usize, params: &PrivacyParams) -> Result<Array1<f64>> {
    if !params.g_enabled {
        return Ok(w_np.to_owned());
    }
    if y_np >= w_np.len() {
        return Err(Error::InvalidLabel {
            label: y_np,
            classes: w_np.len(),
        });
    }
    let mut out = Array1::from_elem(w_np.len(), params.lambda);
    out[y_np] = 0.0;
    Ok(out)
}

/// RNG for one record: the noise seed selects the key, the record index
/// selects the stream, so records are independent and order-insensitive.
fn record_rng(noise_seed: u64, record_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    rng.set_stream(record_index);
    rng
}

/// One record through the full pipeline:
/// `x' = D( g(C(E(x))) || f(R(E(x))) )`, eval mode throughout.
pub fn obfuscate_record(
    model: &ObfuscatorModel,
    x: ArrayView1<f64>,
    y_np: usize,
    params: &PrivacyParams,
    record_index: u64,
) -> Result<Array1<f64>> {
    params.validate()?;
    let x2 = x.insert_axis(ndarray::Axis(0));
    let v = model.encode(x2)?;
    let w_np = model.classify(v.view())?;
    let w_p = model.rest(v.view())?;
    let mut rng = record_rng(params.noise_seed, record_index);
    let w_np_prime = apply_g(w_np.row(0), y_np, params)?;
    let w_p_prime = apply_f(w_p.row(0), params, &mut rng);
    let v_prime = concat_bottleneck(
        &w_np_prime.insert_axis(ndarray::Axis(0)).to_owned(),
        &w_p_prime.insert_axis(ndarray::Axis(0)).to_owned(),
    );
    let x_rec = model.decode(v_prime.view())?;
    Ok(x_rec.row(0).to_owned())
}

/// Maps [`obfuscate_record`] over every record; labels pass through
/// unchanged. Deterministic by `noise_seed`.
pub fn obfuscate_dataset(
    model: &ObfuscatorModel,
    dataset: &Dataset,
    params: &PrivacyParams,
) -> Result<Dataset> {
    params.validate()?;
    let n = dataset.len();
    let d = model.arch.decoder.out_dim();
    // Batched forward for the deterministic part, per-record RNG for the
    // noise so parallel and serial runs agree.
    let v = model.encode(dataset.features.view())?;
    let w_np = model.classify(v.view())?;
    let w_p = model.rest(v.view())?;
    let split_at = model.arch.classifier.out_dim();
    let mut v_prime = Array2::zeros((n, split_at + w_p.ncols()));
    for i in 0..n {
        let y = dataset.y_nonprivate[i] as usize;
        let mut rng = record_rng(params.noise_seed, i as u64);
        let g_out = apply_g(w_np.row(i), y, params)?;
        let f_out = apply_f(w_p.row(i), params, &mut rng);
        v_prime
            .row_mut(i)
            .slice_mut(ndarray::s![..split_at])
            .assign(&g_out);
        v_prime
            .row_mut(i)
            .slice_mut(ndarray::s![split_at..])
            .assign(&f_out);
    }
    let features = model.decode(v_prime.view())?;
    debug_assert_eq!(features.dim(), (n, d));
    Ok(Dataset {
        features,
        y_private: dataset.y_private.clone(),
        y_nonprivate: dataset.y_nonprivate.clone(),
        column_map: dataset.column_map.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthSpec};
    use crate::obfuscator::ObfuscatorArch;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn nu_is_the_arithmetic_mean() {
        assert_eq!(nu(array![1.0, 2.0, 3.0, 2.0].view()), 2.0);
    }

    #[test]
    fn nu_clamps_the_zero_vector() {
        assert_eq!(nu(array![0.0, 0.0].view()), NU_EPSILON);
    }

    #[test]
    fn f_with_zero_k_is_bitwise_identity() {
        let w = array![0.5, 1.5, 0.0];
        let params = PrivacyParams {
            k: 0.0,
            f_enabled: true,
            ..PrivacyParams::identity()
        };
        let mut rng = record_rng(1, 0);
        assert_eq!(apply_f(w.view(), &params, &mut rng), w);
    }

    #[test]
    fn noise_law_matches_k_times_nu() {
        // 1e5 draws; sample std within 2% of sqrt(120) for k = 60, nu = 2.
        let w = array![2.0, 2.0]; // nu = 2
        let params = PrivacyParams {
            k: 60.0,
            f_enabled: true,
            ..PrivacyParams::identity()
        };
        let mut rng = record_rng(7, 0);
        let n = 50_000; // 2 coords per draw -> 1e5 samples
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let out = apply_f(w.view(), &params, &mut rng);
            for j in 0..2 {
                let eta = out[j] - w[j];
                sum += eta;
                sumsq += eta * eta;
            }
        }
        let count = (2 * n) as f64;
        let mean = sum / count;
        let std = (sumsq / count - mean * mean).sqrt();
        let target = 120.0_f64.sqrt();
        assert!(
            (std - target).abs() / target < 0.02,
            "sample std {std} vs {target}"
        );
        // Zero-mean within 3 standard errors.
        let se = target / count.sqrt();
        assert!(mean.abs() < 3.0 * se, "noise mean {mean} exceeds 3 se");
    }

    #[test]
    fn g_forces_exactly_zero_and_lambda() {
        let params = PrivacyParams {
            g_enabled: true,
            lambda: -3000.0,
            ..PrivacyParams::identity()
        };
        let out = apply_g(array![-0.1, -2.3].view(), 0, &params).unwrap();
        assert_eq!(out, array![0.0, -3000.0]);
        let out = apply_g(array![-5.0, -0.5].view(), 1, &params).unwrap();
        assert_eq!(out, array![-3000.0, 0.0]);
    }

    #[test]
    fn g_disabled_is_passthrough() {
        let w = array![-0.7, -0.6];
        let out = apply_g(w.view(), 1, &PrivacyParams::identity()).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn g_rejects_invalid_class() {
        let params = PrivacyParams {
            g_enabled: true,
            ..PrivacyParams::reference()
        };
        assert!(apply_g(array![-0.1, -2.3].view(), 2, &params).is_err());
    }

    fn toy_model_and_data() -> (ObfuscatorModel, Dataset) {
        let ds = synth_generate(&SynthSpec {
            n: 32,
            group_sizes: vec![2, 2, 3],
            num_continuous: 2,
            correlation: 0.5,
            seed: 11,
        })
        .unwrap();
        let model = ObfuscatorModel::init(ObfuscatorArch::compact(ds.dim(), 6), 13).unwrap();
        (model, ds)
    }

    #[test]
    fn identity_params_reproduce_reconstruction_exactly() {
        let (model, ds) = toy_model_and_data();
        let rec = model.reconstruct(ds.features.view()).unwrap();
        let obf = obfuscate_dataset(&model, &ds, &PrivacyParams::identity()).unwrap();
        assert_eq!(obf.features, rec);
    }

    #[test]
    fn obfuscation_is_deterministic_and_label_preserving() {
        let (model, ds) = toy_model_and_data();
        let params = PrivacyParams::reference();
        let a = obfuscate_dataset(&model, &ds, &params).unwrap();
        let b = obfuscate_dataset(&model, &ds, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), ds.len());
        assert_eq!(a.y_private, ds.y_private);
        assert_eq!(a.y_nonprivate, ds.y_nonprivate);
        assert!(a.features.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn record_path_matches_dataset_path() {
        let (model, ds) = toy_model_and_data();
        let params = PrivacyParams::reference();
        let full = obfuscate_dataset(&model, &ds, &params).unwrap();
        for i in [0usize, 5, 31] {
            let single = obfuscate_record(
                &model,
                ds.features.row(i),
                ds.y_nonprivate[i] as usize,
                &params,
                i as u64,
            )
            .unwrap();
            for (a, b) in single.iter().zip(full.features.row(i).iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }
}
