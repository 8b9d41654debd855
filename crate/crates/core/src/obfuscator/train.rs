//! Joint training of the four networks: per batch, gradients of
//! `L_ae + L_C` are taken at one shared parameter point and routed so the
//! decoder and rest head receive only the reconstruction term while the
//! classifier and encoder receive both terms.

use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{concat_bottleneck, ObfuscatorArch, ObfuscatorModel, TrainMeta};
use crate::data::{minibatches, split, Dataset, SplitConfig, Target};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, forward, mse_loss_batch, nll_loss_batch, AdamConfig, AdamState,
    GradientBundle, Mode,
};

/// Training knobs; defaults mirror the categorical-track setup
/// (lr 0.001, batch 64) with patience-5 early stopping.
#[derive(Debug, Clone, Copy)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 64,
            patience: 5,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainHyper {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::InvalidConfig(
                "epochs, batch size and patience must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-epoch curves, in the order the epochs ran.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub train_lae: f64,
    pub val_lae: f64,
    pub train_lc: f64,
    pub val_classifier_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// Gradients of `w_ae * L_ae + w_c * L_C` for one batch at the model's
/// current parameter point. Returns `(l_ae, l_c, [enc, cls, rest, dec])`.
///
/// `L_C` reaches only the classifier and encoder structurally, so with
/// `w_ae = 0` the rest and decoder bundles are identically zero.
pub fn joint_gradients(
    model: &ObfuscatorModel,
    x: ArrayView2<f64>,
    y_np: &[usize],
    w_ae: f64,
    w_c: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, [GradientBundle; 4])> {
    let arch = &model.arch;
    let (v, cache_enc) = forward(&arch.encoder, &model.encoder_params, x, Mode::Train, rng)?;
    let (w_np, cache_cls) = forward(
        &arch.classifier,
        &model.classifier_params,
        v.view(),
        Mode::Train,
        rng,
    )?;
    let (w_p, cache_rest) = forward(&arch.rest, &model.rest_params, v.view(), Mode::Train, rng)?;
    let v_prime = concat_bottleneck(&w_np, &w_p);
    let (x_rec, cache_dec) = forward(
        &arch.decoder,
        &model.decoder_params,
        v_prime.view(),
        Mode::Train,
        rng,
    )?;

    let (l_ae, d_xrec) = mse_loss_batch(x, x_rec.view())?;
    let (l_c, d_wnp_nll) = nll_loss_batch(w_np.view(), y_np)?;

    let (g_dec, d_vprime) = backward(
        &arch.decoder,
        &model.decoder_params,
        &cache_dec,
        d_xrec.mapv(|g| g * w_ae).view(),
    )?;
    let split_at = arch.classifier.out_dim();
    let d_wnp =
        d_vprime.slice(ndarray::s![.., ..split_at]).to_owned() + d_wnp_nll.mapv(|g| g * w_c);
    let d_wp = d_vprime.slice(ndarray::s![.., split_at..]).to_owned();

    let (g_cls, d_v_cls) = backward(
        &arch.classifier,
        &model.classifier_params,
        &cache_cls,
        d_wnp.view(),
    )?;
    let (g_rest, d_v_rest) = backward(&arch.rest, &model.rest_params, &cache_rest, d_wp.view())?;
    let d_v = d_v_cls + d_v_rest;
    let (g_enc, _) = backward(&arch.encoder, &model.encoder_params, &cache_enc, d_v.view())?;

    Ok((l_ae, l_c, [g_enc, g_cls, g_rest, g_dec]))
}

fn labels_usize(ds: &Dataset, target: Target) -> Vec<usize> {
    ds.labels(target).iter().map(|&y| y as usize).collect()
}

fn validation_stats(model: &ObfuscatorModel, val: &Dataset) -> Result<(f64, f64)> {
    let x = val.features.view();
    let x_rec = model.reconstruct(x)?;
    let (val_lae, _) = mse_loss_batch(x, x_rec.view())?;
    let v = model.encode(x)?;
    let w_np = model.classify(v.view())?;
    let correct = w_np
        .rows()
        .into_iter()
        .zip(val.labels(Target::NonPrivate))
        .filter(|(row, &y)| {
            let pred = if row[1] > row[0] { 1 } else { 0 };
            pred == y
        })
        .count();
    Ok((val_lae, correct as f64 / val.len() as f64))
}

/// Runs Algorithm-1-style training: all four Adam updates applied per
/// batch from gradients taken at a shared parameter point; early stopping
/// on validation `L_ae` with best-weights restore.
pub fn train_obfuscator(
    arch: &ObfuscatorArch,
    train: &Dataset,
    val: &Dataset,
    hyper: &TrainHyper,
) -> Result<(ObfuscatorModel, TrainHistory)> {
    hyper.validate()?;
    if val.is_empty() {
        return Err(Error::EmptyDataset("validation set is empty".into()));
    }
    if train.dim() != arch.encoder.in_dim() {
        return Err(Error::DimensionMismatch {
            expected: arch.encoder.in_dim(),
            got: train.dim(),
            context: "training features vs encoder input".into(),
        });
    }

    let mut model = ObfuscatorModel::init(arch.clone(), hyper.seed)?;
    let adam_cfg = AdamConfig::default();
    let mut st_enc = AdamState::new(&model.encoder_params, adam_cfg);
    let mut st_cls = AdamState::new(&model.classifier_params, adam_cfg);
    let mut st_rest = AdamState::new(&model.rest_params, adam_cfg);
    let mut st_dec = AdamState::new(&model.decoder_params, adam_cfg);

    let labels = labels_usize(train, Target::NonPrivate);
    let (init_val_lae, _) = validation_stats(&model, val)?;

    let mut history = TrainHistory::default();
    let mut best = (init_val_lae, 0usize, model.clone());
    let mut stale_epochs = 0usize;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_mul(0x9e3779b9).wrapping_add(17));

    for epoch in 0..hyper.epochs {
        let batches = minibatches(
            train.len(),
            hyper.batch_size,
            hyper.seed.wrapping_add(epoch as u64),
        );
        let mut epoch_lae = 0.0;
        let mut epoch_lc = 0.0;
        for (batch_idx, batch) in batches.iter().enumerate() {
            let x = train.subset(batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (l_ae, l_c, [g_enc, g_cls, g_rest, g_dec]) =
                joint_gradients(&model, x.features.view(), &y, 1.0, 1.0, &mut dropout_rng)?;
            if !l_ae.is_finite() || !l_c.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, batch {batch_idx}: L_ae = {l_ae}, L_C = {l_c}"
                )));
            }
            epoch_lae += l_ae * batch.len() as f64;
            epoch_lc += l_c * batch.len() as f64;
            let lr = hyper.learning_rate;
            adam_step(&mut model.encoder_params, &g_enc, &mut st_enc, lr)?;
            adam_step(&mut model.classifier_params, &g_cls, &mut st_cls, lr)?;
            adam_step(&mut model.rest_params, &g_rest, &mut st_rest, lr)?;
            adam_step(&mut model.decoder_params, &g_dec, &mut st_dec, lr)?;
        }
        let n = train.len() as f64;
        let (val_lae, val_acc) = validation_stats(&model, val)?;
        history.epochs.push(EpochStats {
            train_lae: epoch_lae / n,
            val_lae,
            train_lc: epoch_lc / n,
            val_classifier_acc: val_acc,
        });
        if val_lae < best.0 {
            best = (val_lae, epoch + 1, model.clone());
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= hyper.patience {
                break;
            }
        }
    }

    let (best_val_lae, best_epoch, mut best_model) = best;
    best_model.meta = TrainMeta {
        epochs_run: history.epochs.len(),
        best_epoch,
        init_val_lae,
        best_val_lae,
        seed: hyper.seed,
    };
    Ok((best_model, history))
}

/// Carves a validation slice off `train` (deterministic by the training
/// seed) and trains on the remainder.
pub fn train_with_validation_split(
    arch: &ObfuscatorArch,
    train: &Dataset,
    hyper: &TrainHyper,
) -> Result<(ObfuscatorModel, TrainHistory)> {
    let (fit, val) = split(
        train,
        SplitConfig {
            train_fraction: 1.0 - hyper.val_fraction,
            seed: hyper.seed.wrapping_add(0x5eed),
        },
    )?;
    train_obfuscator(arch, &fit, &val, hyper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthSpec};

    fn synth(n: usize, correlation: f64, seed: u64) -> Dataset {
        synth_generate(&SynthSpec {
            n,
            group_sizes: vec![2, 2, 4, 4],
            num_continuous: 4,
            correlation,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn training_is_deterministic() {
        let ds = synth(256, 0.8, 1);
        let arch = ObfuscatorArch::compact(ds.dim(), 8);
        let hyper = TrainHyper {
            epochs: 3,
            seed: 7,
            ..TrainHyper::default()
        };
        let (m1, h1) = train_with_validation_split(&arch, &ds, &hyper).unwrap();
        let (m2, h2) = train_with_validation_split(&arch, &ds, &hyper).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1.encoder_params, m2.encoder_params);
    }

    #[test]
    fn training_improves_reconstruction() {
        let ds = synth(1024, 0.9, 2);
        let arch = ObfuscatorArch::compact(ds.dim(), 10);
        let hyper = TrainHyper {
            epochs: 20,
            seed: 3,
            ..TrainHyper::default()
        };
        let (model, history) = train_with_validation_split(&arch, &ds, &hyper).unwrap();
        assert!(model.meta.best_val_lae < model.meta.init_val_lae);
        assert!(!history.epochs.is_empty());
        // Early stopping never returns a model worse than the best epoch.
        let min_val = history
            .epochs
            .iter()
            .map(|e| e.val_lae)
            .fold(f64::INFINITY, f64::min);
        assert!(model.meta.best_val_lae <= min_val + 1e-12);
    }

    #[test]
    fn classifier_head_learns_separable_labels() {
        let ds = synth(2048, 1.0, 4);
        let arch = ObfuscatorArch::compact(ds.dim(), 10);
        let hyper = TrainHyper {
            epochs: 15,
            seed: 5,
            ..TrainHyper::default()
        };
        let (_, history) = train_with_validation_split(&arch, &ds, &hyper).unwrap();
        let final_acc = history.epochs.last().unwrap().val_classifier_acc;
        assert!(final_acc >= 0.95, "classifier accuracy {final_acc} < 0.95");
    }

    #[test]
    fn rejects_empty_validation() {
        let ds = synth(64, 0.5, 1);
        let arch = ObfuscatorArch::compact(ds.dim(), 8);
        let empty = ds.subset(&[]);
        assert!(train_obfuscator(&arch, &ds, &empty, &TrainHyper::default()).is_err());
    }
}
