//! Adversary and utility-provider measurement: probe training, accuracy
//! scoring, the weak/strong attack protocols, the utility protocol and
//! the classifier-head decorrelation experiment.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{minibatches, split, Dataset, SplitConfig, Target};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, forward, forward_eval, init_network, nll_loss_batch, AdamConfig,
    AdamState, Activation, LayerSpec, Mode, NetworkParams, NetworkSpec,
};
use crate::obfuscator::{ObfuscatorModel, TrainHyper};
use crate::privatize::{obfuscate_dataset, PrivacyParams};

/// Probe architecture plus its training hyperparameters.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub spec: NetworkSpec,
    pub hyper: TrainHyper,
}

impl ProbeConfig {
    /// The adversary / utility-provider stack:
    /// `in -> 256 -> 256 -> 128 -> 2` with dropout 0.2/0.3/0.4 and a
    /// log-softmax head. Both probes share this shape.
    pub fn adversary(in_dim: usize, hyper: TrainHyper) -> Self {
        let relu = Activation::Relu;
        ProbeConfig {
            spec: NetworkSpec {
                layers: vec![
                    LayerSpec::new(in_dim, 256, relu).with_dropout(0.2),
                    LayerSpec::new(256, 256, relu).with_dropout(0.3),
                    LayerSpec::new(256, 128, relu).with_dropout(0.4),
                    LayerSpec::new(128, 2, Activation::LogSoftmax),
                ],
            },
            hyper,
        }
    }

    /// A small probe for synthetic-data tests.
    pub fn compact(in_dim: usize, hyper: TrainHyper) -> Self {
        ProbeConfig {
            spec: NetworkSpec {
                layers: vec![
                    LayerSpec::new(in_dim, 32, Activation::Relu),
                    LayerSpec::new(32, 2, Activation::LogSoftmax),
                ],
            },
            hyper,
        }
    }
}

/// Which protocol produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    WeakAdversary,
    StrongAdversary,
    Utility,
    Baseline,
}

impl ProtocolKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProtocolKind::WeakAdversary => "weak",
            ProtocolKind::StrongAdversary => "strong",
            ProtocolKind::Utility => "utility",
            ProtocolKind::Baseline => "baseline",
        }
    }
}

/// Where the utility probe is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Train on obfuscated data, test on the original test set.
    OriginalTest,
    /// Train on obfuscated data, test on the obfuscated test set.
    ObfuscatedTest,
}

impl EvalMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalMode::OriginalTest => "original_test",
            EvalMode::ObfuscatedTest => "obfuscated_test",
        }
    }
}

/// An accuracy measurement with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolResult {
    pub kind: ProtocolKind,
    pub accuracy: f64,
    /// Majority-class rate of the scored label, the saturation reference.
    pub majority_baseline: f64,
    pub privacy: PrivacyParams,
    pub probe_seed: u64,
}

/// Per-epoch probe validation curve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeHistory {
    pub val_nll: Vec<f64>,
    pub val_acc: Vec<f64>,
}

fn probe_val_stats(
    spec: &NetworkSpec,
    params: &NetworkParams,
    val: &Dataset,
    target: Target,
) -> Result<(f64, f64)> {
    let out = forward_eval(spec, params, val.features.view())?;
    let labels: Vec<usize> = val.labels(target).iter().map(|&y| y as usize).collect();
    let (nll, _) = nll_loss_batch(out.view(), &labels)?;
    let correct = out
        .rows()
        .into_iter()
        .zip(&labels)
        .filter(|(row, &y)| (if row[1] > row[0] { 1usize } else { 0 }) == y)
        .count();
    Ok((nll, correct as f64 / val.len() as f64))
}

/// Trains a probe on `dataset` to predict `target`: Adam, mini-batches,
/// early stopping on a held-out validation slice with best-weights
/// restore. Deterministic per seed.
pub fn train_probe(
    config: &ProbeConfig,
    dataset: &Dataset,
    target: Target,
) -> Result<(NetworkParams, ProbeHistory)> {
    let hyper = &config.hyper;
    let (fit, val) = split(
        dataset,
        SplitConfig {
            train_fraction: 1.0 - hyper.val_fraction,
            seed: hyper.seed.wrapping_add(0xBEEF),
        },
    )?;
    let mut params = init_network(&config.spec, hyper.seed)?;
    let mut state = AdamState::new(&params, AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_mul(31).wrapping_add(5));
    let labels: Vec<usize> = fit.labels(target).iter().map(|&y| y as usize).collect();

    let mut history = ProbeHistory::default();
    let mut best: (f64, NetworkParams) = (f64::INFINITY, params.clone());
    let mut stale = 0usize;
    for epoch in 0..hyper.epochs {
        for (batch_idx, batch) in minibatches(
            fit.len(),
            hyper.batch_size,
            hyper.seed.wrapping_add(epoch as u64),
        )
        .iter()
        .enumerate()
        {
            let x = fit.subset(batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (out, cache) =
                forward(&config.spec, &params, x.features.view(), Mode::Train, &mut rng)?;
            let (loss, d_out) = nll_loss_batch(out.view(), &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "probe loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            let (grads, _) = backward(&config.spec, &params, &cache, d_out.view())?;
            adam_step(&mut params, &grads, &mut state, hyper.learning_rate)?;
        }
        let (val_nll, val_acc) = probe_val_stats(&config.spec, &params, &val, target)?;
        history.val_nll.push(val_nll);
        history.val_acc.push(val_acc);
        if val_nll < best.0 {
            best = (val_nll, params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                break;
            }
        }
    }
    Ok((best.1, history))
}

/// Argmax predictions of a trained probe, eval mode (no dropout).
pub fn predict(spec: &NetworkSpec, params: &NetworkParams, features: &Array2<f64>) -> Result<Vec<u8>> {
    let out = forward_eval(spec, params, features.view())?;
    Ok(out
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best as u8
        })
        .collect())
}

/// Fraction of argmax-correct predictions on `dataset`.
pub fn eval_accuracy(
    params: &NetworkParams,
    spec: &NetworkSpec,
    dataset: &Dataset,
    target: Target,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("cannot score an empty dataset".into()));
    }
    let preds = predict(spec, params, &dataset.features)?;
    let labels = dataset.labels(target);
    let correct = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Weak adversary: trained on original-format data, scored on the
/// obfuscated test set.
pub fn weak_adversary_protocol(
    orig_train: &Dataset,
    obf_test: &Dataset,
    config: &ProbeConfig,
    privacy: &PrivacyParams,
) -> Result<ProtocolResult> {
    let (params, _) = train_probe(config, orig_train, Target::Private)?;
    let accuracy = eval_accuracy(&params, &config.spec, obf_test, Target::Private)?;
    Ok(ProtocolResult {
        kind: ProtocolKind::WeakAdversary,
        accuracy,
        majority_baseline: obf_test.majority_rate(Target::Private),
        privacy: *privacy,
        probe_seed: config.hyper.seed,
    })
}

/// Noise seed for the strong adversary's self-made dummy dataset; kept
/// distinct from the provider's realization.
fn dummy_noise_seed(noise_seed: u64) -> u64 {
    noise_seed ^ 0xD0_0D
}

/// Strong adversary: has the obfuscator, builds a dummy obfuscated
/// dataset from `aux` with true private labels, trains on it, and is
/// scored on the obfuscated test set.
pub fn strong_adversary_protocol(
    model: &ObfuscatorModel,
    privacy: &PrivacyParams,
    aux: &Dataset,
    obf_test: &Dataset,
    config: &ProbeConfig,
) -> Result<ProtocolResult> {
    let dummy_params = PrivacyParams {
        noise_seed: dummy_noise_seed(privacy.noise_seed),
        ..*privacy
    };
    let obf_aux = obfuscate_dataset(model, aux, &dummy_params)?;
    let (params, _) = train_probe(config, &obf_aux, Target::Private)?;
    let accuracy = eval_accuracy(&params, &config.spec, obf_test, Target::Private)?;
    Ok(ProtocolResult {
        kind: ProtocolKind::StrongAdversary,
        accuracy,
        majority_baseline: obf_test.majority_rate(Target::Private),
        privacy: *privacy,
        probe_seed: config.hyper.seed,
    })
}

/// Utility provider: trained on the obfuscated training data targeting
/// the non-private label, scored per `mode`.
pub fn utility_protocol(
    model: &ObfuscatorModel,
    privacy: &PrivacyParams,
    train: &Dataset,
    orig_test: &Dataset,
    config: &ProbeConfig,
    mode: EvalMode,
) -> Result<ProtocolResult> {
    let obf_train = obfuscate_dataset(model, train, privacy)?;
    let (params, _) = train_probe(config, &obf_train, Target::NonPrivate)?;
    let accuracy = match mode {
        EvalMode::OriginalTest => {
            eval_accuracy(&params, &config.spec, orig_test, Target::NonPrivate)?
        }
        EvalMode::ObfuscatedTest => {
            let obf_test = obfuscate_dataset(
                model,
                orig_test,
                &PrivacyParams {
                    noise_seed: privacy.noise_seed.wrapping_add(1),
                    ..*privacy
                },
            )?;
            eval_accuracy(&params, &config.spec, &obf_test, Target::NonPrivate)?
        }
    };
    Ok(ProtocolResult {
        kind: ProtocolKind::Utility,
        accuracy,
        majority_baseline: orig_test.majority_rate(Target::NonPrivate),
        privacy: *privacy,
        probe_seed: config.hyper.seed,
    })
}

/// Outcome of the classifier-head decorrelation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DecorrelationStats {
    /// Fraction of records where the utility probe recovers the injected
    /// class.
    pub agreement: f64,
    /// Records per injected class.
    pub injected_counts: [usize; 2],
    /// `histogram[injected][predicted]`.
    pub histogram: [[usize; 2]; 2],
}

/// For each record, overwrites the classifier head with a uniformly
/// random one-hot log-distribution (`0`/`lambda`), decodes with the
/// untouched rest head (no noise), and asks the utility probe for the
/// class of the decoded record.
pub fn decorrelation_test(
    model: &ObfuscatorModel,
    dataset: &Dataset,
    lambda: f64,
    utility_params: &NetworkParams,
    utility_spec: &NetworkSpec,
    seed: u64,
) -> Result<DecorrelationStats> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("decorrelation test needs records".into()));
    }
    let n = dataset.len();
    let v = model.encode(dataset.features.view())?;
    let w_p = model.rest(v.view())?;
    let split_at = model.arch.classifier.out_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let injected: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let mut v_prime = Array2::zeros((n, split_at + w_p.ncols()));
    for i in 0..n {
        for c in 0..split_at {
            v_prime[[i, c]] = if c == injected[i] { 0.0 } else { lambda };
        }
        v_prime
            .row_mut(i)
            .slice_mut(ndarray::s![split_at..])
            .assign(&w_p.row(i));
    }
    let decoded = model.decode(v_prime.view())?;
    let preds = predict(utility_spec, utility_params, &decoded)?;
    let mut histogram = [[0usize; 2]; 2];
    let mut injected_counts = [0usize; 2];
    for (inj, pred) in injected.iter().zip(&preds) {
        histogram[*inj][*pred as usize] += 1;
        injected_counts[*inj] += 1;
    }
    let agree = histogram[0][0] + histogram[1][1];
    Ok(DecorrelationStats {
        agreement: agree as f64 / n as f64,
        injected_counts,
        histogram,
    })
}
