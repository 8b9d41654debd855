//! The subcommand implementations.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use obfnet::data::{parse_adult_csv, split, Dataset, SplitConfig, Target};
use obfnet::eval::{
    eval_accuracy, strong_adversary_protocol, train_probe, utility_protocol,
    weak_adversary_protocol, EvalMode, ProbeConfig, ProtocolKind, ProtocolResult,
};
use obfnet::obfuscator::{
    load_model, save_model, train_with_validation_split, ObfuscatorArch, ObfuscatorModel,
};
use obfnet::privatize::{obfuscate_dataset, PrivacyParams};
use obfnet::tradeoff::{
    convex_hull_auc, emit_curve, gaussian_input_baseline, hull_vertices, parse_curve, sweep_cells,
    CurveKind, OriginConvention, SweepData, SweepRunner, TradeoffCurve, TradeoffPoint,
};

use crate::config::{parse_eval_mode, RunConfig};
use crate::CliError;

/// Reference encoded widths for the census layout: 96 one-hot columns,
/// 6 continuous, 2 + 2 label indicators.
const FEATURE_WIDTH_TARGET: usize = 102;
const ENCODED_WIDTH_TARGET: usize = 106;

/// Published total parameter count the `params` table compares against.
const REFERENCE_TOTAL_PARAMS: usize = 88_494;

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    Ok(Dataset::read_csv(BufReader::new(file))?)
}

fn write_file(path: &Path, content: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, content)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn preprocess(
    input: &Path,
    out_dir: &Path,
    has_header: bool,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let config = RunConfig::load(config)?;
    let file = fs::File::open(input)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", input.display())))?;
    let records = parse_adult_csv(BufReader::new(file), has_header)?;
    let dropped = records.iter().filter(|r| r.has_missing).count();
    let (dataset, encoder) = obfnet::data::load_adult(&records)?;
    let (train, test) = split(
        &dataset,
        SplitConfig {
            train_fraction: config.data.train_fraction,
            seed: config.data.split_seed,
        },
    )?;

    fs::create_dir_all(out_dir)?;
    let mut buf = Vec::new();
    train.write_csv(&mut buf)?;
    write_file(&out_dir.join("train.csv"), &buf)?;
    buf.clear();
    test.write_csv(&mut buf)?;
    write_file(&out_dir.join("test.csv"), &buf)?;

    let manifest = format!(
        "records_parsed {}\n\
         records_dropped_missing {}\n\
         records_kept {}\n\
         feature_width_actual {}\n\
         feature_width_target {}\n\
         encoded_width_actual {}\n\
         encoded_width_target {}\n\
         train_records {}\n\
         test_records {}\n",
        records.len(),
        dropped,
        dataset.len(),
        encoder.feature_width(),
        FEATURE_WIDTH_TARGET,
        encoder.encoded_width(),
        ENCODED_WIDTH_TARGET,
        train.len(),
        test.len(),
    );
    write_file(&out_dir.join("manifest.txt"), manifest.as_bytes())?;
    print!("{manifest}");
    Ok(())
}

pub fn train(
    data: &Path,
    model_out: &Path,
    history_out: &Path,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let config = RunConfig::load(config)?;
    let dataset = read_dataset(data)?;
    let arch = ObfuscatorArch::categorical(dataset.dim());
    let (model, history) = train_with_validation_split(&arch, &dataset, &config.train)?;

    save_model(&model, model_out)?;
    let mut csv = String::from("epoch,train_lae,val_lae,train_lc,val_classifier_acc\n");
    for (i, e) in history.epochs.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            e.train_lae,
            e.val_lae,
            e.train_lc,
            e.val_classifier_acc
        ));
    }
    write_file(history_out, csv.as_bytes())?;
    println!(
        "trained {} epochs, best epoch {}, val L_ae {} -> {}",
        model.meta.epochs_run,
        model.meta.best_epoch,
        model.meta.init_val_lae,
        model.meta.best_val_lae
    );
    println!("model written to {}", model_out.display());
    Ok(())
}

/// Command-line overrides on top of the config's `[privacy]` section.
pub struct PrivacyOverrides {
    pub k: Option<f64>,
    pub lambda: Option<f64>,
    pub no_f: bool,
    pub no_g: bool,
    pub noise_seed: Option<u64>,
}

impl PrivacyOverrides {
    fn apply(&self, mut privacy: PrivacyParams) -> Result<PrivacyParams, CliError> {
        if let Some(k) = self.k {
            privacy.k = k;
        }
        if let Some(lambda) = self.lambda {
            privacy.lambda = lambda;
        }
        if self.no_f {
            privacy.f_enabled = false;
        }
        if self.no_g {
            privacy.g_enabled = false;
        }
        if let Some(seed) = self.noise_seed {
            privacy.noise_seed = seed;
        }
        privacy.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(privacy)
    }
}

pub fn obfuscate(
    model_path: &Path,
    data: &Path,
    out: &Path,
    overrides: PrivacyOverrides,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let config = RunConfig::load(config)?;
    let privacy = overrides.apply(config.privacy)?;
    let model = load_model(model_path)?;
    let dataset = read_dataset(data)?;
    let obfuscated = obfuscate_dataset(&model, &dataset, &privacy)?;
    let mut buf = Vec::new();
    obfuscated.write_csv(&mut buf)?;
    write_file(out, &buf)?;
    println!(
        "obfuscated {} records (k = {}, lambda = {}, g {}, f {}) -> {}",
        obfuscated.len(),
        privacy.k,
        privacy.lambda,
        if privacy.g_enabled { "on" } else { "off" },
        if privacy.f_enabled { "on" } else { "off" },
        out.display()
    );
    Ok(())
}

pub struct EvalArgs {
    pub protocol: String,
    pub model: Option<PathBuf>,
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    pub aux_data: Option<PathBuf>,
    pub eval_mode: Option<String>,
    pub target: Option<String>,
    pub out: PathBuf,
    pub overrides: PrivacyOverrides,
    pub config: Option<PathBuf>,
}

fn load_model_arg(path: &Option<PathBuf>, protocol: &str) -> Result<ObfuscatorModel, CliError> {
    let path = path
        .as_ref()
        .ok_or_else(|| CliError::usage(format!("protocol {protocol} requires --model")))?;
    Ok(load_model(path)?)
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let config = RunConfig::load(args.config.as_deref())?;
    let privacy = args.overrides.apply(config.privacy)?;
    let train_set = read_dataset(&args.train_data)?;
    let test_set = read_dataset(&args.test_data)?;
    let probe = ProbeConfig::adversary(test_set.dim(), config.probe.clone());

    let result = match args.protocol.as_str() {
        "weak" => {
            let model = load_model_arg(&args.model, "weak")?;
            let obf_test = obfuscate_dataset(&model, &test_set, &privacy)?;
            weak_adversary_protocol(&train_set, &obf_test, &probe, &privacy)?
        }
        "strong" => {
            let model = load_model_arg(&args.model, "strong")?;
            let aux = match &args.aux_data {
                Some(path) => read_dataset(path)?,
                None => train_set.clone(),
            };
            let obf_test = obfuscate_dataset(&model, &test_set, &privacy)?;
            strong_adversary_protocol(&model, &privacy, &aux, &obf_test, &probe)?
        }
        "utility" => {
            let model = load_model_arg(&args.model, "utility")?;
            let mode = match &args.eval_mode {
                Some(v) => parse_eval_mode(v)?,
                None => EvalMode::OriginalTest,
            };
            utility_protocol(&model, &privacy, &train_set, &test_set, &probe, mode)?
        }
        "baseline" => {
            // No obfuscation anywhere: the unobfuscated accuracy ceiling
            // for the chosen label.
            let target = match args.target.as_deref() {
                None | Some("nonprivate") => Target::NonPrivate,
                Some("private") => Target::Private,
                Some(other) => {
                    return Err(CliError::usage(format!(
                        "--target: expected private or nonprivate, found {other:?}"
                    )))
                }
            };
            let (params, _) = train_probe(&probe, &train_set, target)?;
            let accuracy = eval_accuracy(&params, &probe.spec, &test_set, target)?;
            ProtocolResult {
                kind: ProtocolKind::Baseline,
                accuracy,
                majority_baseline: test_set.majority_rate(target),
                privacy: PrivacyParams {
                    k: 0.0,
                    lambda: 0.0,
                    g_enabled: false,
                    f_enabled: false,
                    noise_seed: 0,
                },
                probe_seed: probe.hyper.seed,
            }
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown protocol {other:?}; expected weak, strong, utility or baseline"
            )))
        }
    };

    let row = format!(
        "{},{},{},{},{},{}\n",
        result.kind.as_str(),
        result.privacy.k,
        result.privacy.lambda,
        result.probe_seed,
        result.accuracy,
        result.majority_baseline
    );
    let csv = format!("protocol,k,lambda,seed,accuracy,majority_baseline\n{row}");
    write_file(&args.out, csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

/// Complete lines of a possibly truncated curve file, used to resume an
/// interrupted sweep.
fn load_partial_curve(path: &Path) -> Result<Option<TradeoffCurve>, CliError> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let complete: String = text
        .split_inclusive('\n')
        .filter(|line| line.ends_with('\n'))
        .collect();
    if complete.lines().count() < 2 {
        return Ok(None);
    }
    Ok(Some(parse_curve(complete.as_bytes())?))
}

fn point_key(k: f64, lambda: f64, seed: u64) -> (u64, u64, u64) {
    (k.to_bits(), lambda.to_bits(), seed)
}

fn auc_report(label: &str, points: &[TradeoffPoint]) -> Result<String, CliError> {
    let zero = convex_hull_auc(points, OriginConvention::Zero)?;
    let half = convex_hull_auc(points, OriginConvention::Half)?;
    Ok(format!("{label} auc zero {zero}\n{label} auc half {half}\n"))
}

pub fn sweep(
    model_path: &Path,
    train_data: &Path,
    test_data: &Path,
    out_dir: &Path,
    jobs: usize,
    config: Option<&Path>,
) -> Result<(), CliError> {
    if jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    let config = RunConfig::load(config)?;
    let model = load_model(model_path)?;
    let train_set = read_dataset(train_data)?;
    let test_set = read_dataset(test_data)?;
    let (provider_train, adv_train) = split(
        &train_set,
        SplitConfig {
            train_fraction: config.data.provider_fraction,
            seed: config.data.provider_seed,
        },
    )?;
    let probe = ProbeConfig::adversary(test_set.dim(), config.probe.clone());
    let data = SweepData {
        train: &provider_train,
        adv_train: &adv_train,
        test: &test_set,
    };
    let runner = SweepRunner::new(&model, &data, config.sweep.adversary, config.sweep.eval_mode, &probe)?;
    let meta = runner.meta(CurveKind::Proposed);

    fs::create_dir_all(out_dir)?;
    // Record the effective settings next to the artifacts they produced.
    write_file(
        &out_dir.join("effective_config.txt"),
        config.render().as_bytes(),
    )?;
    let curve_path = out_dir.join("curve.csv");
    let mut done: std::collections::BTreeMap<(u64, u64, u64), TradeoffPoint> = Default::default();
    if let Some(previous) = load_partial_curve(&curve_path)? {
        if previous.meta != meta {
            return Err(CliError::config(format!(
                "existing {} was produced under different sweep settings; remove it to restart",
                curve_path.display()
            )));
        }
        for p in previous.points {
            done.insert(point_key(p.k, p.lambda, p.seed), p);
        }
    }

    let cells = sweep_cells(&config.sweep.k_grid, &config.sweep.lambda_grid, probe.hyper.seed);
    let mut points = Vec::with_capacity(cells.len());
    for (idx, privacy) in cells.iter().enumerate() {
        let recorded_lambda = if privacy.g_enabled { privacy.lambda } else { 0.0 };
        let key = point_key(privacy.k, recorded_lambda, privacy.noise_seed);
        let point = match done.get(&key) {
            Some(point) => {
                eprintln!(
                    "cell {}/{}: k = {}, lambda = {recorded_lambda} (cached)",
                    idx + 1,
                    cells.len(),
                    privacy.k
                );
                point.clone()
            }
            None => {
                eprintln!(
                    "cell {}/{}: k = {}, lambda = {recorded_lambda}",
                    idx + 1,
                    cells.len(),
                    privacy.k
                );
                runner.point(privacy)?
            }
        };
        points.push(point);
        // Persist after every cell so an interrupted sweep resumes here.
        let partial = TradeoffCurve {
            points: points.clone(),
            meta,
        };
        let mut buf = Vec::new();
        emit_curve(&partial, &mut buf)?;
        write_file(&curve_path, &buf)?;
    }
    let curve = TradeoffCurve { points, meta };

    let mut report = auc_report("proposed", &curve.points)?;
    if config.sweep.baseline {
        let baseline = gaussian_input_baseline(
            &data,
            &config.sweep.baseline_grid,
            config.sweep.adversary,
            config.sweep.eval_mode,
            &probe,
        )?;
        let mut buf = Vec::new();
        emit_curve(&baseline, &mut buf)?;
        write_file(&out_dir.join("baseline_curve.csv"), &buf)?;
        report.push_str(&auc_report("gaussian_input", &baseline.points)?);
    }
    write_file(&out_dir.join("auc_report.txt"), report.as_bytes())?;

    let hull = hull_vertices(&curve.points, OriginConvention::Zero);
    let hull_text: String = hull
        .iter()
        .map(|(x, y)| format!("{x} {y}\n"))
        .collect();
    write_file(&out_dir.join("hull.txt"), hull_text.as_bytes())?;

    print!("{report}");
    Ok(())
}

pub fn params(input_dim: usize) -> Result<(), CliError> {
    let arch = ObfuscatorArch::categorical(input_dim);
    let rows = [
        ("encoder", arch.encoder.param_count()),
        ("classifier", arch.classifier.param_count()),
        ("rest", arch.rest.param_count()),
        ("decoder", arch.decoder.param_count()),
    ];
    println!("{:<12} {:>10}", "network", "params");
    for (name, count) in rows {
        println!("{name:<12} {count:>10}");
    }
    let total = arch.param_count();
    println!("{:<12} {total:>10}", "total");
    println!("{:<12} {REFERENCE_TOTAL_PARAMS:>10}", "reference");
    let deviation = 100.0 * (total as f64 - REFERENCE_TOTAL_PARAMS as f64)
        / REFERENCE_TOTAL_PARAMS as f64;
    println!("{:<12} {deviation:>9.2}%", "deviation");
    Ok(())
}
