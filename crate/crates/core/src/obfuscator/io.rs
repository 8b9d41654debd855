//! Text model format: UTF-8, magic line `OBFNET v1`, then the four named
//! blocks with layer shapes, activations, dropout and 17-significant-digit
//! decimal parameters. Round-trips bit-exactly across machines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{ObfuscatorArch, ObfuscatorModel, TrainMeta};
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerParams, LayerSpec, NetworkParams, NetworkSpec};

pub const MODEL_MAGIC: &str = "OBFNET v1";

fn fmt_f64(v: f64) -> String {
    // 17 significant digits round-trips every finite f64.
    format!("{v:.16e}")
}

fn activation_token(a: Activation) -> String {
    match a {
        Activation::LeakyRelu { slope } => format!("leaky_relu {}", fmt_f64(slope)),
        other => other.name().to_string(),
    }
}

fn write_block(out: &mut String, name: &str, spec: &NetworkSpec, params: &NetworkParams) {
    writeln!(out, "block {name} {}", spec.layers.len()).unwrap();
    for (layer, lp) in spec.layers.iter().zip(&params.layers) {
        writeln!(
            out,
            "layer {} {} {} {}",
            layer.in_dim,
            layer.out_dim,
            activation_token(layer.activation),
            fmt_f64(layer.dropout_p)
        )
        .unwrap();
        let w: Vec<String> = lp.weights.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "weights {}", w.join(" ")).unwrap();
        let b: Vec<String> = lp.bias.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "biases {}", b.join(" ")).unwrap();
    }
}

/// Serializes the model to `path`.
pub fn save_model(model: &ObfuscatorModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{MODEL_MAGIC}").unwrap();
    let m = &model.meta;
    writeln!(
        out,
        "meta {} {} {} {} {}",
        m.epochs_run,
        m.best_epoch,
        fmt_f64(m.init_val_lae),
        fmt_f64(m.best_val_lae),
        m.seed
    )
    .unwrap();
    write_block(&mut out, "encoder", &model.arch.encoder, &model.encoder_params);
    write_block(
        &mut out,
        "classifier",
        &model.arch.classifier,
        &model.classifier_params,
    );
    write_block(&mut out, "rest", &model.arch.rest, &model.rest_params);
    write_block(&mut out, "decoder", &model.arch.decoder, &model.decoder_params);
    fs::write(path, out)?;
    Ok(())
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    lineno: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.lineno += 1;
        self.iter
            .next()
            .ok_or_else(|| Error::ModelFormat(format!("truncated file at line {}", self.lineno)))
    }
}

fn parse_floats(tokens: &[&str], expected: usize, what: &str, lineno: usize) -> Result<Vec<f64>> {
    if tokens.len() != expected {
        return Err(Error::ModelFormat(format!(
            "line {lineno}: expected {expected} {what} values, found {}",
            tokens.len()
        )));
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::ModelFormat(format!("line {lineno}: bad float {t:?}")))
        })
        .collect()
}

fn read_block(lines: &mut Lines, name: &str) -> Result<(NetworkSpec, NetworkParams)> {
    let header = lines.next()?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "block" || parts[1] != name {
        return Err(Error::ModelFormat(format!(
            "line {}: expected \"block {name} <layers>\", found {header:?}",
            lines.lineno
        )));
    }
    let n_layers: usize = parts[2]
        .parse()
        .map_err(|_| Error::ModelFormat(format!("line {}: bad layer count", lines.lineno)))?;
    let mut layers = Vec::with_capacity(n_layers);
    let mut params = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let line = lines.next()?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() < 4 || t[0] != "layer" {
            return Err(Error::ModelFormat(format!(
                "line {}: expected a layer header, found {line:?}",
                lines.lineno
            )));
        }
        let in_dim: usize = t[1]
            .parse()
            .map_err(|_| Error::ModelFormat(format!("line {}: bad in_dim", lines.lineno)))?;
        let out_dim: usize = t[2]
            .parse()
            .map_err(|_| Error::ModelFormat(format!("line {}: bad out_dim", lines.lineno)))?;
        let (activation, dropout_idx) = match t[3] {
            "none" => (Activation::None, 4),
            "relu" => (Activation::Relu, 4),
            "sigmoid" => (Activation::Sigmoid, 4),
            "log_softmax" => (Activation::LogSoftmax, 4),
            "leaky_relu" => {
                let slope: f64 = t
                    .get(4)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| {
                        Error::ModelFormat(format!("line {}: leaky_relu needs a slope", lines.lineno))
                    })?;
                (Activation::LeakyRelu { slope }, 5)
            }
            other => {
                return Err(Error::ModelFormat(format!(
                    "line {}: unknown activation {other:?}",
                    lines.lineno
                )))
            }
        };
        let dropout_p: f64 = t
            .get(dropout_idx)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ModelFormat(format!("line {}: bad dropout_p", lines.lineno)))?;
        let w_line = lines.next()?;
        let w_tokens: Vec<&str> = w_line.split_whitespace().collect();
        if w_tokens.first() != Some(&"weights") {
            return Err(Error::ModelFormat(format!(
                "line {}: expected weights",
                lines.lineno
            )));
        }
        let w = parse_floats(&w_tokens[1..], in_dim * out_dim, "weight", lines.lineno)?;
        let b_line = lines.next()?;
        let b_tokens: Vec<&str> = b_line.split_whitespace().collect();
        if b_tokens.first() != Some(&"biases") {
            return Err(Error::ModelFormat(format!(
                "line {}: expected biases",
                lines.lineno
            )));
        }
        let b = parse_floats(&b_tokens[1..], out_dim, "bias", lines.lineno)?;
        layers.push(LayerSpec {
            in_dim,
            out_dim,
            activation,
            dropout_p,
        });
        params.push(LayerParams {
            weights: Array2::from_shape_vec((out_dim, in_dim), w)
                .map_err(|e| Error::ModelFormat(e.to_string()))?,
            bias: Array1::from_vec(b),
        });
    }
    Ok((NetworkSpec { layers }, NetworkParams { layers: params }))
}

/// Loads a model saved by [`save_model`]; forward outputs of the loaded
/// model are bitwise equal to the original's.
pub fn load_model(path: &Path) -> Result<ObfuscatorModel> {
    let text = fs::read_to_string(path)?;
    let mut lines = Lines {
        iter: text.lines(),
        lineno: 0,
    };
    let magic = lines.next()?;
    if magic != MODEL_MAGIC {
        return Err(Error::ModelFormat(format!(
            "bad magic line {magic:?}; expected {MODEL_MAGIC:?}"
        )));
    }
    let meta_line = lines.next()?;
    let t: Vec<&str> = meta_line.split_whitespace().collect();
    if t.len() != 6 || t[0] != "meta" {
        return Err(Error::ModelFormat("malformed meta line".into()));
    }
    let meta = TrainMeta {
        epochs_run: t[1]
            .parse()
            .map_err(|_| Error::ModelFormat("bad epochs_run".into()))?,
        best_epoch: t[2]
            .parse()
            .map_err(|_| Error::ModelFormat("bad best_epoch".into()))?,
        init_val_lae: t[3]
            .parse()
            .map_err(|_| Error::ModelFormat("bad init_val_lae".into()))?,
        best_val_lae: t[4]
            .parse()
            .map_err(|_| Error::ModelFormat("bad best_val_lae".into()))?,
        seed: t[5]
            .parse()
            .map_err(|_| Error::ModelFormat("bad seed".into()))?,
    };
    let (enc_spec, enc) = read_block(&mut lines, "encoder")?;
    let (cls_spec, cls) = read_block(&mut lines, "classifier")?;
    let (rest_spec, rest) = read_block(&mut lines, "rest")?;
    let (dec_spec, dec) = read_block(&mut lines, "decoder")?;
    let arch = ObfuscatorArch::new(enc_spec, cls_spec, rest_spec, dec_spec)
        .map_err(|e| Error::ModelFormat(format!("inconsistent shapes: {e}")))?;
    Ok(ObfuscatorModel {
        arch,
        encoder_params: enc,
        classifier_params: cls,
        rest_params: rest,
        decoder_params: dec,
        meta,
    })
}
