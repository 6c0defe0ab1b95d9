//! Model JSON: `{"layers":[{"weight":[[..]],"bias":[..],"activation":{..}|null}]}`.
//!
//! Numbers are written with 17 significant digits so that loading a saved
//! model reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use certiprop_core::{ActivationKind, ActivationSpec, AffineLayer, Layer, Matrix, Network};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    layers: Vec<LayerFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: Option<ActivationFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActivationFile {
    kind: String,
    #[serde(default)]
    eta: Option<f64>,
    #[serde(default)]
    r: Option<Vec<f64>>,
}

fn num(out: &mut String, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(CliError::Validation(certiprop_core::Error::NonFinite("model parameter")));
    }
    write!(out, "{v:.16e}").expect("writing to a String");
    Ok(())
}

fn list(out: &mut String, v: &[f64]) -> Result<()> {
    out.push('[');
    for (i, &x) in v.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        num(out, x)?;
    }
    out.push(']');
    Ok(())
}

/// Serializes `net`, one layer per line.
pub fn save_model(net: &Network) -> Result<String> {
    let mut out = String::from("{\"layers\":[\n");
    for (k, layer) in net.layers().iter().enumerate() {
        out.push_str("{\"weight\":[");
        let w = &layer.affine.weight;
        for i in 0..w.rows() {
            if i > 0 {
                out.push(',');
            }
            list(&mut out, w.row(i))?;
        }
        out.push_str("],\"bias\":");
        list(&mut out, &layer.affine.bias)?;
        out.push_str(",\"activation\":");
        match &layer.activation {
            None => out.push_str("null"),
            Some(a) => {
                write!(out, "{{\"kind\":\"{}\"", a.kind().name()).unwrap();
                if a.kind() != ActivationKind::Relu {
                    out.push_str(",\"eta\":");
                    num(&mut out, a.eta())?;
                }
                if let Some(r) = a.ramp_points() {
                    out.push_str(",\"r\":");
                    list(&mut out, r)?;
                }
                out.push('}');
            }
        }
        out.push('}');
        if k + 1 < net.depth() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("]}\n");
    Ok(out)
}

fn activation(a: ActivationFile, k: usize) -> Result<ActivationSpec> {
    let invalid = |msg: String| CliError::Validation(certiprop_core::Error::InvalidActivation(format!("layer {k}: {msg}")));
    let spec = match a.kind.as_str() {
        "relu" => {
            if a.eta.is_some_and(|e| e != 0.0) || a.r.is_some() {
                return Err(invalid("relu takes no eta or r".into()));
            }
            ActivationSpec::relu()
        }
        "leaky_relu" => {
            if a.r.is_some() {
                return Err(invalid("leaky_relu takes no r".into()));
            }
            ActivationSpec::leaky_relu(a.eta.ok_or_else(|| invalid("leaky_relu needs eta".into()))?)?
        }
        "param_ramp" => ActivationSpec::param_ramp(
            a.eta.ok_or_else(|| invalid("param_ramp needs eta".into()))?,
            a.r.ok_or_else(|| invalid("param_ramp needs r".into()))?,
        )?,
        other => return Err(invalid(format!("unknown kind {other:?}"))),
    };
    Ok(spec)
}

/// Parses and validates a model. Syntax errors carry line and column.
pub fn load_model(text: &str) -> Result<Network> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| CliError::Parse {
        what: "model".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (k, l) in file.layers.into_iter().enumerate() {
        let weight = Matrix::from_rows(&l.weight).map_err(|e| CliError::Validation(relabel(e, k)))?;
        let affine = AffineLayer::new(weight, l.bias).map_err(|e| CliError::Validation(relabel(e, k)))?;
        let activation = l.activation.map(|a| activation(a, k)).transpose()?;
        layers.push(Layer { affine, activation });
    }
    Ok(Network::new(layers)?)
}

fn relabel(e: certiprop_core::Error, k: usize) -> certiprop_core::Error {
    match e {
        certiprop_core::Error::DimensionMismatch { what, expected, found, .. } => {
            certiprop_core::Error::DimensionMismatch { layer: k, what, expected, found }
        }
        e => e,
    }
}

pub fn read_model(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    load_model(&text)
}

pub fn write_model(path: &Path, net: &Network) -> Result<()> {
    std::fs::write(path, save_model(net)?).map_err(|e| CliError::io(path, e))
}
