//! Plain-text network checkpoints.
//!
//! One keyword-prefixed line per field; floats rendered with 17 significant
//! digits so save/load round-trips are bit-exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{DeepLseNet, LayerParams};

const FORMAT: &str = "deep-lse-net";
const VERSION: u32 = 1;

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders the network in the checkpoint format.
pub fn to_string(net: &DeepLseNet) -> String {
    let mut out = String::new();
    out.push_str(&format!("{FORMAT} {VERSION}\n"));
    out.push_str(&format!("input_dim {}\n", net.input_dim()));
    out.push_str(&format!("depth {}\n", net.depth()));
    out.push_str(&format!("output_bias {}\n", fmt(net.output_bias())));
    for (idx, layer) in net.layers().iter().enumerate() {
        out.push_str(&format!("layer {idx} width {}\n", layer.width()));
        out.push_str(&format!("temp_raw {}\n", fmt(layer.temp_raw)));
        push_row(&mut out, "slopes", &layer.slopes);
        push_row(&mut out, "intercepts", &layer.intercepts);
        if let Some(skips) = &layer.skip_raw {
            push_row(&mut out, "skip_raw", skips);
        }
    }
    out
}

fn push_row(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        out.push(' ');
        out.push_str(&fmt(*v));
    }
    out.push('\n');
}

/// Parses a checkpoint produced by [`to_string`].
pub fn from_str(text: &str) -> Result<DeepLseNet> {
    let mut lines = text.lines().enumerate();
    let mut next = |expect: &'static str| -> Result<(usize, Vec<&str>)> {
        for (no, line) in lines.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] != expect {
                return Err(Error::CheckpointParse {
                    line: no + 1,
                    why: format!("expected `{expect}`, found `{}`", fields[0]),
                });
            }
            return Ok((no + 1, fields));
        }
        Err(Error::CheckpointParse {
            line: 0,
            why: format!("missing `{expect}` record"),
        })
    };

    let (no, header) = next(FORMAT)?;
    let version: u32 = parse_field(no, header.get(1))?;
    if version != VERSION {
        return Err(Error::CheckpointParse {
            line: no,
            why: format!("unsupported version {version}"),
        });
    }
    let (no, dim_line) = next("input_dim")?;
    let input_dim: usize = parse_field(no, dim_line.get(1))?;
    let (no, depth_line) = next("depth")?;
    let depth: usize = parse_field(no, depth_line.get(1))?;
    let (no, bias_line) = next("output_bias")?;
    let output_bias: f64 = parse_field(no, bias_line.get(1))?;

    let mut layers = Vec::with_capacity(depth);
    for idx in 0..depth {
        let (no, layer_line) = next("layer")?;
        let got: usize = parse_field(no, layer_line.get(1))?;
        if got != idx {
            return Err(Error::CheckpointParse {
                line: no,
                why: format!("expected layer {idx}, found {got}"),
            });
        }
        let width: usize = parse_field(no, layer_line.get(3))?;
        let (no, temp_line) = next("temp_raw")?;
        let temp_raw: f64 = parse_field(no, temp_line.get(1))?;
        let slopes = parse_row(next("slopes")?, width * input_dim)?;
        let intercepts = parse_row(next("intercepts")?, width)?;
        let skip_raw = if idx > 0 {
            Some(parse_row(next("skip_raw")?, width)?)
        } else {
            None
        };
        layers.push(LayerParams {
            slopes,
            intercepts,
            skip_raw,
            temp_raw,
        });
    }
    DeepLseNet::from_parts(input_dim, layers, output_bias)
}

fn parse_field<T: std::str::FromStr>(line: usize, field: Option<&&str>) -> Result<T> {
    field
        .ok_or(Error::CheckpointParse {
            line,
            why: "missing value".into(),
        })?
        .parse()
        .map_err(|_| Error::CheckpointParse {
            line,
            why: "unparsable value".into(),
        })
}

fn parse_row((line, fields): (usize, Vec<&str>), expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = fields[1..]
        .iter()
        .map(|f| f.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::CheckpointParse {
            line,
            why: "unparsable float".into(),
        })?;
    if values.len() != expected {
        return Err(Error::CheckpointParse {
            line,
            why: format!("expected {expected} values, found {}", values.len()),
        });
    }
    Ok(values)
}

pub fn save(net: &DeepLseNet, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, to_string(net))?)
}

pub fn load(path: impl AsRef<Path>) -> Result<DeepLseNet> {
    from_str(&fs::read_to_string(path)?)
}
