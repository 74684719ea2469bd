//! Plain-text parameter checkpoints.
//!
//! ```text
//! mlp <name> <layers>
//! layer <activation> <out> <in>
//! <in values of weight row 0>
//! ...
//! <in values of weight row out-1>
//! <out bias values>
//! ```
//!
//! Values are whitespace separated and printed in shortest round-trip form,
//! so a write/read cycle is lossless.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Dense, Mlp};
use crate::error::{Error, Result};

pub fn write_mlp(out: &mut String, name: &str, net: &Mlp) {
    let _ = writeln!(out, "mlp {name} {}", net.layers.len());
    for l in &net.layers {
        let _ = writeln!(out, "layer {} {} {}", l.activation.name(), l.outputs(), l.inputs());
        for row in l.weight.rows() {
            push_values(out, row.iter());
        }
        push_values(out, l.bias.iter());
    }
}

fn push_values<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn parse_values(line: Option<&str>, expected: usize) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| bad("unexpected end of checkpoint"))?;
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| bad(format!("bad number {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(bad(format!("expected {expected} values, found {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("checkpoint values".into()));
    }
    Ok(values)
}

/// Reads one network block, returning its name.
pub fn read_mlp<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<(String, Mlp)> {
    let header = lines.next().ok_or_else(|| bad("missing mlp header"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let [tag, name, count] = parts[..] else {
        return Err(bad(format!("malformed header {header:?}")));
    };
    if tag != "mlp" {
        return Err(bad(format!("expected mlp header, found {header:?}")));
    }
    let count: usize = count.parse().map_err(|_| bad("bad layer count"))?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| bad("missing layer header"))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let ["layer", act, rows, cols] = parts[..] else {
            return Err(bad(format!("malformed layer header {line:?}")));
        };
        let activation = Activation::from_name(act).ok_or_else(|| bad(format!("unknown activation {act}")))?;
        let rows: usize = rows.parse().map_err(|_| bad("bad row count"))?;
        let cols: usize = cols.parse().map_err(|_| bad("bad column count"))?;
        let mut weight = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            weight.extend(parse_values(lines.next(), cols)?);
        }
        let weight = Array2::from_shape_vec((rows, cols), weight).map_err(|e| bad(e.to_string()))?;
        let bias = Array1::from(parse_values(lines.next(), rows)?);
        layers.push(Dense { weight, bias, activation });
    }
    Ok((name.to_string(), Mlp::from_layers(layers)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::MlpSpec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn round_trip_is_lossless(seed in any::<u64>(), hidden in 1usize..6, scale in -1e6f64..1e6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = MlpSpec::new(3, &[hidden, 4], 2, Activation::Sigmoid);
            let mut net = Mlp::new(&spec, &mut rng).unwrap();
            let flat: Vec<f64> = net.params_flat().iter().map(|v| v * scale).collect();
            net.set_params_flat(&flat).unwrap();
            let mut text = String::new();
            write_mlp(&mut text, "critic1", &net);
            let (name, back) = read_mlp(&mut text.lines()).unwrap();
            prop_assert_eq!(name, "critic1");
            prop_assert_eq!(back.params_flat(), net.params_flat());
            prop_assert_eq!(back.layers.iter().map(|l| l.activation).collect::<Vec<_>>(),
                            net.layers.iter().map(|l| l.activation).collect::<Vec<_>>());
        }
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&MlpSpec::new(2, &[3], 1, Activation::Linear), &mut rng).unwrap();
        let mut text = String::new();
        write_mlp(&mut text, "x", &net);
        let cut: Vec<&str> = text.lines().take(4).collect();
        assert!(read_mlp(&mut cut.into_iter()).is_err());
        assert!(read_mlp(&mut "mlp x".lines()).is_err());
    }
}
