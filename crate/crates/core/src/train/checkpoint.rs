//! Plain-text weight dump.
//!
//! ```text
//! pllcp-model v1
//! kind=mlp hidden=16 input_dim=2 num_classes=3 seed=7 params=99
//! <one parameter per line>
//! ```
//!
//! Parameters are written with Rust's shortest round-trip float formatting,
//! so reading a dump back reproduces the weights bit for bit.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::train::model::{ModelKind, ModelSpec, Network};

const MAGIC: &str = "pllcp-model v1";

pub fn write_checkpoint<W: Write>(net: &Network, mut w: W) -> Result<()> {
    let spec = net.spec();
    let kind = match &spec.kind {
        ModelKind::SoftmaxRegression => "kind=softmax".to_string(),
        ModelKind::Mlp { hidden } => format!(
            "kind=mlp hidden={}",
            hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        ),
    };
    writeln!(w, "{MAGIC}")?;
    writeln!(
        w,
        "{kind} input_dim={} num_classes={} seed={} params={}",
        spec.input_dim,
        spec.num_classes,
        net.seed(),
        net.params().len()
    )?;
    for p in net.params() {
        writeln!(w, "{p}")?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Network> {
    let mut lines = r.lines();
    let magic = lines.next().ok_or_else(|| parse_err(1, "empty checkpoint"))??;
    if magic.trim() != MAGIC {
        return Err(parse_err(1, format!("bad magic {magic:?}")));
    }
    let header = lines.next().ok_or_else(|| parse_err(2, "missing header"))??;

    let mut kind = None;
    let mut hidden: Option<Vec<usize>> = None;
    let mut input_dim = None;
    let mut num_classes = None;
    let mut seed = None;
    let mut count = None;
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(2, format!("malformed field {field:?}")))?;
        let num = |v: &str| v.parse::<u64>().map_err(|e| parse_err(2, format!("{key}: {e}")));
        match key {
            "kind" => kind = Some(value.to_string()),
            "hidden" => {
                hidden = Some(
                    value
                        .split(',')
                        .map(|v| num(v).map(|n| n as usize))
                        .collect::<Result<_>>()?,
                )
            }
            "input_dim" => input_dim = Some(num(value)? as usize),
            "num_classes" => num_classes = Some(num(value)? as usize),
            "seed" => seed = Some(num(value)?),
            "params" => count = Some(num(value)? as usize),
            _ => return Err(parse_err(2, format!("unknown key {key:?}"))),
        }
    }
    let missing = |k: &str| parse_err(2, format!("missing {k}"));
    let kind = match kind.as_deref() {
        Some("softmax") => ModelKind::SoftmaxRegression,
        Some("mlp") => ModelKind::Mlp {
            hidden: hidden.ok_or_else(|| missing("hidden"))?,
        },
        Some(other) => return Err(parse_err(2, format!("unknown kind {other:?}"))),
        None => return Err(missing("kind")),
    };
    let spec = ModelSpec {
        kind,
        input_dim: input_dim.ok_or_else(|| missing("input_dim"))?,
        num_classes: num_classes.ok_or_else(|| missing("num_classes"))?,
    };
    let count = count.ok_or_else(|| missing("params"))?;

    let mut params = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line.trim().parse().map_err(|e| parse_err(i + 3, format!("{e}")))?;
        params.push(v);
    }
    if params.len() != count {
        return Err(parse_err(0, format!("expected {count} params, found {}", params.len())));
    }
    Network::from_params(spec, params, seed.ok_or_else(|| missing("seed"))?)
}
