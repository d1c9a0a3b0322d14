//! Line-oriented dataset format.
//!
//! ```text
//! K=3,dim=2,oracle=1
//! 0.25,-1.5|0;2|2
//! 1.75,0.5|1|1
//! ```
//!
//! One line per instance: comma-separated features, `|`, semicolon-separated
//! candidate label ids, `|`, the true label (empty when `oracle=0`). Instance
//! ids are line positions starting at 0.

use std::io::{BufRead, Write};

use crate::data::{CandidateSet, Instance, LabelId, PartialDataset};
use crate::error::{Error, Result};

pub fn write_dataset<W: Write>(d: &PartialDataset, mut w: W) -> Result<()> {
    writeln!(
        w,
        "K={},dim={},oracle={}",
        d.num_classes(),
        d.dim(),
        u8::from(d.is_oracle())
    )?;
    let truths = d.hidden_truths();
    for (i, (inst, set)) in d.instances().iter().zip(d.candidates()).enumerate() {
        let features = inst.features.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let labels = set.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";");
        let truth = truths.map(|t| t[i].to_string()).unwrap_or_default();
        writeln!(w, "{features}|{labels}|{truth}")?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line: &str) -> Result<(usize, usize, bool)> {
    let mut k = None;
    let mut dim = None;
    let mut oracle = None;
    for field in line.trim().split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field {field:?}")))?;
        let num: usize = value
            .parse()
            .map_err(|_| parse_err(1, format!("bad value for {key}: {value:?}")))?;
        match key {
            "K" => k = Some(num),
            "dim" => dim = Some(num),
            "oracle" if num <= 1 => oracle = Some(num == 1),
            _ => return Err(parse_err(1, format!("unexpected header field {field:?}"))),
        }
    }
    match (k, dim, oracle) {
        (Some(k), Some(dim), Some(o)) => Ok((k, dim, o)),
        _ => Err(parse_err(1, "header must be K=<int>,dim=<int>,oracle=<0|1>")),
    }
}

fn parse_label(s: &str, line: usize) -> Result<LabelId> {
    s.trim()
        .parse::<u32>()
        .map(LabelId)
        .map_err(|_| parse_err(line, format!("bad label {s:?}")))
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<PartialDataset> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty file"))??;
    let (k, dim, oracle) = parse_header(&header)?;

    let mut instances = Vec::new();
    let mut candidates = Vec::new();
    let mut truths = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('|').collect();
        if parts.len() != 2 && parts.len() != 3 {
            return Err(parse_err(lineno, "expected features|candidates|truth"));
        }
        let features = parts[0]
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("bad feature {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if features.len() != dim {
            return Err(parse_err(
                lineno,
                format!("{} features, header says dim={dim}", features.len()),
            ));
        }
        let labels = parts[1]
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_label(s, lineno))
            .collect::<Result<Vec<_>>>()?;
        let truth = parts.get(2).map(|s| s.trim()).filter(|s| !s.is_empty());
        match (oracle, truth) {
            (true, Some(t)) => truths.push(parse_label(t, lineno)?),
            (true, None) => return Err(parse_err(lineno, "oracle dataset line lacks a true label")),
            (false, Some(_)) => return Err(parse_err(lineno, "true label present but oracle=0")),
            (false, None) => {}
        }
        instances.push(Instance {
            id: instances.len(),
            features,
        });
        candidates.push(CandidateSet::from_labels(labels));
    }
    PartialDataset::new(instances, candidates, oracle.then_some(truths), k)
}
