//! Generic CSV ingestion for partially labeled data with string labels.
//!
//! Each record holds the feature columns, then a column of `;`-separated
//! candidate label names, then (optionally) the true label name. No header.
//! Label names are mapped to dense ids in sorted order and the mapping is
//! kept in a [`LabelDictionary`].

use std::collections::BTreeSet;
use std::io::{BufRead, Read, Write};

use crate::data::{CandidateSet, Instance, LabelId, PartialDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelDictionary {
    names: Vec<String>,
}

impl LabelDictionary {
    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Self {
        let set: BTreeSet<String> = names.into_iter().collect();
        LabelDictionary {
            names: set.into_iter().collect(),
        }
    }

    pub fn id_of(&self, name: &str) -> Option<LabelId> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
            .map(LabelId::from)
    }

    pub fn name_of(&self, id: LabelId) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// One name per line; the line number is the id.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for n in &self.names {
            writeln!(w, "{n}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let names = r.lines().collect::<std::io::Result<Vec<_>>>()?;
        let dict = LabelDictionary { names };
        if dict.names.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse {
                line: 0,
                message: "label dictionary must be sorted and unique".into(),
            });
        }
        Ok(dict)
    }
}

pub fn import_csv<R: Read>(r: R, has_truth: bool) -> Result<(PartialDataset, LabelDictionary)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let label_cols = if has_truth { 2 } else { 1 };
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() <= label_cols {
            return Err(Error::Parse {
                line: i + 1,
                message: "record has no feature columns".into(),
            });
        }
        let n_feat = rec.len() - label_cols;
        let features = rec
            .iter()
            .take(n_feat)
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("bad feature {v:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cands: Vec<String> = rec[n_feat]
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        let truth = has_truth.then(|| rec[n_feat + 1].to_string());
        rows.push((features, cands, truth));
    }

    let dict = LabelDictionary::from_names(
        rows.iter()
            .flat_map(|(_, c, t)| c.iter().cloned().chain(t.iter().cloned())),
    );
    let lookup = |name: &str| dict.id_of(name).expect("name was collected");
    let mut instances = Vec::with_capacity(rows.len());
    let mut candidates = Vec::with_capacity(rows.len());
    let mut truths = Vec::with_capacity(rows.len());
    for (id, (features, cands, truth)) in rows.into_iter().enumerate() {
        instances.push(Instance { id, features });
        candidates.push(CandidateSet::from_labels(cands.iter().map(|c| lookup(c))));
        if let Some(t) = truth {
            truths.push(lookup(&t));
        }
    }
    let k = dict.len();
    let d = PartialDataset::new(instances, candidates, has_truth.then_some(truths), k)?;
    Ok((d, dict))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imports_string_labels() {
        let text = "0.5,1.0,cat;dog,cat\n-1,2,bird,bird\n3,4,dog;bird,dog\n";
        let (d, dict) = import_csv(text.as_bytes(), true).unwrap();
        assert_eq!(dict.len(), 3);
        assert_eq!(dict.id_of("bird"), Some(LabelId(0)));
        assert_eq!(dict.name_of(LabelId(2)), Some("dog"));
        assert_eq!(d.dim(), 2);
        assert_eq!(d.candidates()[0].members(), &[LabelId(1), LabelId(2)]);
        assert_eq!(d.hidden_truths().unwrap(), &[LabelId(1), LabelId(0), LabelId(2)]);
    }

    #[test]
    fn dictionary_round_trips() {
        let dict = LabelDictionary::from_names(["b".to_string(), "a".to_string(), "b".to_string()]);
        let mut buf = Vec::new();
        dict.write(&mut buf).unwrap();
        assert_eq!(LabelDictionary::read(buf.as_slice()).unwrap(), dict);
        assert!(LabelDictionary::read("b\na\n".as_bytes()).is_err());
    }

    #[test]
    fn rejects_truth_outside_candidates_and_bad_features() {
        assert!(import_csv("1.0,a;b,c\n2.0,c,c\n".as_bytes(), true).is_err());
        assert!(import_csv("x,a\n".as_bytes(), false).is_err());
        assert!(import_csv("a\n".as_bytes(), false).is_err());
    }
}
