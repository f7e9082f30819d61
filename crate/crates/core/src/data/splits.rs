use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sub-dataset tags in split-table order.
pub const UPAR_DOMAINS: [&str; 4] = ["MARKET", "PA100K", "PETA", "RAPV2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// Train on one domain, evaluate on the rest.
    #[serde(rename = "CV")]
    Cv,
    /// Train on all domains but one, evaluate on the held-out one.
    #[serde(rename = "LOO")]
    Loo,
    /// Whole dataset: combined train, combined test.
    #[serde(rename = "ALL")]
    All,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Cv => "CV",
            Protocol::Loo => "LOO",
            Protocol::All => "ALL",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cv" => Ok(Protocol::Cv),
            "loo" => Ok(Protocol::Loo),
            "all" => Ok(Protocol::All),
            _ => Err(Error::InvalidConfig(format!("unknown protocol `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub id: usize,
    pub protocol: Protocol,
    #[serde(rename = "train")]
    pub train_domains: BTreeSet<String>,
    #[serde(rename = "eval")]
    pub eval_domains: BTreeSet<String>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.eval_domains.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "split {} has no eval domains",
                self.id
            )));
        }
        if self.train_domains.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "split {} has no train domains",
                self.id
            )));
        }
        if self.protocol != Protocol::All {
            if let Some(d) = self.train_domains.intersection(&self.eval_domains).next() {
                return Err(Error::InvalidConfig(format!(
                    "split {}: domain `{d}` is both train and eval",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// The four CV or LOO splits. Split `k` rotates on `UPAR_DOMAINS[k]`: it is
/// the sole training domain under CV and the held-out domain under LOO.
/// `Protocol::All` yields the single whole-dataset split.
pub fn upar_split_presets(protocol: Protocol) -> Vec<SplitSpec> {
    if protocol == Protocol::All {
        return vec![all_split(&UPAR_DOMAINS)];
    }
    UPAR_DOMAINS
        .iter()
        .enumerate()
        .map(|(id, &pivot)| {
            let rest: Vec<&str> = UPAR_DOMAINS.iter().copied().filter(|&d| d != pivot).collect();
            let (train, eval) = match protocol {
                Protocol::Cv => (set(&[pivot]), set(&rest)),
                _ => (set(&rest), set(&[pivot])),
            };
            SplitSpec {
                id,
                protocol,
                train_domains: train,
                eval_domains: eval,
            }
        })
        .collect()
}

pub fn all_split(domains: &[&str]) -> SplitSpec {
    SplitSpec {
        id: 0,
        protocol: Protocol::All,
        train_domains: set(domains),
        eval_domains: set(domains),
    }
}

/// Reads a split override file: `[{"id":..,"protocol":"CV|LOO|ALL","train":[..],"eval":[..]}]`.
pub fn load_splits(path: impl AsRef<Path>) -> Result<Vec<SplitSpec>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let splits: Vec<SplitSpec> =
        serde_json::from_str(&text).map_err(|e| Error::parse("split file", e))?;
    for s in &splits {
        s.validate()?;
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loo_and_cv_rotations() {
        let loo = upar_split_presets(Protocol::Loo);
        assert_eq!(loo[3].train_domains, set(&["MARKET", "PA100K", "PETA"]));
        assert_eq!(loo[3].eval_domains, set(&["RAPV2"]));
        let cv = upar_split_presets(Protocol::Cv);
        assert_eq!(cv[2].train_domains, set(&["PETA"]));
        assert_eq!(cv[2].eval_domains, set(&["MARKET", "PA100K", "RAPV2"]));
        for s in &cv {
            assert_eq!(s.train_domains.len(), 1);
            assert_eq!(s.eval_domains.len(), 3);
        }
    }

    #[test]
    fn every_domain_is_covered_once() {
        let all = set(&UPAR_DOMAINS);
        for p in [Protocol::Cv, Protocol::Loo] {
            let splits = upar_split_presets(p);
            assert_eq!(splits.len(), 4);
            for s in &splits {
                s.validate().unwrap();
                let union: BTreeSet<_> = s.train_domains.union(&s.eval_domains).cloned().collect();
                assert_eq!(union, all);
            }
            for d in UPAR_DOMAINS {
                let n_eval = splits.iter().filter(|s| s.eval_domains.contains(d)).count();
                let n_train = splits.iter().filter(|s| s.train_domains.contains(d)).count();
                match p {
                    Protocol::Loo => assert_eq!(n_eval, 1),
                    _ => assert_eq!(n_train, 1),
                }
            }
        }
    }

    #[test]
    fn all_protocol_is_exempt_from_disjointness() {
        let s = upar_split_presets(Protocol::All);
        assert_eq!(s.len(), 1);
        s[0].validate().unwrap();
        assert_eq!(s[0].train_domains, s[0].eval_domains);
    }

    #[test]
    fn split_file_json_shape() {
        let text = r#"[{"id":7,"protocol":"LOO","train":["A","B"],"eval":["C"]}]"#;
        let s: Vec<SplitSpec> = serde_json::from_str(text).unwrap();
        assert_eq!(s[0].id, 7);
        assert_eq!(s[0].protocol, Protocol::Loo);
        let bad = SplitSpec {
            id: 1,
            protocol: Protocol::Cv,
            train_domains: set(&["A"]),
            eval_domains: set(&["A", "B"]),
        };
        assert!(bad.validate().is_err());
    }
}
