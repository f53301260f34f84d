use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::subsample::Expansion;

/// Sampler variants addressable by name, e.g. `RW_SS_D_C_10_20`.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Full-data adaptive random-walk Metropolis.
    Rw,
    /// Consensus divide-and-conquer with `j` batches.
    Dac {
        j: usize,
    },
    Subsample {
        expansion: Expansion,
        correlated: bool,
        /// Cluster count, data expansion only.
        k: usize,
        m: usize,
    },
    Coreset {
        k: usize,
        f: f64,
    },
    Abc,
    Aabc,
    Bsl {
        m: usize,
    },
    Absl,
    /// ABC-MCMC run for `factor` times the configured iterations.
    AbcReference {
        factor: usize,
    },
}

impl Method {
    pub fn for_logistic(&self) -> bool {
        matches!(
            self,
            Self::Rw | Self::Dac { .. } | Self::Subsample { .. } | Self::Coreset { .. }
        )
    }

    pub(crate) fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::Config(format!("{self}: {msg}")));
        match *self {
            Self::Dac { j } if j == 0 => bad("J must be at least 1"),
            Self::Subsample { m, .. } if m == 0 => bad("m must be at least 1"),
            Self::Subsample {
                expansion: Expansion::Data,
                k,
                ..
            } if k == 0 => bad("K must be at least 1"),
            Self::Coreset { k, f } if k == 0 || !(f > 0.0 && f <= 1.0) => {
                bad("need K >= 1 and 0 < f <= 1")
            }
            Self::Bsl { m } if m < 2 => bad("m must be at least 2"),
            Self::AbcReference { factor } if factor == 0 => bad("factor must be at least 1"),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rw => write!(f, "RW"),
            Self::Dac { j } => write!(f, "RW_DAC_{j}"),
            Self::Subsample {
                expansion,
                correlated,
                k,
                m,
            } => {
                let c = if *correlated { "C" } else { "R" };
                match expansion {
                    Expansion::Parameter => write!(f, "RW_SS_P_{c}_{m}"),
                    Expansion::Data => write!(f, "RW_SS_D_{c}_{k}_{m}"),
                }
            }
            Self::Coreset { k, f: frac } => write!(f, "RW_CO_{k}_{frac}"),
            Self::Abc => write!(f, "RW_ABC"),
            Self::Aabc => write!(f, "RW_AABC"),
            Self::Bsl { m } => write!(f, "RW_BSL_{m}"),
            Self::Absl => write!(f, "RW_ABSL"),
            Self::AbcReference { factor } => write!(f, "RW_ABC_X{factor}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let err = || Error::Config(format!("unknown method {s:?}"));
        let parts: Vec<&str> = s.trim().split('_').collect();
        let int = |p: &str| p.parse::<usize>().map_err(|_| err());
        let method = match parts.as_slice() {
            ["RW"] => Self::Rw,
            ["RW", "DAC", j] | ["DAC", j] => Self::Dac { j: int(j)? },
            ["RW", "SS", "P", c, m] => Self::Subsample {
                expansion: Expansion::Parameter,
                correlated: parse_corr(c).ok_or_else(err)?,
                k: 0,
                m: int(m)?,
            },
            ["RW", "SS", "D", c, k, m] => Self::Subsample {
                expansion: Expansion::Data,
                correlated: parse_corr(c).ok_or_else(err)?,
                k: int(k)?,
                m: int(m)?,
            },
            ["RW", "CO", k, f] => Self::Coreset {
                k: int(k)?,
                f: f.parse().map_err(|_| err())?,
            },
            ["RW", "ABC"] => Self::Abc,
            ["RW", "AABC"] => Self::Aabc,
            ["RW", "BSL", m] => Self::Bsl { m: int(m)? },
            ["RW", "ABSL"] => Self::Absl,
            ["RW", "ABC", x] if x.starts_with('X') => Self::AbcReference {
                factor: int(&x[1..])?,
            },
            _ => return Err(err()),
        };
        method.validate()?;
        Ok(method)
    }
}

fn parse_corr(c: &str) -> Option<bool> {
    match c {
        "R" => Some(false),
        "C" => Some(true),
        _ => None,
    }
}
