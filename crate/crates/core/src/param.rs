use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in parameter space. Entries are finite and the length is at least one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVec(Vec<f64>);

impl ParamVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid(
                "parameter vector must have at least one entry",
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "parameter entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    /// Builds a vector without the finiteness check. Callers must only use
    /// this for values they have already validated or that come from
    /// arithmetic on validated vectors where a non-finite result is handled
    /// downstream (e.g. a rejected proposal).
    pub(crate) fn from_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ParamVec {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ParamVec> for Vec<f64> {
    fn from(p: ParamVec) -> Vec<f64> {
        p.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(ParamVec::new(vec![]).is_err());
        assert!(ParamVec::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParamVec::new(vec![f64::INFINITY]).is_err());
        let p = ParamVec::new(vec![1.0, -2.0]).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(&p[..], &[1.0, -2.0]);
    }
}
