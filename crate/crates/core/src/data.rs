//! Regression datasets, batch partitions and the dataset CSV format.
//!
//! CSV layout: a header row, one record per line, the response in column `y`
//! and covariates in `x1..xd`. No intercept column is stored; models that need
//! one add it themselves.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Observations `y_1..y_N` with a constant-width covariate row per record.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Row-major `n x p` covariates.
    covariates: Vec<f64>,
    response: Vec<f64>,
    p: usize,
}

impl Dataset {
    pub fn new(covariates: Vec<f64>, response: Vec<f64>, p: usize) -> Result<Self> {
        let n = response.len();
        if n == 0 {
            return Err(Error::invalid("dataset must contain at least one record"));
        }
        if covariates.len() != n * p {
            return Err(Error::invalid(format!(
                "covariate block has {} values, expected {n} x {p}",
                covariates.len()
            )));
        }
        if covariates.iter().chain(&response).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Self {
            covariates,
            response,
            p,
        })
    }

    /// A univariate series stored as a dataset without covariates.
    pub fn series(values: Vec<f64>) -> Result<Self> {
        Self::new(Vec::new(), values, 0)
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn covariate_dim(&self) -> usize {
        self.p
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    /// Rescales every covariate column to `[0, 1]` by subtracting its minimum
    /// and dividing by its range. Constant columns are left at zero.
    pub fn standardize_min_range(&mut self) {
        let n = self.len();
        for j in 0..self.p {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n {
                let v = self.covariates[i * self.p + j];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let range = hi - lo;
            for i in 0..n {
                let v = &mut self.covariates[i * self.p + j];
                *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
            }
        }
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let y_col = headers
            .iter()
            .position(|h| h.trim() == "y")
            .ok_or_else(|| Error::invalid("CSV has no `y` column"))?;
        let mut x_cols = Vec::new();
        for j in 1.. {
            match headers.iter().position(|h| h.trim() == format!("x{j}")) {
                Some(c) => x_cols.push(c),
                None => break,
            }
        }
        let mut covariates = Vec::new();
        let mut response = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let parse = |c: usize| -> Result<f64> {
                let field = record.get(c).unwrap_or("").trim();
                field.parse::<f64>().map_err(|_| {
                    Error::invalid(format!("record {}: cannot parse `{field}`", line + 1))
                })
            };
            response.push(parse(y_col)?);
            for &c in &x_cols {
                covariates.push(parse(c)?);
            }
        }
        Self::new(covariates, response, x_cols.len())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(file)
    }

    pub fn write_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.p).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.response[i].to_string()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// `J` disjoint, nonempty index sets covering `0..N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    batches: Vec<Vec<usize>>,
}

impl Partition {
    pub fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }

    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    pub fn total(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }
}

/// Splits `0..n` into `j` batches of near-equal size after a uniform random
/// permutation. The first `n % j` batches hold one extra index.
pub fn partition_indices(n: usize, j: usize, rng: &mut RngStream) -> Result<Partition> {
    if j < 1 || j > n {
        return Err(Error::invalid(format!(
            "batch count J={j} must satisfy 1 <= J <= N={n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let base = n / j;
    let extra = n % j;
    let mut batches = Vec::with_capacity(j);
    let mut start = 0;
    for b in 0..j {
        let size = base + usize::from(b < extra);
        let mut batch = perm[start..start + size].to_vec();
        batch.sort_unstable();
        batches.push(batch);
        start += size;
    }
    Ok(Partition { batches })
}

pub fn partition_dataset(data: &Dataset, j: usize, rng: &mut RngStream) -> Result<Partition> {
    partition_indices(data.len(), j, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n: usize) -> Dataset {
        Dataset::new((0..n).map(|i| i as f64).collect(), vec![0.0; n], 1).unwrap()
    }

    #[test]
    fn single_batch_is_identity() {
        let p = partition_dataset(&toy(10), 1, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(p.batches(), &[(0..10).collect::<Vec<_>>()]);
    }

    #[test]
    fn five_batches_of_two() {
        let p = partition_dataset(&toy(10), 5, &mut RngStream::new(1, 0)).unwrap();
        assert!(p.batches().iter().all(|b| b.len() == 2));
        let mut all: Vec<usize> = p.batches().concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn sizes_and_determinism_at_ten_thousand() {
        let a = partition_indices(10_000, 3, &mut RngStream::new(99, 4)).unwrap();
        let b = partition_indices(10_000, 3, &mut RngStream::new(99, 4)).unwrap();
        let sizes: Vec<usize> = a.batches().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3334, 3333, 3333]);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_batch_counts() {
        let mut r = RngStream::new(0, 0);
        assert!(partition_indices(10, 0, &mut r).is_err());
        assert!(partition_indices(10, 11, &mut r).is_err());
    }

    #[test]
    fn csv_round_trip_and_standardize() {
        let mut d = Dataset::new(
            vec![1.0, 10.0, 3.0, 20.0, 5.0, 30.0],
            vec![1.0, 0.0, 1.0],
            2,
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("y,x1,x2\n"));
        let back = Dataset::from_reader(&buf[..]).unwrap();
        assert_eq!(back, d);
        d.standardize_min_range();
        assert_eq!(d.row(0), &[0.0, 0.0]);
        assert_eq!(d.row(1), &[0.5, 0.5]);
        assert_eq!(d.row(2), &[1.0, 1.0]);
    }

    #[test]
    fn csv_without_response_is_rejected() {
        let text = "a,x1\n1,2\n";
        assert!(Dataset::from_reader(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn partition_invariants(n in 1usize..400, j_frac in 0.0f64..1.0, seed in any::<u64>()) {
            let j = 1 + ((n - 1) as f64 * j_frac) as usize;
            let p = partition_indices(n, j, &mut RngStream::new(seed, 0)).unwrap();
            prop_assert_eq!(p.batch_count(), j);
            let sizes: Vec<usize> = p.batches().iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().all(|&s| s >= 1));
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<usize> = p.batches().concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
