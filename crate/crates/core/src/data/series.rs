use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// `rows` fixed-length real series stored row-major. May be empty.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesBatch {
    length: usize,
    values: Vec<f64>,
}

impl SeriesBatch {
    pub fn new(length: usize, values: Vec<f64>) -> Result<Self> {
        if length == 0 || !values.len().is_multiple_of(length) {
            return Err(Error::InvalidShape {
                op: "series batch",
                msg: format!("{} values do not form rows of length {length}", values.len()),
            });
        }
        Ok(SeriesBatch { length, values })
    }

    pub fn empty(length: usize) -> Self {
        SeriesBatch {
            length,
            values: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(length: usize, rows: &[R]) -> Result<Self> {
        let mut out = SeriesBatch::empty(length);
        for r in rows {
            out.push(r.as_ref())?;
        }
        Ok(out)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.length {
            return Err(Error::ShapeMismatch {
                op: "series batch push",
                lhs: vec![self.length],
                rhs: vec![row.len()],
            });
        }
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.length
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.length..(i + 1) * self.length]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.length)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> SeriesBatch {
        let mut values = Vec::with_capacity(indices.len() * self.length);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        SeriesBatch {
            length: self.length,
            values,
        }
    }

    pub fn head(&self, n: usize) -> SeriesBatch {
        let n = n.min(self.len());
        SeriesBatch {
            length: self.length,
            values: self.values[..n * self.length].to_vec(),
        }
    }

    /// Up to `n` rows drawn uniformly without replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SeriesBatch {
        let idx = rand::seq::index::sample(rng, self.len(), n.min(self.len())).into_vec();
        self.select(&idx)
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(vec![self.len(), self.length], self.values.clone())
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.shape().len() != 2 {
            return Err(Error::InvalidShape {
                op: "series batch",
                msg: format!("expected a matrix, got {:?}", t.shape()),
            });
        }
        SeriesBatch::new(t.shape()[1], t.data().to_vec())
    }

    /// Writes the corpus CSV: a header `t0,..,t{T-1},label` then one row per
    /// series with the given integer label in the last column.
    pub fn write_csv(&self, path: &Path, label: i64) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        let header: Vec<String> = (0..self.length).map(|t| format!("t{t}")).collect();
        writeln!(w, "{},label", header.join(",")).map_err(io)?;
        let mut line = String::new();
        for row in self.iter() {
            line.clear();
            for v in row {
                line.push_str(&format_value(*v));
                line.push(',');
            }
            line.push_str(&label.to_string());
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn concat(&self, other: &SeriesBatch) -> Result<SeriesBatch> {
        let mut out = self.clone();
        if other.length != self.length {
            return Err(Error::ShapeMismatch {
                op: "series concat",
                lhs: vec![self.length],
                rhs: vec![other.length],
            });
        }
        out.values.extend_from_slice(&other.values);
        Ok(out)
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
}

/// Shuffled, non-overlapping index batches of size `m`; the final partial
/// batch is dropped.
pub fn batch_indices<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if m == 0 || m > n {
        return Err(Error::InsufficientData(format!(
            "batch size {m} needs 1 <= m <= {n} records"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    Ok(idx.chunks_exact(m).map(<[usize]>::to_vec).collect())
}

/// One epoch of shuffled `m x T` batches.
pub fn batch_iterator<'a, R: Rng + ?Sized>(
    data: &'a SeriesBatch,
    m: usize,
    rng: &mut R,
) -> Result<impl Iterator<Item = SeriesBatch> + 'a> {
    let batches = batch_indices(data.len(), m, rng)?;
    Ok(batches.into_iter().map(move |b| data.select(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numbered(n: usize) -> SeriesBatch {
        SeriesBatch::new(2, (0..n).flat_map(|i| [i as f64, -(i as f64)]).collect()).unwrap()
    }

    #[test]
    fn batches_cover_and_drop_remainder() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(batch_indices(100, 50, &mut rng).unwrap().len(), 2);
        let b = batch_indices(119 * 3 + 5, 119, &mut rng).unwrap();
        assert_eq!(b.len(), 3);
        assert!(b.iter().all(|x| x.len() == 119));
        assert!(batch_indices(10, 11, &mut rng).is_err());
        assert!(batch_indices(10, 0, &mut rng).is_err());
    }

    #[test]
    fn value_formatting_round_trips() {
        for v in [0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 1e-300, f64::MAX] {
            assert_eq!(format_value(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_value(3.0), "3");
    }

    #[test]
    fn shape_checks() {
        assert!(SeriesBatch::new(3, vec![0.0; 4]).is_err());
        let mut b = SeriesBatch::empty(3);
        assert!(b.push(&[1.0, 2.0]).is_err());
        assert!(b.concat(&SeriesBatch::empty(2)).is_err());
        b.push(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(SeriesBatch::from_tensor(&b.to_tensor().unwrap()).unwrap(), b);
    }

    proptest! {
        #[test]
        fn epoch_is_a_permutation_minus_remainder(n in 1usize..200, m in 1usize..50, seed in any::<u64>()) {
            prop_assume!(m <= n);
            let data = numbered(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batches: Vec<SeriesBatch> = batch_iterator(&data, m, &mut rng).unwrap().collect();
            prop_assert_eq!(batches.len(), n / m);
            let mut seen: Vec<i64> = batches.iter().flat_map(|b| b.iter().map(|r| r[0] as i64).collect::<Vec<_>>()).collect();
            prop_assert_eq!(seen.len(), (n / m) * m);
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), (n / m) * m);
            prop_assert!(seen.iter().all(|&i| (0..n as i64).contains(&i)));
        }
    }
}
