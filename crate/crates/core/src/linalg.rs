//! Dense LU with partial pivoting for the Newton systems.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major square matrix.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(n: usize) -> Self {
        Dense {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    #[inline]
    pub fn at(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.data[i * self.n + j]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    /// Solves `A x = b` in place, consuming the matrix.
    pub fn solve(mut self, b: &mut [T]) -> Result<()> {
        let n = self.n;
        assert_eq!(b.len(), n);
        for col in 0..n {
            let (piv, pmax) = (col..n)
                .map(|r| (r, self.get(r, col).abs()))
                .fold((col, T::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax == T::zero() || !pmax.is_finite() {
                return Err(Error::Precondition(format!("singular matrix at column {col}")));
            }
            if piv != col {
                for j in 0..n {
                    self.data.swap(piv * n + j, col * n + j);
                }
                b.swap(piv, col);
            }
            let d = self.get(col, col);
            for r in col + 1..n {
                let f = self.get(r, col) / d;
                if f == T::zero() {
                    continue;
                }
                let (top, bottom) = self.data.split_at_mut(r * n);
                let pivot_row = &top[col * n..col * n + n];
                let row = &mut bottom[..n];
                for j in col..n {
                    row[j] = row[j] - f * pivot_row[j];
                }
                b[r] = b[r] - f * b[col];
            }
        }
        for r in (0..n).rev() {
            let mut acc = b[r];
            for j in r + 1..n {
                acc = acc - self.get(r, j) * b[j];
            }
            b[r] = acc / self.get(r, r);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a = Dense::<f64>::zeros(3);
        let rows = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                *a.at(i, j) = *v;
            }
        }
        let x = [1.0, -2.0, 3.0];
        let mut b: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&x).map(|(a, b)| a * b).sum())
            .collect();
        a.solve(&mut b).unwrap();
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_singularity() {
        let a = Dense::<f64>::zeros(2);
        assert!(a.solve(&mut [1.0, 1.0]).is_err());
    }
}
