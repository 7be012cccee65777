/// Tridiagonal matrix stored by diagonals. `lower[0]` and `upper[n-1]` are unused (zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn identity(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![1.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Entry `(i, j)`; zero off the three diagonals.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j + 1 == i {
            self.lower[i]
        } else if i + 1 == j {
            self.upper[i]
        } else {
            0.0
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| {
                let mut s = self.diag[j];
                if j > 0 {
                    s += self.upper[j - 1];
                }
                if j + 1 < n {
                    s += self.lower[j + 1];
                }
                s
            })
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Thomas algorithm. Stable without pivoting for the column diagonally
    /// dominant matrices the scheme produces. Returns `None` on a zero pivot.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        c[0] = self.upper[0] / pivot;
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i] * c[i - 1];
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            c[i] = if i + 1 < n { self.upper[i] / pivot } else { 0.0 };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Some(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_known_system() {
        let m = Tridiagonal {
            lower: vec![0.0, -1.0, -1.0, -1.0],
            diag: vec![4.0, 4.0, 4.0, 4.0],
            upper: vec![-1.0, -1.0, -1.0, 0.0],
        };
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let b = m.mul_vec(&x);
        let got = m.solve(&b).unwrap();
        for (a, e) in got.iter().zip(&x) {
            assert!((a - e).abs() < 1e-14);
        }
    }
}
