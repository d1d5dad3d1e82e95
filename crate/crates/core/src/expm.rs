//! Dense matrix exponential and its action on vectors.
//!
//! Scaling and squaring with the degree-13 diagonal Padé approximant (and the
//! cheaper degrees 3..9 when the 1-norm is small enough). The state spaces in
//! this crate are at most a few dozen levels wide, so dense LU is sufficient.

use crate::error::{Error, Result};
use crate::real::Real;

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Build from `n*n` row-major entries.
    pub fn from_row_major(n: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            let rows = data.len().checked_div(n).unwrap_or(0);
            return Err(Error::NotSquare { rows, cols: n });
        }
        let m = Self { n, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        Self::from_row_major(n, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> T {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| x * k).collect(),
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        let n = self.n;
        assert_eq!(n, rhs.n, "matmul dimension mismatch");
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == T::zero() {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: v.len(),
            });
        }
        Ok(self
            .data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    /// `sum_k coeffs[k] * powers[k]`, skipping absent powers.
    fn combination(n: usize, terms: &[(T, &Self)]) -> Self {
        let mut out = Self::zeros(n);
        for (c, m) in terms {
            for (d, &x) in out.data.iter_mut().zip(&m.data) {
                *d += *c * x;
            }
        }
        out
    }

    fn add_diagonal(&mut self, c: T) {
        for i in 0..self.n {
            self[(i, i)] += c;
        }
    }

    /// Solve `self * X = rhs` by LU with partial pivoting.
    fn solve(&self, rhs: &Self) -> Self {
        let n = self.n;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a[i * n + col]
                        .abs()
                        .partial_cmp(&a[j * n + col].abs())
                        .unwrap()
                })
                .unwrap();
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                    b.swap(col * n + k, pivot * n + k);
                }
            }
            let p = a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] / p;
                if f == T::zero() {
                    continue;
                }
                for k in col..n {
                    let v = a[col * n + k];
                    a[row * n + k] -= f * v;
                }
                for k in 0..n {
                    let v = b[col * n + k];
                    b[row * n + k] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let p = a[col * n + col];
            for k in 0..n {
                let mut acc = b[col * n + k];
                for j in col + 1..n {
                    acc -= a[col * n + j] * b[j * n + k];
                }
                b[col * n + k] = acc / p;
            }
        }
        Self { n, data: b }
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Backward-error thresholds on the 1-norm for degrees 3, 5, 7, 9, 13 (double precision).
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

fn pade_coefficients(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[
            17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
        ],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        _ => &PADE_13,
    }
}

/// Odd and even parts `(U, V)` of the degree-`m` Padé numerator at `a`.
fn pade_parts<T: Real>(a: &SquareMatrix<T>, m: usize) -> (SquareMatrix<T>, SquareMatrix<T>) {
    let n = a.dim();
    let c: Vec<T> = pade_coefficients(m).iter().map(|&x| T::of(x)).collect();
    let a2 = a.matmul(a);
    if m == 13 {
        let a4 = a2.matmul(&a2);
        let a6 = a4.matmul(&a2);
        let mut inner = SquareMatrix::combination(n, &[(c[13], &a6), (c[11], &a4), (c[9], &a2)]);
        inner = a6.matmul(&inner);
        let mut u = SquareMatrix::combination(
            n,
            &[(T::one(), &inner), (c[7], &a6), (c[5], &a4), (c[3], &a2)],
        );
        u.add_diagonal(c[1]);
        let u = a.matmul(&u);
        let inner = SquareMatrix::combination(n, &[(c[12], &a6), (c[10], &a4), (c[8], &a2)]);
        let mut v = a6.matmul(&inner);
        v = SquareMatrix::combination(n, &[(T::one(), &v), (c[6], &a6), (c[4], &a4), (c[2], &a2)]);
        v.add_diagonal(c[0]);
        return (u, v);
    }
    let mut powers = vec![SquareMatrix::identity(n), a2];
    while 2 * (powers.len() - 1) < m - 1 {
        let next = powers.last().unwrap().matmul(&powers[1]);
        powers.push(next);
    }
    let odd: Vec<(T, &SquareMatrix<T>)> = powers
        .iter()
        .enumerate()
        .map(|(k, p)| (c[2 * k + 1], p))
        .collect();
    let even: Vec<(T, &SquareMatrix<T>)> = powers
        .iter()
        .enumerate()
        .map(|(k, p)| (c[2 * k], p))
        .collect();
    let u = a.matmul(&SquareMatrix::combination(n, &odd));
    let v = SquareMatrix::combination(n, &even);
    (u, v)
}

/// `e^M`.
pub fn expm<T: Real>(m: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    m.check_finite()?;
    let n = m.dim();
    let norm = m.norm1().as_f64();
    let (degree, squarings) = match THETA.iter().find(|(_, theta)| norm <= *theta) {
        Some(&(deg, _)) => (deg, 0),
        None => {
            let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
            (13, s)
        }
    };
    let scaled = if squarings > 0 {
        m.scaled(T::of(2f64.powi(-squarings)))
    } else {
        m.clone()
    };
    let (u, v) = pade_parts(&scaled, degree);
    let denom = SquareMatrix::combination(n, &[(T::one(), &v), (-T::one(), &u)]);
    let numer = SquareMatrix::combination(n, &[(T::one(), &v), (T::one(), &u)]);
    let mut r = denom.solve(&numer);
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    r.check_finite()?;
    Ok(r)
}

/// `e^{M s} v`.
pub fn expm_action<T: Real>(m: &SquareMatrix<T>, v: &[T], s: T) -> Result<Vec<T>> {
    if v.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: v.len(),
        });
    }
    if s < T::zero() || !s.is_finite() {
        return Err(Error::NegativeTime(s.as_f64()));
    }
    if s == T::zero() {
        return Ok(v.to_vec());
    }
    expm(&m.scaled(s))?.matvec(v)
}

/// Evaluates `e^{M k h} v` for `k = 0..=steps` from a single exponential `e^{M h}`.
#[derive(Debug, Clone)]
pub struct UniformPropagator<T> {
    step: SquareMatrix<T>,
}

impl<T: Real> UniformPropagator<T> {
    pub fn new(m: &SquareMatrix<T>, h: T) -> Result<Self> {
        if h < T::zero() || !h.is_finite() {
            return Err(Error::NegativeTime(h.as_f64()));
        }
        Ok(Self {
            step: expm(&m.scaled(h))?,
        })
    }

    /// `[v, e^{Mh} v, e^{2Mh} v, ...]`, `steps + 1` vectors.
    pub fn trajectory(&self, v: &[T], steps: usize) -> Result<Vec<Vec<T>>> {
        if v.len() != self.step.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.step.dim(),
                got: v.len(),
            });
        }
        let mut out = Vec::with_capacity(steps + 1);
        let mut cur = v.to_vec();
        out.push(cur.clone());
        for _ in 0..steps {
            cur = self.step.matvec(&cur)?;
            out.push(cur.clone());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    /// Plain Taylor sum with repeated halving; adequate for small norms.
    fn taylor(m: &SquareMatrix<f64>) -> SquareMatrix<f64> {
        let mut s = 0;
        let mut a = m.clone();
        while a.norm1() > 0.25 {
            a = a.scaled(0.5);
            s += 1;
        }
        let n = m.dim();
        let mut term = SquareMatrix::identity(n);
        let mut sum = SquareMatrix::identity(n);
        for k in 1..40 {
            term = term.matmul(&a).scaled(1.0 / k as f64);
            sum = SquareMatrix::combination(n, &[(1.0, &sum), (1.0, &term)]);
        }
        for _ in 0..s {
            sum = sum.matmul(&sum);
        }
        sum
    }

    #[test]
    fn zero_matrix_gives_identity() {
        let e = expm(&SquareMatrix::<f64>::zeros(4)).unwrap();
        assert_eq!(e, SquareMatrix::identity(4));
    }

    #[test]
    fn diagonal_matrix_exponentiates_entrywise() {
        let d = [-3.0, -0.5, 0.0, 1.25, 7.0, 20.0];
        let e = expm(&SquareMatrix::from_diagonal(&d)).unwrap();
        for i in 0..d.len() {
            for j in 0..d.len() {
                if i == j {
                    assert!(rel_err(e[(i, j)], d[i].exp()) < 1e-13, "{i}: {}", e[(i, j)]);
                } else {
                    assert!(e[(i, j)].abs() < 1e-12 * d[i].exp().max(d[j].exp()));
                }
            }
        }
    }

    #[test]
    fn small_dense_matrix_matches_taylor() {
        let m = SquareMatrix::from_rows(&[
            vec![0.3, -1.7, 1.1],
            vec![1.9, -0.4, 0.8],
            vec![-1.2, 0.6, 1.5],
        ])
        .unwrap();
        let e = expm(&m).unwrap();
        let t = taylor(&m);
        for (a, b) in e.as_slice().iter().zip(t.as_slice()) {
            assert!(rel_err(*a, *b) < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn every_pade_degree_is_exercised_and_accurate() {
        let base = SquareMatrix::from_rows(&[vec![0.1, 0.4], vec![-0.3, 0.2]]).unwrap();
        for scale in [0.01, 0.3, 1.5, 3.0, 8.0, 40.0] {
            let m = base.scaled(scale / base.norm1());
            let e = expm(&m).unwrap();
            let t = taylor(&m);
            let size = t.norm1();
            for (a, b) in e.as_slice().iter().zip(t.as_slice()) {
                assert!((a - b).abs() / size < 1e-12, "norm {scale}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            SquareMatrix::<f64>::from_row_major(2, vec![1.0, 2.0, 3.0]),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            SquareMatrix::<f64>::from_rows(&[vec![1.0, 2.0]]),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            SquareMatrix::from_row_major(2, vec![1.0, f64::NAN, 0.0, 1.0]),
            Err(Error::NonFinite { index: 1 })
        ));
        let mut m = SquareMatrix::<f64>::identity(2);
        m[(1, 0)] = f64::INFINITY;
        assert!(matches!(expm(&m), Err(Error::NonFinite { index: 2 })));
    }

    #[test]
    fn action_at_zero_time_is_identity() {
        let m = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(expm_action(&m, &[0.7, -0.2], 0.0).unwrap(), vec![0.7, -0.2]);
    }

    #[test]
    fn action_on_diagonal() {
        let m = SquareMatrix::from_diagonal(&[1.0, -1.0]);
        let r = expm_action(&m, &[1.0, 1.0], 2f64.ln()).unwrap();
        assert!((r[0] - 2.0).abs() < 1e-14);
        assert!((r[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn action_errors() {
        let m = SquareMatrix::<f64>::identity(3);
        assert!(matches!(
            expm_action(&m, &[1.0], 1.0),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 1
            })
        ));
        assert!(matches!(
            expm_action(&m, &[1.0; 3], -0.5),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn propagator_matches_direct_action() {
        let m = SquareMatrix::from_rows(&[
            vec![-0.4, 1.3, 0.0],
            vec![0.9, 0.0, 1.3],
            vec![0.0, 0.9, -0.4],
        ])
        .unwrap();
        let v = [0.98, 1.0, 0.97];
        let prop = UniformPropagator::new(&m, 0.01).unwrap();
        let traj = prop.trajectory(&v, 100).unwrap();
        assert_eq!(traj.len(), 101);
        let direct = expm_action(&m, &v, 1.0).unwrap();
        for (a, b) in traj[100].iter().zip(&direct) {
            assert!(rel_err(*a, *b) < 1e-12);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let m = SquareMatrix::<f32>::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let e = expm(&m).unwrap();
        // rotation by one radian
        assert!((e[(0, 0)] - 1f32.cos()).abs() < 1e-6);
        assert!((e[(0, 1)] - 1f32.sin()).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn metzler(n: usize) -> impl Strategy<Value = SquareMatrix<f64>> {
            prop::collection::vec(-3.0f64..3.0, n * n).prop_map(move |mut d| {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            d[i * n + j] = d[i * n + j].abs();
                        }
                    }
                }
                SquareMatrix::from_row_major(n, d).unwrap()
            })
        }

        proptest! {
            #[test]
            fn semigroup(m in metzler(4), s in 0.0f64..1.0, t in 0.0f64..1.0) {
                let v = [1.0, 0.5, 2.0, 0.25];
                let once = expm_action(&m, &v, s + t).unwrap();
                let twice = expm_action(&m, &expm_action(&m, &v, t).unwrap(), s).unwrap();
                for (a, b) in once.iter().zip(&twice) {
                    prop_assert!(rel_err(*a, *b) < 1e-8);
                }
            }

            #[test]
            fn metzler_preserves_positivity(m in metzler(5), s in 0.0f64..3.0) {
                let v = [0.1, 1.0, 3.0, 0.01, 0.5];
                let r = expm_action(&m, &v, s).unwrap();
                prop_assert!(r.iter().all(|&x| x > 0.0));
            }
        }
    }
}
