//! Reference oracles for checking `pooled_mm` independently of its own
//! numerics: a double-double Taylor matrix exponential and an RK4 integrator
//! for the untruncated value equation, written straight from the model.

use std::ops::{Add, Mul};

use pooled_mm::ModelParams64;

/// Double-double number: `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub fn new(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn div_f64(self, d: f64) -> Self {
        let q1 = self.hi / d;
        let r = self + Self::new(d) * Self::new(-q1);
        let q2 = r.hi / d;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo }
    }
}

impl Add for Dd {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Mul for Dd {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

type DdMatrix = Vec<Dd>;

fn dd_matmul(a: &DdMatrix, b: &DdMatrix, n: usize) -> DdMatrix {
    let mut c = vec![Dd::default(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik.hi == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] = c[i * n + j] + aik * b[k * n + j];
            }
        }
    }
    c
}

/// `exp(M)` by a 60-term Taylor series on `M / 2^s` with `||M / 2^s||_1 <= 1/2`,
/// then `s` squarings, all in double-double arithmetic. `m` is row-major.
pub fn taylor_expm(m: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(m.len(), n * n);
    let norm = (0..n)
        .map(|j| (0..n).map(|i| m[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0u32;
    while norm / 2f64.powi(s as i32) > 0.5 {
        s += 1;
    }
    let scale = 2f64.powi(-(s as i32));
    let a: DdMatrix = m.iter().map(|&x| Dd::new(x * scale)).collect();
    let mut sum: DdMatrix = vec![Dd::default(); n * n];
    let mut term: DdMatrix = vec![Dd::default(); n * n];
    for i in 0..n {
        sum[i * n + i] = Dd::new(1.0);
        term[i * n + i] = Dd::new(1.0);
    }
    for k in 1..=60 {
        term = dd_matmul(&term, &a, n)
            .into_iter()
            .map(|x| x.div_f64(k as f64))
            .collect();
        for (s, t) in sum.iter_mut().zip(&term) {
            *s = *s + *t;
        }
    }
    for _ in 0..s {
        sum = dd_matmul(&sum, &sum, n);
    }
    sum.into_iter().map(Dd::to_f64).collect()
}

/// Right-hand side `F` of the untruncated value equation `dg/dt = -F(g)`,
/// written out directly from the model rather than through the library.
pub fn untruncated_rhs(p: &ModelParams64, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let ca = p.lambda_a / p.kappa * (-1.0 - p.kappa * (p.beta / 2.0 - p.a_tilde)).exp();
    let cb = p.lambda_b / p.kappa * (-1.0 - p.kappa * (p.beta / 2.0 - p.b_tilde)).exp();
    (0..n)
        .map(|j| {
            let q = p.q_min + j as i64;
            let qf = q as f64;
            let mut f = -p.phi * qf * qf + (p.lambda_a - p.lambda_b) * p.beta * qf;
            if j > 0 {
                f += ca * (p.kappa * (g[j - 1] - g[j])).exp();
            }
            if j + 1 < n {
                f += cb * (p.kappa * (g[j + 1] - g[j])).exp();
            }
            f
        })
        .collect()
}

pub fn terminal_condition(p: &ModelParams64) -> Vec<f64> {
    (p.q_min..=p.q_max)
        .map(|q| {
            let qf = q as f64;
            (p.a_tilde - p.b_tilde) / 2.0 * qf - (p.gamma - p.beta / 2.0) * qf * qf
        })
        .collect()
}

/// Classical RK4 backward from `T` to `0` in `n_steps` steps; returns `g(0, .)`.
pub fn rk4_g_at_zero(p: &ModelParams64, n_steps: usize) -> Vec<f64> {
    let h = p.horizon / n_steps as f64;
    let mut g = terminal_condition(p);
    // in tau = T - t: dg/dtau = F(g)
    let axpy = |g: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        g.iter().zip(k).map(|(a, b)| a + c * b).collect()
    };
    for _ in 0..n_steps {
        let k1 = untruncated_rhs(p, &g);
        let k2 = untruncated_rhs(p, &axpy(&g, &k1, h / 2.0));
        let k3 = untruncated_rhs(p, &axpy(&g, &k2, h / 2.0));
        let k4 = untruncated_rhs(p, &axpy(&g, &k3, h));
        for j in 0..g.len() {
            g[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    g
}

/// The three-state instance: reference market with inventory in `{-1, 0, 1}`.
pub fn three_state() -> ModelParams64 {
    ModelParams64 {
        q_min: -1,
        q_max: 1,
        ..ModelParams64::reference()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pooled_mm::hjb::{EulerOptions, HamiltonianMode};
    use pooled_mm::{
        build_generator, expm, solve_backward_with, solve_omega, ModelParams32, ModelParams64,
    };

    fn untruncated(p: &ModelParams64, n_steps: usize) -> pooled_mm::ValueGrid64 {
        solve_backward_with(
            p,
            EulerOptions {
                n_steps,
                mode: HamiltonianMode::Untruncated,
                store_every: n_steps,
            },
        )
        .unwrap()
    }

    #[test]
    fn closed_form_matches_rk4_on_three_states() {
        let p = three_state();
        let rk = rk4_g_at_zero(&p, 20_000);
        let table = solve_omega(&p, 10).unwrap();
        for (j, q) in p.q_range().enumerate() {
            let g = table.g_at_node(0, q).unwrap();
            assert!((g - rk[j]).abs() < 1e-10, "q={q}: {g} vs {}", rk[j]);
        }
    }

    #[test]
    fn closed_form_matches_rk4_on_reference_and_asymmetric_markets() {
        let asym = ModelParams64 {
            lambda_a: 12.0,
            lambda_b: 7.0,
            a_tilde: 0.15,
            b_tilde: 0.08,
            ..ModelParams64::reference()
        };
        for p in [ModelParams64::reference(), asym] {
            let rk = rk4_g_at_zero(&p, 20_000);
            let table = solve_omega(&p, 10).unwrap();
            for (j, q) in p.q_range().enumerate() {
                let g = table.g_at_node(0, q).unwrap();
                assert!((g - rk[j]).abs() < 1e-9, "q={q}: {g} vs {}", rk[j]);
            }
        }
    }

    #[test]
    fn euler_sweep_matches_rk4_on_three_states() {
        let p = three_state();
        let rk = rk4_g_at_zero(&p, 20_000);
        let grid = untruncated(&p, 1_000_000);
        for (j, q) in p.q_range().enumerate() {
            assert!((grid.g_at_node(0, q).unwrap() - rk[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn euler_error_halves_with_the_step() {
        let p = three_state();
        let rk = rk4_g_at_zero(&p, 20_000);
        let err = |n: usize| {
            let grid = untruncated(&p, n);
            p.q_range()
                .enumerate()
                .map(|(j, q)| (grid.g_at_node(0, q).unwrap() - rk[j]).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(2_000), err(4_000), err(8_000));
        assert!(e1 / e2 > 1.8 && e1 / e2 < 2.2, "{e1} {e2}");
        assert!(e2 / e3 > 1.8 && e2 / e3 < 2.2, "{e2} {e3}");
    }

    #[test]
    fn generator_exponential_matches_double_double_taylor() {
        let p = ModelParams64::reference();
        let a = build_generator(&p).unwrap();
        for t in [0.01, 0.3, 1.0, 4.0] {
            let m = a.scaled(t);
            let fast = expm(&m).unwrap();
            let slow = taylor_expm(m.as_slice(), m.dim());
            let scale = slow.iter().cloned().fold(0.0, f64::max);
            for (x, y) in fast.as_slice().iter().zip(&slow) {
                assert!(*y > 0.0 && *x > 0.0);
                // Pade error is relative to the matrix scale; far corners at small t are ~1e-12
                assert!((x - y).abs() <= 1e-14 * scale, "t={t}: {x} vs {y}");
                if *y > 1e-6 * scale {
                    assert!((x - y).abs() <= 1e-10 * y, "t={t}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn single_precision_tracks_double() {
        let p64 = ModelParams64::reference();
        let p32: ModelParams32 = p64.convert();
        let t64 = solve_omega(&p64, 100).unwrap();
        let t32 = solve_omega(&p32, 100).unwrap();
        for q in p64.q_range() {
            let g64 = t64.g_at_node(0, q).unwrap();
            let g32 = t32.g_at_node(0, q).unwrap() as f64;
            assert!(
                (g64 - g32).abs() < 1e-4 * (1.0 + g64.abs()),
                "q={q}: {g64} vs {g32}"
            );
        }
    }
}
