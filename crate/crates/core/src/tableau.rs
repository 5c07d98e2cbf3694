//! Butcher tableaus and the symplectic condition.
//!
//! A tableau `(A, b, c)` is symplectic when
//! `S_ij = b_i a_ij + b_j a_ji - b_i b_j` vanishes for every pair and all
//! weights are non-negative. Gauss collocation methods satisfy both; the
//! explicit and implicit Euler methods and classical RK4 do not and are kept
//! around as negative controls.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau<T> {
    name: String,
    stages: usize,
    /// Row-major `s x s`.
    a: Vec<T>,
    b: Vec<T>,
    c: Vec<T>,
}

impl<T: Real> ButcherTableau<T> {
    /// Builds a tableau from rows of `A` and weights `b`; nodes are `c = A·1`.
    pub fn new(name: impl Into<String>, a: Vec<Vec<T>>, b: Vec<T>) -> Result<Self> {
        let c = a
            .iter()
            .map(|row| row.iter().fold(T::zero(), |s, &v| s + v))
            .collect();
        Self::with_nodes(name, a, b, c)
    }

    /// Builds a tableau with explicit nodes, which must agree with `A·1`.
    pub fn with_nodes(
        name: impl Into<String>,
        a: Vec<Vec<T>>,
        b: Vec<T>,
        c: Vec<T>,
    ) -> Result<Self> {
        let s = b.len();
        if s == 0 {
            return Err(Error::InvalidTableau("at least one stage required".into()));
        }
        if a.len() != s || a.iter().any(|row| row.len() != s) || c.len() != s {
            return Err(Error::InvalidTableau(format!(
                "A must be {s}x{s} and c of length {s}"
            )));
        }
        let flat: Vec<T> = a.into_iter().flatten().collect();
        if flat.iter().chain(&b).chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTableau("non-finite coefficient".into()));
        }
        let tol = T::lit(1e-14).max(T::epsilon() * T::lit(8.0));
        for i in 0..s {
            let row_sum = flat[i * s..(i + 1) * s]
                .iter()
                .fold(T::zero(), |acc, &v| acc + v);
            if (row_sum - c[i]).abs() > tol {
                return Err(Error::InvalidTableau(format!(
                    "c[{i}] = {} differs from row sum {row_sum}",
                    c[i]
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            stages: s,
            a: flat,
            b,
            c,
        })
    }

    /// The `order/2`-stage Gauss collocation method.
    pub fn gauss(order: usize) -> Result<Self> {
        let half = T::lit(0.5);
        match order {
            2 => Self::with_nodes("gauss2", vec![vec![half]], vec![T::one()], vec![half]),
            4 => {
                let r = T::lit(3.0).sqrt() / T::lit(6.0);
                let q = T::lit(0.25);
                Self::with_nodes(
                    "gauss4",
                    vec![vec![q, q - r], vec![q + r, q]],
                    vec![half, half],
                    vec![half - r, half + r],
                )
            }
            6 => {
                let r = T::lit(15.0).sqrt();
                let a11 = T::lit(5.0) / T::lit(36.0);
                let a22 = T::lit(2.0) / T::lit(9.0);
                let b1 = T::lit(5.0) / T::lit(18.0);
                let b2 = T::lit(4.0) / T::lit(9.0);
                Self::with_nodes(
                    "gauss6",
                    vec![
                        vec![a11, a22 - r / T::lit(15.0), a11 - r / T::lit(30.0)],
                        vec![a11 + r / T::lit(24.0), a22, a11 - r / T::lit(24.0)],
                        vec![a11 + r / T::lit(30.0), a22 + r / T::lit(15.0), a11],
                    ],
                    vec![b1, b2, b1],
                    vec![half - r / T::lit(10.0), half, half + r / T::lit(10.0)],
                )
            }
            other => Err(Error::UnsupportedOrder(other)),
        }
    }

    pub fn forward_euler() -> Self {
        Self::new("euler", vec![vec![T::zero()]], vec![T::one()]).expect("valid tableau")
    }

    pub fn implicit_euler() -> Self {
        Self::new("implicit-euler", vec![vec![T::one()]], vec![T::one()]).expect("valid tableau")
    }

    pub fn classical_rk4() -> Self {
        let z = T::zero();
        let h = T::lit(0.5);
        let sixth = T::one() / T::lit(6.0);
        let third = T::one() / T::lit(3.0);
        Self::new(
            "rk4",
            vec![
                vec![z, z, z, z],
                vec![h, z, z, z],
                vec![z, h, z, z],
                vec![z, z, T::one(), z],
            ],
            vec![sixth, third, third, sixth],
        )
        .expect("valid tableau")
    }

    /// Looks up a built-in tableau: `gauss2`, `gauss4`, `gauss6`, `euler`,
    /// `implicit-euler`, `rk4`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "gauss2" | "midpoint" => Self::gauss(2),
            "gauss4" => Self::gauss(4),
            "gauss6" => Self::gauss(6),
            "euler" | "forward-euler" => Ok(Self::forward_euler()),
            "implicit-euler" | "backward-euler" => Ok(Self::implicit_euler()),
            "rk4" | "classical-rk4" => Ok(Self::classical_rk4()),
            _ => Err(Error::UnknownTableau(name.to_string())),
        }
    }

    pub const BUILTIN: [&'static str; 6] = [
        "gauss2",
        "gauss4",
        "gauss6",
        "euler",
        "implicit-euler",
        "rk4",
    ];

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> T {
        self.a[i * self.stages + j]
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn c(&self) -> &[T] {
        &self.c
    }

    /// True when `A` is strictly lower triangular.
    pub fn is_explicit(&self) -> bool {
        (0..self.stages).all(|i| (i..self.stages).all(|j| self.a(i, j) == T::zero()))
    }

    /// The symmetric matrix `S_ij = b_i a_ij + b_j a_ji - b_i b_j`.
    #[allow(clippy::needless_range_loop)]
    pub fn symplectic_defect(&self) -> Vec<Vec<T>> {
        let s = self.stages;
        let mut out = vec![vec![T::zero(); s]; s];
        for i in 0..s {
            for j in i..s {
                let v = self.b[i] * self.a(i, j) + self.b[j] * self.a(j, i) - self.b[i] * self.b[j];
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        out
    }

    pub fn max_defect(&self) -> T {
        self.symplectic_defect()
            .iter()
            .flatten()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min_weight(&self) -> T {
        self.b.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    /// `max|S_ij| <= tol` and `min b_i >= -tol`.
    pub fn is_symplectic(&self, tol: T) -> bool {
        self.max_defect() <= tol && self.min_weight() >= -tol
    }

    /// `Σ b_i`, equal to 1 for a consistent method.
    pub fn weight_sum(&self) -> T {
        self.b.iter().fold(T::zero(), |s, &v| s + v)
    }

    /// `Σ b_i c_i`, equal to 1/2 for order two or higher.
    pub fn first_moment(&self) -> T {
        self.b
            .iter()
            .zip(&self.c)
            .fold(T::zero(), |s, (&b, &c)| s + b * c)
    }
}

impl<T: Real> fmt::Display for ButcherTableau<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.stages;
        let cell = |v: T| format!("{:>22.16e}", v.as_f64());
        for i in 0..s {
            write!(f, "{} |", cell(self.c[i]))?;
            for j in 0..s {
                write!(f, " {}", cell(self.a(i, j)))?;
            }
            writeln!(f)?;
        }
        writeln!(f, "{}-+{}", "-".repeat(22), "-".repeat(23 * s))?;
        write!(f, "{} |", " ".repeat(22))?;
        for j in 0..s {
            write!(f, " {}", cell(self.b[j]))?;
        }
        writeln!(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Tab = ButcherTableau<f64>;

    #[test]
    fn gauss_entries_match_closed_forms() {
        let g2 = Tab::gauss(2).unwrap();
        assert_eq!(g2.stages(), 1);
        assert_eq!((g2.a(0, 0), g2.b()[0], g2.c()[0]), (0.5, 1.0, 0.5));

        let g4 = Tab::gauss(4).unwrap();
        let r3 = 3f64.sqrt() / 6.0;
        assert_eq!(g4.stages(), 2);
        assert_eq!(g4.a(0, 0), 0.25);
        assert!((g4.a(0, 1) - (0.25 - r3)).abs() < 1e-16);
        assert!((g4.a(1, 0) - (0.25 + r3)).abs() < 1e-16);
        assert_eq!(g4.b(), &[0.5, 0.5]);
        assert!((g4.c()[0] - (0.5 - r3)).abs() < 1e-16);
        assert!((g4.c()[1] - (0.5 + r3)).abs() < 1e-16);

        let g6 = Tab::gauss(6).unwrap();
        let r15 = 15f64.sqrt();
        assert_eq!(g6.stages(), 3);
        assert_eq!(g6.b(), &[5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0]);
        assert!((g6.a(1, 0) - (5.0 / 36.0 + r15 / 24.0)).abs() < 1e-16);
        assert!((g6.a(1, 1) - 2.0 / 9.0).abs() < 1e-16);
        assert!((g6.a(1, 2) - (5.0 / 36.0 - r15 / 24.0)).abs() < 1e-16);
        assert_eq!(g6.c()[1], 0.5);
    }

    #[test]
    fn unsupported_order() {
        assert_eq!(Tab::gauss(3).unwrap_err(), Error::UnsupportedOrder(3));
        assert_eq!(Tab::gauss(8).unwrap_err(), Error::UnsupportedOrder(8));
    }

    #[test]
    fn nodes_must_be_row_sums() {
        let err = Tab::with_nodes("bad", vec![vec![0.5]], vec![1.0], vec![0.4]);
        assert!(matches!(err, Err(Error::InvalidTableau(_))));
        assert!(Tab::new("bad", vec![vec![0.5, 0.1]], vec![1.0]).is_err());
        assert!(Tab::new("nan", vec![vec![f64::NAN]], vec![1.0]).is_err());
    }

    #[test]
    fn defect_of_simple_methods() {
        assert_eq!(Tab::gauss(2).unwrap().symplectic_defect(), vec![vec![0.0]]);
        assert_eq!(Tab::forward_euler().symplectic_defect(), vec![vec![-1.0]]);
        assert_eq!(Tab::implicit_euler().symplectic_defect(), vec![vec![1.0]]);
    }

    #[test]
    fn gauss4_defect_vanishes() {
        // S_12 = ½(¼−√3/6) + ½(¼+√3/6) − ¼ = 0
        let s = Tab::gauss(4).unwrap().symplectic_defect();
        assert!(s.iter().flatten().all(|v| v.abs() <= 1e-15));
    }

    #[test]
    fn rk4_defect_by_hand() {
        // b = (1/6, 1/3, 1/3, 1/6), a21 = a32 = 1/2, a43 = 1
        // S_11 = 0 + 0 − 1/36
        // S_12 = b2 a21 − b1 b2 = 1/6 − 1/18 = 1/9
        // S_34 = b4 a43 − b3 b4 = 1/6 − 1/18 = 1/9
        // S_14 = −b1 b4 = −1/36
        let s = Tab::classical_rk4().symplectic_defect();
        assert!((s[0][0] + 1.0 / 36.0).abs() < 1e-16);
        assert!((s[0][1] - 1.0 / 9.0).abs() < 1e-16);
        assert!((s[2][3] - 1.0 / 9.0).abs() < 1e-16);
        assert!((s[0][3] + 1.0 / 36.0).abs() < 1e-16);
        assert!(!Tab::classical_rk4().is_symplectic(1e-13));
    }

    #[test]
    fn symplectic_verdicts() {
        for order in [2, 4, 6] {
            let t = Tab::gauss(order).unwrap();
            assert!(t.is_symplectic(1e-13), "{}", t.name());
            assert!(t.max_defect() <= 1e-15);
            assert!(t.min_weight() > 0.0);
            assert!((t.weight_sum() - 1.0).abs() <= 1e-15);
            assert!((t.first_moment() - 0.5).abs() <= 1e-15);
        }
        assert!(!Tab::forward_euler().is_symplectic(1e-13));
        assert!(!Tab::implicit_euler().is_symplectic(1e-13));
    }

    #[test]
    fn defect_is_exactly_symmetric() {
        for name in Tab::BUILTIN {
            let s = Tab::by_name(name).unwrap().symplectic_defect();
            for (i, row) in s.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    assert_eq!(*v, s[j][i]);
                }
            }
        }
    }

    #[test]
    fn negative_weights_are_not_symplectic() {
        // S = 0 trivially fails here, but the weight check must also bite on its own.
        let t = Tab::new("neg", vec![vec![-0.5]], vec![-1.0]).unwrap();
        assert_eq!(t.max_defect(), 0.0);
        assert!(!t.is_symplectic(1e-13));
    }

    #[test]
    fn lookup_and_display() {
        assert!(matches!(
            Tab::by_name("nope"),
            Err(Error::UnknownTableau(_))
        ));
        assert!(Tab::forward_euler().is_explicit());
        assert!(Tab::classical_rk4().is_explicit());
        assert!(!Tab::gauss(4).unwrap().is_explicit());
        let text = Tab::gauss(4).unwrap().to_string();
        assert_eq!(text.lines().count(), 4);
    }
}
