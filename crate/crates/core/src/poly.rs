//! Sparse multivariate polynomials over the state variables.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;

use crate::system::SampleSet;

/// Exponent vector of a monomial `x1^e1 ... xn^en`.
///
/// Ordered graded-lexicographically: lower total degree first, and within a
/// degree the larger exponent of the earlier variable first
/// (`1, x1, x2, x1^2, x1 x2, x2^2, ...`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn one(n: usize) -> Self {
        Monomial(vec![0; n])
    }

    pub fn var(n: usize, k: usize) -> Self {
        let mut e = vec![0; n];
        e[k] = 1;
        Monomial(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .filter(|(e, _)| **e > 0)
            .map(|(&e, &v)| v.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            return f.write_str("1");
        }
        let mut first = true;
        for (k, &e) in self.0.iter().enumerate().filter(|(_, e)| **e > 0) {
            if !first {
                f.write_str("*")?;
            }
            first = false;
            match e {
                1 => write!(f, "x{}", k + 1)?,
                _ => write!(f, "x{}^{e}", k + 1)?,
            }
        }
        Ok(())
    }
}

/// All monomials of total degree `<= degree` in `n_vars` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    pub n_vars: usize,
    pub degree: u32,
    pub monomials: Vec<Monomial>,
}

impl MonomialBasis {
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }
}

/// Graded-lex ordered basis of size `C(n+p, p)`, constant term first.
pub fn make_basis(n_vars: usize, degree: u32) -> MonomialBasis {
    fn fill(rest: u32, k: usize, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
        if k + 1 == cur.len() {
            cur[k] = rest;
            out.push(Monomial(cur.clone()));
            return;
        }
        for e in (0..=rest).rev() {
            cur[k] = e;
            fill(rest - e, k + 1, cur, out);
        }
    }
    let mut monomials = Vec::new();
    if n_vars == 0 {
        monomials.push(Monomial(Vec::new()));
    } else {
        let mut cur = vec![0; n_vars];
        for d in 0..=degree {
            fill(d, 0, &mut cur, &mut monomials);
        }
    }
    MonomialBasis {
        n_vars,
        degree,
        monomials,
    }
}

/// `(N+1) x |basis|` matrix of monomials evaluated at the samples.
pub fn design_matrix(basis: &MonomialBasis, samples: &SampleSet) -> DMatrix<f64> {
    DMatrix::from_fn(samples.len(), basis.len(), |j, b| {
        basis.monomials[b].eval(&samples.points[j])
    })
}

/// Sparse polynomial; only nonzero coefficients are stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolyModel {
    pub n_vars: usize,
    pub terms: BTreeMap<Monomial, f64>,
}

impl PolyModel {
    pub fn zero(n_vars: usize) -> Self {
        PolyModel {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        let mut p = Self::zero(n_vars);
        p.add_term(Monomial::one(n_vars), c);
        p
    }

    pub fn from_coefficients(basis: &MonomialBasis, coef: &[f64]) -> Self {
        let mut p = Self::zero(basis.n_vars);
        for (m, &c) in basis.monomials.iter().zip(coef) {
            p.add_term(m.clone(), c);
        }
        p
    }

    /// Adds `c * m`, dropping the term if it cancels to zero.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.0.len(), self.n_vars);
        if c == 0.0 {
            return;
        }
        let slot = self.terms.entry(m).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(x)).sum()
    }

    /// Coefficient of the constant monomial, i.e. the value at the origin.
    pub fn constant_term(&self) -> f64 {
        self.terms
            .get(&Monomial::one(self.n_vars))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn without_constant(&self) -> Self {
        let mut p = self.clone();
        p.terms.remove(&Monomial::one(self.n_vars));
        p
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Zero-based indices of the variables that appear with positive exponent.
    pub fn variables(&self) -> BTreeSet<usize> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().enumerate().filter(|(_, e)| **e > 0).map(|(k, _)| k))
            .collect()
    }

    /// `self * x_k`, exact at coefficient level.
    pub fn mul_var(&self, k: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut e = m.0.clone();
                e[k] += 1;
                (Monomial(e), *c)
            })
            .collect();
        PolyModel {
            n_vars: self.n_vars,
            terms,
        }
    }

    /// Coefficient-wise sum.
    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (m, c) in &other.terms {
            p.add_term(m.clone(), *c);
        }
        p
    }
}

impl fmt::Display for PolyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(if *c < 0.0 { " - " } else { " + " })?;
            } else if *c < 0.0 {
                f.write_str("-")?;
            }
            if m.is_constant() {
                write!(f, "{}", c.abs())?;
            } else {
                write!(f, "{}*{m}", c.abs())?;
            }
        }
        Ok(())
    }
}
