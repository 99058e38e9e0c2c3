//! Control-affine nonlinear system `xdot = F1(x) + G1(x) u`, `y = F2(x) + G2(x) u`,
//! its domain box, and the sample sets drawn from it.
//!
//! Model file format (UTF-8, `#` starts a comment):
//!
//! ```text
//! states 2
//! inputs 1
//! outputs 1
//! domain x1 -1 1
//! domain x2 -1 1
//! const c = 2.5
//! f[1] = 5*x2 + c*x1*x2
//! f[2] = ...
//! g[1][1] = x1^2
//! ```
//!
//! `f[i]` must be given for every `i = 1..n+q`; missing `g[i][j]` entries are 0.
//! Constants and domain bounds may be constant expressions over earlier constants.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_expr_with, Expr};

/// Tolerance of the `f_i(0) = 0` check.
pub const ORIGIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone)]
pub struct NlSystem {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    /// `f_1..f_{n+q}`: rows of `F1` stacked over `F2`.
    pub f: Vec<Expr>,
    /// `(n+q) x m` grid of `g_ij`.
    pub g: Vec<Vec<Expr>>,
    pub domain: Vec<Interval>,
    /// Text the system was loaded from, kept so exported models are self-contained.
    pub source: String,
}

pub fn load_system(path: impl AsRef<Path>) -> Result<NlSystem> {
    let text = std::fs::read_to_string(path)?;
    NlSystem::from_str(&text)
}

impl FromStr for NlSystem {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        parse_model(text)
    }
}

enum Line<'a> {
    Const(&'a str, &'a str),
    Domain(usize, &'a str, &'a str),
    F(usize, &'a str),
    G(usize, usize, &'a str),
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::ModelSyntax {
        line,
        message: message.into(),
    }
}

/// Parses `[i]` index brackets at the start of `s`, returning the index and the rest.
fn bracket_index(s: &str, line: usize) -> Result<(usize, &str)> {
    let s = s.trim_start();
    let inner = s
        .strip_prefix('[')
        .ok_or_else(|| syntax(line, "expected `[`"))?;
    let close = inner.find(']').ok_or_else(|| syntax(line, "expected `]`"))?;
    let idx = inner[..close]
        .trim()
        .parse::<usize>()
        .map_err(|_| syntax(line, format!("bad index `{}`", &inner[..close])))?;
    if idx == 0 {
        return Err(syntax(line, "indices start at 1"));
    }
    Ok((idx, &inner[close + 1..]))
}

fn assignment(rest: &str, line: usize) -> Result<&str> {
    let rhs = rest
        .trim_start()
        .strip_prefix('=')
        .ok_or_else(|| syntax(line, "expected `=`"))?;
    if rhs.trim().is_empty() {
        return Err(syntax(line, "empty expression"));
    }
    Ok(rhs)
}

fn parse_model(text: &str) -> Result<NlSystem> {
    let mut dims: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut lines = Vec::new();

    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (head, rest) = content
            .split_once(|c: char| c.is_whitespace() || c == '[')
            .map(|(h, _)| (h, &content[h.len()..]))
            .unwrap_or((content, ""));
        match head {
            "states" | "inputs" | "outputs" => {
                let v = rest
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| syntax(line_no, format!("`{head}` needs a count")))?;
                if dims.insert(head, (v, line_no)).is_some() {
                    return Err(syntax(line_no, format!("duplicate `{head}`")));
                }
            }
            "domain" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(syntax(line_no, "expected `domain xK lo hi`"));
                }
                let k = parts[0]
                    .strip_prefix('x')
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| syntax(line_no, format!("bad state name `{}`", parts[0])))?;
                lines.push((line_no, Line::Domain(k, parts[1], parts[2])));
            }
            "const" => {
                let (name, rhs) = rest
                    .split_once('=')
                    .ok_or_else(|| syntax(line_no, "expected `const name = value`"))?;
                let name = name.trim();
                let valid = name
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                    && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                let reserved = name == "pi"
                    || (name.starts_with('x') && name[1..].chars().all(|c| c.is_ascii_digit()));
                if !valid || reserved {
                    return Err(syntax(line_no, format!("invalid constant name `{name}`")));
                }
                lines.push((line_no, Line::Const(name, rhs)));
            }
            "f" => {
                let (i, rest) = bracket_index(rest, line_no)?;
                lines.push((line_no, Line::F(i, assignment(rest, line_no)?)));
            }
            "g" => {
                let (i, rest) = bracket_index(rest, line_no)?;
                let (j, rest) = bracket_index(rest, line_no)?;
                lines.push((line_no, Line::G(i, j, assignment(rest, line_no)?)));
            }
            other => return Err(syntax(line_no, format!("unknown directive `{other}`"))),
        }
    }

    let n = dims
        .get("states")
        .map(|d| d.0)
        .ok_or_else(|| Error::InvalidModel("missing `states` line".into()))?;
    if n == 0 {
        return Err(Error::InvalidModel("at least one state is required".into()));
    }
    let m = dims.get("inputs").map_or(0, |d| d.0);
    let q = dims.get("outputs").map_or(0, |d| d.0);

    let mut constants = BTreeMap::new();
    let expr = |src: &str, vars: usize, line: usize, c: &BTreeMap<String, f64>| {
        parse_expr_with(src.trim(), vars, c).map_err(|e| Error::ExprSyntax { line, source: e })
    };
    let const_value = |src: &str, line: usize, c: &BTreeMap<String, f64>| -> Result<f64> {
        Ok(expr(src, 0, line, c)?.eval(&[])?)
    };

    for (line, l) in &lines {
        if let Line::Const(name, rhs) = l {
            let v = const_value(rhs, *line, &constants)?;
            if constants.insert(name.to_string(), v).is_some() {
                return Err(syntax(*line, format!("duplicate constant `{name}`")));
            }
        }
    }

    let mut domain: Vec<Option<Interval>> = vec![None; n];
    let mut f: Vec<Option<Expr>> = vec![None; n + q];
    let mut g: Vec<Vec<Option<Expr>>> = vec![vec![None; m]; n + q];
    for (line, l) in &lines {
        let line = *line;
        match l {
            Line::Const(..) => {}
            Line::Domain(k, lo, hi) => {
                if *k > n {
                    return Err(syntax(line, format!("x{k} exceeds the {n} states")));
                }
                let iv = Interval {
                    lo: const_value(lo, line, &constants)?,
                    hi: const_value(hi, line, &constants)?,
                };
                if iv.lo >= iv.hi {
                    return Err(syntax(line, format!("empty interval for x{k}")));
                }
                if !iv.contains(0.0) {
                    return Err(Error::InvalidModel(format!(
                        "domain of x{k} [{}, {}] does not contain 0",
                        iv.lo, iv.hi
                    )));
                }
                if domain[k - 1].replace(iv).is_some() {
                    return Err(syntax(line, format!("duplicate domain for x{k}")));
                }
            }
            Line::F(i, rhs) => {
                if *i > n + q {
                    return Err(syntax(line, format!("f[{i}] exceeds n+q = {}", n + q)));
                }
                if f[i - 1].replace(expr(rhs, n, line, &constants)?).is_some() {
                    return Err(syntax(line, format!("duplicate f[{i}]")));
                }
            }
            Line::G(i, j, rhs) => {
                if *i > n + q || *j > m {
                    return Err(syntax(line, format!("g[{i}][{j}] outside {}x{m}", n + q)));
                }
                if g[i - 1][j - 1].replace(expr(rhs, n, line, &constants)?).is_some() {
                    return Err(syntax(line, format!("duplicate g[{i}][{j}]")));
                }
            }
        }
    }

    let domain = domain
        .into_iter()
        .enumerate()
        .map(|(k, d)| d.ok_or_else(|| Error::InvalidModel(format!("missing domain for x{}", k + 1))))
        .collect::<Result<Vec<_>>>()?;
    let f = f
        .into_iter()
        .enumerate()
        .map(|(i, e)| e.ok_or_else(|| Error::InvalidModel(format!("missing f[{}]", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    let g = g
        .into_iter()
        .map(|row| row.into_iter().map(|e| e.unwrap_or_else(Expr::zero)).collect())
        .collect();

    let sys = NlSystem {
        n,
        m,
        q,
        f,
        g,
        domain,
        source: text.to_string(),
    };
    sys.check_origin()?;
    Ok(sys)
}

impl NlSystem {
    pub fn rows(&self) -> usize {
        self.n + self.q
    }

    pub fn f_name(i: usize) -> String {
        format!("f{}", i + 1)
    }

    pub fn g_name(i: usize, j: usize) -> String {
        format!("g{}{}", i + 1, j + 1)
    }

    /// Every `f_i` must vanish at the origin and every function must be
    /// finite there.
    fn check_origin(&self) -> Result<()> {
        let zero = vec![0.0; self.n];
        let (fv, _) = self.eval(&zero)?;
        for (i, v) in fv.iter().enumerate() {
            if v.abs() > ORIGIN_TOL {
                return Err(Error::NotZeroAtOrigin {
                    row: i + 1,
                    value: *v,
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.n && x.iter().zip(&self.domain).all(|(v, d)| d.contains(*v))
    }

    /// `F(x)` (length n+q) and `G(x)` ((n+q) x m).
    pub fn eval(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let singular = |function: String, source| Error::SingularPoint {
            function,
            x: x.to_vec(),
            source,
        };
        let fv = self
            .f
            .iter()
            .enumerate()
            .map(|(i, e)| e.eval(x).map_err(|err| singular(Self::f_name(i), err)))
            .collect::<Result<Vec<_>>>()?;
        let gv = self
            .g
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, e)| e.eval(x).map_err(|err| singular(Self::g_name(i, j), err)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((fv, gv))
    }

    /// Right-hand sides `(xdot, y)` at `(x, u)`.
    pub fn dynamics(&self, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if u.len() != self.m {
            return Err(Error::Dimension(format!("u has {} entries, expected {}", u.len(), self.m)));
        }
        let (fv, gv) = self.eval(x)?;
        let out: Vec<f64> = fv
            .iter()
            .zip(&gv)
            .map(|(fi, gi)| fi + gi.iter().zip(u).map(|(g, u)| g * u).sum::<f64>())
            .collect();
        let (xdot, y) = out.split_at(self.n);
        Ok((xdot.to_vec(), y.to_vec()))
    }
}

/// Eval `F` and `G` at a point; see [`NlSystem::eval`].
pub fn eval_system(sys: &NlSystem, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    sys.eval(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingStrategy {
    Grid,
    LatinHypercube,
    UniformRandom,
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingStrategy::Grid => "grid",
            SamplingStrategy::LatinHypercube => "latin-hypercube",
            SamplingStrategy::UniformRandom => "uniform-random",
        })
    }
}

impl FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(SamplingStrategy::Grid),
            "latin-hypercube" | "lhs" => Ok(SamplingStrategy::LatinHypercube),
            "uniform-random" | "uniform" => Ok(SamplingStrategy::UniformRandom),
            other => Err(Error::Config(format!("unknown sampling strategy `{other}`"))),
        }
    }
}

/// Ordered state samples `x(0), ..., x(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub strategy: SamplingStrategy,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(Vec::as_slice)
    }
}

/// Draws `count` (= N+1) points inside the box. Deterministic in
/// `(strategy, count, seed)`.
///
/// `Grid` builds a `k^n` lattice; when `count` is not a perfect n-th power the
/// lattice uses `k = ceil(count^(1/n))` and is thinned to `count` points with
/// an even stride.
pub fn sample_domain(
    domain: &[Interval],
    strategy: SamplingStrategy,
    count: usize,
    seed: u64,
) -> Result<SampleSet> {
    if count < 2 {
        return Err(Error::Config("need at least 2 sample points (N >= 1)".into()));
    }
    let n = domain.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = match strategy {
        SamplingStrategy::Grid => {
            let mut k = (count as f64).powf(1.0 / n as f64).round().max(2.0) as usize;
            while k.pow(n as u32) < count {
                k += 1;
            }
            let total = k.pow(n as u32);
            (0..count)
                .map(|j| {
                    let mut idx = if total == count { j } else { j * total / count };
                    let mut p = vec![0.0; n];
                    for d in (0..n).rev() {
                        let i = idx % k;
                        idx /= k;
                        let iv = domain[d];
                        p[d] = if i + 1 == k {
                            iv.hi
                        } else {
                            iv.lo + iv.width() * i as f64 / (k - 1) as f64
                        };
                    }
                    p
                })
                .collect()
        }
        SamplingStrategy::LatinHypercube => {
            let mut points = vec![vec![0.0; n]; count];
            let mut strata: Vec<usize> = (0..count).collect();
            for (d, iv) in domain.iter().enumerate() {
                strata.shuffle(&mut rng);
                for (p, &s) in points.iter_mut().zip(&strata) {
                    let u: f64 = rng.random();
                    p[d] = (iv.lo + iv.width() * (s as f64 + u) / count as f64).clamp(iv.lo, iv.hi);
                }
            }
            points
        }
        SamplingStrategy::UniformRandom => (0..count)
            .map(|_| {
                domain
                    .iter()
                    .map(|iv| iv.lo + iv.width() * rng.random::<f64>())
                    .collect()
            })
            .collect(),
    };
    Ok(SampleSet {
        points,
        strategy,
        seed,
    })
}
