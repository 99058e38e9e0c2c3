//! JSON persistence of [`LpvModel`] (schema `lpv-1`).
//!
//! Indices in the file (scheduling variables, slots, ordering) are one-based.
//! Reals are written with 17 significant digits so a round trip is lossless.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::lpv::{LpvEntry, LpvModel, Provenance, SchedKind, SchedVar};
use crate::pca::{PcaReduction, RowNormalizer};
use crate::poly::{Monomial, PolyModel};
use crate::regress::GammaSpec;
use crate::system::{NlSystem, SamplingStrategy};

pub const SCHEMA: &str = "lpv-1";

/// `f64` serialized in scientific notation with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Real(f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom(format!("non-finite value {}", self.0)));
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Real)
    }
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

fn unreal(v: &[Real]) -> Vec<f64> {
    v.iter().map(|r| r.0).collect()
}

#[derive(Serialize, Deserialize)]
struct Dims {
    n: usize,
    m: usize,
    q: usize,
    v: usize,
}

#[derive(Serialize, Deserialize)]
struct SchedFile {
    name: String,
    kind: String,
    index: usize,
    lo: Real,
    hi: Real,
}

#[derive(Serialize, Deserialize)]
struct TermFile {
    exp: Vec<u32>,
    coef: Real,
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    slot: usize,
    poly: Vec<TermFile>,
    theta: Vec<Real>,
}

#[derive(Serialize, Deserialize)]
struct Blocks {
    #[serde(rename = "A")]
    a: Vec<Vec<EntryFile>>,
    #[serde(rename = "B")]
    b: Vec<Vec<EntryFile>>,
    #[serde(rename = "C")]
    c: Vec<Vec<EntryFile>>,
    #[serde(rename = "D")]
    d: Vec<Vec<EntryFile>>,
}

#[derive(Serialize, Deserialize)]
struct PcaFile {
    #[serde(rename = "U_s")]
    u_s: Vec<Vec<Real>>,
    sigma: Vec<Real>,
    mu: Vec<Real>,
    s: Vec<Real>,
}

#[derive(Serialize, Deserialize)]
struct Degrees {
    pf: u32,
    pg: u32,
}

#[derive(Serialize, Deserialize)]
struct Sampling {
    strategy: SamplingStrategy,
    samples: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
enum GammaFile {
    Heuristic { multiplier: Real },
    Fixed { value: Real },
}

#[derive(Serialize, Deserialize)]
struct ProvenanceFile {
    degrees: Degrees,
    gamma: GammaFile,
    sampling: Sampling,
    seed: u64,
    order: Vec<usize>,
    margin: Real,
}

#[derive(Serialize, Deserialize)]
struct Source {
    model: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    dims: Dims,
    scheduling: Vec<SchedFile>,
    blocks: Blocks,
    pca: PcaFile,
    provenance: ProvenanceFile,
    source: Source,
}

fn entry_file(e: &LpvEntry) -> EntryFile {
    EntryFile {
        slot: e.slot + 1,
        poly: e
            .poly
            .terms
            .iter()
            .map(|(m, c)| TermFile {
                exp: m.0.clone(),
                coef: Real(*c),
            })
            .collect(),
        theta: reals(&e.theta),
    }
}

fn block_file(rows: &[Vec<LpvEntry>]) -> Vec<Vec<EntryFile>> {
    rows.iter().map(|r| r.iter().map(entry_file).collect()).collect()
}

pub fn to_json(model: &LpvModel) -> Result<String> {
    let red = &model.reduction;
    let p = &model.provenance;
    let file = ModelFile {
        schema: SCHEMA.into(),
        dims: Dims {
            n: model.n,
            m: model.m,
            q: model.q,
            v: red.v,
        },
        scheduling: model
            .scheduling
            .iter()
            .map(|sv| {
                let (kind, index) = match sv.kind {
                    SchedKind::State(k) => ("state", k),
                    SchedKind::Theta(l) => ("theta", l),
                };
                SchedFile {
                    name: sv.name(),
                    kind: kind.into(),
                    index: index + 1,
                    lo: Real(sv.lo),
                    hi: Real(sv.hi),
                }
            })
            .collect(),
        blocks: Blocks {
            a: block_file(&model.a),
            b: block_file(&model.b),
            c: block_file(&model.c),
            d: block_file(&model.d),
        },
        pca: PcaFile {
            u_s: red
                .u_s
                .row_iter()
                .map(|r| r.iter().copied().map(Real).collect())
                .collect(),
            sigma: reals(&red.sigma),
            mu: reals(&red.normalizer.mu),
            s: reals(&red.normalizer.s),
        },
        provenance: ProvenanceFile {
            degrees: Degrees { pf: p.pf, pg: p.pg },
            gamma: match p.gamma {
                GammaSpec::Heuristic { multiplier } => GammaFile::Heuristic {
                    multiplier: Real(multiplier),
                },
                GammaSpec::Fixed { value } => GammaFile::Fixed { value: Real(value) },
            },
            sampling: Sampling {
                strategy: p.strategy,
                samples: p.samples,
            },
            seed: p.seed,
            order: p.order.iter().map(|k| k + 1).collect(),
            margin: Real(p.margin),
        },
        source: Source {
            model: model.system.source.clone(),
        },
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

pub fn export_model(model: &LpvModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

fn shape_err(block: &str, found: String, expected: String) -> Error {
    Error::Shape {
        block: block.into(),
        found,
        expected,
    }
}

fn block_shape(rows: &[Vec<EntryFile>]) -> String {
    match rows.iter().map(Vec::len).collect::<Vec<_>>().as_slice() {
        [] => "0 x 0".into(),
        lens if lens.iter().all(|l| *l == lens[0]) => format!("{} x {}", lens.len(), lens[0]),
        lens => format!("{} ragged rows {lens:?}", lens.len()),
    }
}

fn check_block(name: &str, rows: &[Vec<EntryFile>], r: usize, c: usize) -> Result<()> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(shape_err(name, block_shape(rows), format!("{r} x {c}")));
    }
    Ok(())
}

fn entries(
    name: &str,
    rows: Vec<Vec<EntryFile>>,
    n: usize,
    v: usize,
    slot: impl Fn(usize, usize) -> usize,
) -> Result<Vec<Vec<LpvEntry>>> {
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .map(|(j, e)| {
                    let expected = slot(i, j);
                    if e.slot != expected + 1 {
                        return Err(Error::Corrupted(format!(
                            "{name}[{}][{}] refers to slot {}, expected {}",
                            i + 1,
                            j + 1,
                            e.slot,
                            expected + 1
                        )));
                    }
                    if e.theta.len() != v + 1 {
                        return Err(shape_err(
                            &format!("{name}[{}][{}].theta", i + 1, j + 1),
                            e.theta.len().to_string(),
                            (v + 1).to_string(),
                        ));
                    }
                    let mut poly = PolyModel::zero(n);
                    for t in e.poly {
                        if t.exp.len() != n {
                            return Err(shape_err(
                                &format!("{name}[{}][{}].poly", i + 1, j + 1),
                                format!("exponent of length {}", t.exp.len()),
                                format!("length {n}"),
                            ));
                        }
                        poly.add_term(Monomial(t.exp), t.coef.0);
                    }
                    Ok(LpvEntry {
                        poly,
                        slot: expected,
                        theta: unreal(&e.theta),
                    })
                })
                .collect()
        })
        .collect()
}

pub fn from_json(text: &str) -> Result<LpvModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Corrupted(e.to_string()))?;
    let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("<missing>");
    if found != SCHEMA {
        return Err(Error::Schema {
            found: found.into(),
            expected: SCHEMA.into(),
        });
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::Corrupted(e.to_string()))?;

    let system: NlSystem = file
        .source
        .model
        .parse()
        .map_err(|e| Error::Corrupted(format!("embedded model text: {e}")))?;
    let Dims { n, m, q, v } = file.dims;
    if (system.n, system.m, system.q) != (n, m, q) {
        return Err(Error::Corrupted(format!(
            "dims ({n}, {m}, {q}) disagree with the embedded model ({}, {}, {})",
            system.n, system.m, system.q
        )));
    }
    let rows = (n + q) * (n + m);
    check_block("A", &file.blocks.a, n, n)?;
    check_block("B", &file.blocks.b, n, m)?;
    check_block("C", &file.blocks.c, q, n)?;
    check_block("D", &file.blocks.d, q, m)?;

    let pca = file.pca;
    if pca.u_s.len() != rows || pca.u_s.iter().any(|r| r.len() != v) {
        return Err(shape_err(
            "U_s",
            format!("{} rows", pca.u_s.len()),
            format!("{rows} x {v}"),
        ));
    }
    for (name, len) in [("mu", pca.mu.len()), ("s", pca.s.len())] {
        if len != rows {
            return Err(shape_err(name, len.to_string(), rows.to_string()));
        }
    }
    if v == 0 || v > pca.sigma.len() {
        return Err(Error::Corrupted(format!(
            "v = {v} with {} singular values",
            pca.sigma.len()
        )));
    }
    let reduction = PcaReduction {
        u_s: DMatrix::from_fn(rows, v, |r, c| pca.u_s[r][c].0),
        sigma: unreal(&pca.sigma),
        v,
        normalizer: RowNormalizer {
            mu: unreal(&pca.mu),
            s: unreal(&pca.s),
        },
    };

    let ef = |i: usize, k: usize| i * n + k;
    let eg = |i: usize, j: usize| n * (n + q) + i * m + j;
    let a = entries("A", file.blocks.a, n, v, ef)?;
    let b = entries("B", file.blocks.b, n, v, eg)?;
    let c = entries("C", file.blocks.c, n, v, |i, k| ef(i + n, k))?;
    let d = entries("D", file.blocks.d, n, v, |i, j| eg(i + n, j))?;

    let scheduling = file
        .scheduling
        .iter()
        .map(|s| {
            let idx = s
                .index
                .checked_sub(1)
                .ok_or_else(|| Error::Corrupted("scheduling index 0".into()))?;
            let kind = match s.kind.as_str() {
                "state" if idx < n => SchedKind::State(idx),
                "theta" if idx < v => SchedKind::Theta(idx),
                other => {
                    return Err(Error::Corrupted(format!(
                        "bad scheduling variable {other} {}",
                        s.index
                    )))
                }
            };
            Ok(SchedVar {
                kind,
                lo: s.lo.0,
                hi: s.hi.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let p = file.provenance;
    let order = p
        .order
        .iter()
        .map(|k| k.checked_sub(1).ok_or_else(|| Error::Corrupted("ordering index 0".into())))
        .collect::<Result<Vec<_>>>()?;
    let provenance = Provenance {
        pf: p.degrees.pf,
        pg: p.degrees.pg,
        gamma: match p.gamma {
            GammaFile::Heuristic { multiplier } => GammaSpec::Heuristic {
                multiplier: multiplier.0,
            },
            GammaFile::Fixed { value } => GammaSpec::Fixed { value: value.0 },
        },
        strategy: p.sampling.strategy,
        samples: p.sampling.samples,
        seed: p.seed,
        order,
        margin: p.margin.0,
    };
    LpvModel::from_parts(system, a, b, c, d, reduction, scheduling, provenance)
}

pub fn import_model(path: impl AsRef<Path>) -> Result<LpvModel> {
    from_json(&std::fs::read_to_string(path)?)
}
