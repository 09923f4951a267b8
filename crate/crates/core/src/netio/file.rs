//! Versioned JSON problem files.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{build_traffic_problem, Arc, OdPair, TrafficNetwork};
use crate::error::{Error, Result};
use crate::model::{
    build_lqr_reduction, CostFamily, LqrSpec, Params, ProblemSpec, QuadraticFamily, SinrFamily,
    TrafficParameterization, DEFAULT_MEDIATOR_BOUND,
};
use crate::polyhedra::Polyhedron;

pub const FORMAT_VERSION: u32 = 1;

/// Row-major dense matrix.
type Matrix = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub format_version: u32,
    pub family: FamilyDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<OdPair>,
    pub team_params: ParamsDoc,
    pub member_params: Vec<ParamsDoc>,
    /// Defaults to the box `[-50, 50]` on every coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mediator_set: Option<MediatorDoc>,
    /// Member strategy sets for non-traffic families.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feasible: Vec<FeasibleDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub nodes: usize,
    pub arcs: Vec<Arc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl From<&Params> for ParamsDoc {
    fn from(p: &Params) -> Self {
        Self {
            alpha: p.alpha.iter().copied().collect(),
            beta: p.beta.iter().copied().collect(),
            gamma: p.gamma.iter().copied().collect(),
        }
    }
}

impl From<&ParamsDoc> for Params {
    fn from(p: &ParamsDoc) -> Self {
        Params::new(&p.alpha, &p.beta, &p.gamma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterizationDoc {
    Scalar,
    Diagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyDoc {
    Traffic {
        parameterization: ParameterizationDoc,
        /// Per-arc flow cap; defaults to ten times the total demand.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        capacity: Option<f64>,
    },
    Quadratic {
        /// `q_basis[i][l]`.
        q_basis: Vec<Vec<Matrix>>,
        /// `b_basis[i][j][l]`, empty for `i == j`.
        b_basis: Vec<Vec<Vec<Matrix>>>,
        gamma_map: Vec<Matrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta_dim: Option<usize>,
        #[serde(default)]
        constant: f64,
    },
    Sinr {
        gains: Vec<f64>,
        noise: f64,
    },
    Lqr(LqrDoc),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrDoc {
    pub a: Matrix,
    pub b: Vec<Vec<f64>>,
    pub q_basis: Vec<Matrix>,
    pub qf_basis: Vec<Matrix>,
    pub r_basis: Vec<Vec<f64>>,
    pub horizon: usize,
    pub x0: Vec<f64>,
    pub alpha_tilde: Vec<f64>,
    pub beta_tilde: Vec<f64>,
    pub u_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeasibleDoc {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// Bounds (`null` = unbounded) plus equalities `H u = m`.
    BoundsAndEqualities {
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
        h: Matrix,
        m: Vec<f64>,
    },
    /// `{u : D u ≤ b, H u = m}`.
    Polyhedron {
        dim: usize,
        d: Matrix,
        b: Vec<f64>,
        h: Matrix,
        m: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MediatorDoc {
    UniformBox {
        bound: f64,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Polyhedron {
        dim: usize,
        d: Matrix,
        b: Vec<f64>,
        h: Matrix,
        m: Vec<f64>,
    },
}

/// A loaded problem: the document, the assembled spec and, for traffic
/// problems, the network.
#[derive(Clone, Debug)]
pub struct Problem {
    pub file: ProblemFile,
    pub spec: ProblemSpec,
    pub network: Option<TrafficNetwork>,
}

fn schema(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        location: location.into(),
        message: message.into(),
    }
}

fn to_matrix(rows: &Matrix, cols: usize, location: &str) -> Result<DMatrix<f64>> {
    for (r, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(schema(
                format!("{location}[{r}]"),
                format!("expected {cols} columns, got {}", row.len()),
            ));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

fn from_matrix(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn polyhedron_from(dim: usize, d: &Matrix, b: &[f64], h: &Matrix, m: &[f64], location: &str) -> Result<Polyhedron> {
    let dm = to_matrix(d, dim, &format!("{location}.d"))?;
    let hm = to_matrix(h, dim, &format!("{location}.h"))?;
    if b.len() != dm.nrows() {
        return Err(schema(format!("{location}.b"), format!("expected {} entries", dm.nrows())));
    }
    if m.len() != hm.nrows() {
        return Err(schema(format!("{location}.m"), format!("expected {} entries", hm.nrows())));
    }
    Polyhedron::new(dm, DVector::from_column_slice(b), hm, DVector::from_column_slice(m))
        .map_err(|e| schema(location, e.to_string()))
}

fn bound_vec(v: &[Option<f64>], fallback: f64) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(|x| x.unwrap_or(fallback)))
}

impl FeasibleDoc {
    pub fn to_polyhedron(&self, location: &str) -> Result<Polyhedron> {
        match self {
            FeasibleDoc::Box { lower, upper } => {
                Polyhedron::boxed(DVector::from_column_slice(lower), DVector::from_column_slice(upper))
                    .map_err(|e| schema(location, e.to_string()))
            }
            FeasibleDoc::BoundsAndEqualities { lower, upper, h, m } => {
                let n = lower.len();
                let hm = to_matrix(h, n, &format!("{location}.h"))?;
                Polyhedron::bounds_and_equalities(
                    bound_vec(lower, f64::NEG_INFINITY),
                    bound_vec(upper, f64::INFINITY),
                    hm,
                    DVector::from_column_slice(m),
                )
                .map_err(|e| schema(location, e.to_string()))
            }
            FeasibleDoc::Polyhedron { dim, d, b, h, m } => polyhedron_from(*dim, d, b, h, m, location),
        }
    }

    pub fn from_polyhedron(p: &Polyhedron) -> Self {
        let opt = |v: &DVector<f64>| v.iter().map(|x| x.is_finite().then_some(*x)).collect::<Vec<_>>();
        match p.bounds() {
            Some((lo, hi)) if p.is_box() && lo.iter().chain(hi.iter()).all(|x| x.is_finite()) => FeasibleDoc::Box {
                lower: vec_of(lo),
                upper: vec_of(hi),
            },
            Some((lo, hi)) => FeasibleDoc::BoundsAndEqualities {
                lower: opt(lo),
                upper: opt(hi),
                h: from_matrix(p.eq_matrix()),
                m: vec_of(p.eq_rhs()),
            },
            None => FeasibleDoc::Polyhedron {
                dim: p.dim(),
                d: from_matrix(p.ineq_matrix()),
                b: vec_of(p.ineq_rhs()),
                h: from_matrix(p.eq_matrix()),
                m: vec_of(p.eq_rhs()),
            },
        }
    }
}

impl MediatorDoc {
    pub fn to_polyhedron(&self, dim: usize) -> Result<Polyhedron> {
        let check = |len: usize, what: &str| {
            if len == dim {
                Ok(())
            } else {
                Err(schema(
                    format!("mediator_set.{what}"),
                    format!("expected {dim} entries, got {len}"),
                ))
            }
        };
        match self {
            MediatorDoc::UniformBox { bound } => {
                if !(*bound >= 0.0) {
                    return Err(schema("mediator_set.bound", "must be nonnegative"));
                }
                Ok(Polyhedron::uniform_box(dim, -bound, *bound))
            }
            MediatorDoc::Box { lower, upper } => {
                check(lower.len(), "lower")?;
                check(upper.len(), "upper")?;
                Polyhedron::boxed(DVector::from_column_slice(lower), DVector::from_column_slice(upper))
                    .map_err(|e| schema("mediator_set", e.to_string()))
            }
            MediatorDoc::Polyhedron { dim: d0, d, b, h, m } => {
                check(*d0, "dim")?;
                polyhedron_from(*d0, d, b, h, m, "mediator_set")
            }
        }
    }

    pub fn from_polyhedron(p: &Polyhedron) -> Self {
        match p.bounds() {
            Some((lo, hi)) if p.is_box() => {
                let b = hi.get(0).copied().unwrap_or(0.0);
                if lo.iter().all(|&x| x == -b) && hi.iter().all(|&x| x == b) {
                    MediatorDoc::UniformBox { bound: b }
                } else {
                    MediatorDoc::Box {
                        lower: vec_of(lo),
                        upper: vec_of(hi),
                    }
                }
            }
            _ => MediatorDoc::Polyhedron {
                dim: p.dim(),
                d: from_matrix(p.ineq_matrix()),
                b: vec_of(p.ineq_rhs()),
                h: from_matrix(p.eq_matrix()),
                m: vec_of(p.eq_rhs()),
            },
        }
    }
}

impl LqrDoc {
    fn to_spec(&self) -> Result<LqrSpec> {
        let p = self.a.len();
        let a = to_matrix(&self.a, p, "family.a")?;
        let mats = |v: &[Matrix], what: &str| {
            v.iter()
                .enumerate()
                .map(|(l, m)| to_matrix(m, p, &format!("family.{what}[{l}]")))
                .collect::<Result<Vec<_>>>()
        };
        Ok(LqrSpec {
            a,
            b: self.b.iter().map(|b| DVector::from_column_slice(b)).collect(),
            q_basis: mats(&self.q_basis, "q_basis")?,
            qf_basis: mats(&self.qf_basis, "qf_basis")?,
            r_basis: self.r_basis.clone(),
            horizon: self.horizon,
            x0: DVector::from_column_slice(&self.x0),
            alpha_tilde: DVector::from_column_slice(&self.alpha_tilde),
            beta_tilde: DVector::from_column_slice(&self.beta_tilde),
            u_bound: self.u_bound,
        })
    }

    fn from_spec(l: &LqrSpec) -> Self {
        Self {
            a: from_matrix(&l.a),
            b: l.b.iter().map(vec_of).collect(),
            q_basis: l.q_basis.iter().map(from_matrix).collect(),
            qf_basis: l.qf_basis.iter().map(from_matrix).collect(),
            r_basis: l.r_basis.clone(),
            horizon: l.horizon,
            x0: vec_of(&l.x0),
            alpha_tilde: vec_of(&l.alpha_tilde),
            beta_tilde: vec_of(&l.beta_tilde),
            u_bound: l.u_bound,
        }
    }
}

impl ProblemFile {
    pub fn traffic(
        net: &TrafficNetwork,
        parameterization: TrafficParameterization,
        team: &Params,
        members: &[Params],
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            family: FamilyDoc::Traffic {
                parameterization: match parameterization {
                    TrafficParameterization::Scalar => ParameterizationDoc::Scalar,
                    TrafficParameterization::Diagonal => ParameterizationDoc::Diagonal,
                },
                capacity: None,
            },
            network: Some(NetworkDoc {
                nodes: net.nodes,
                arcs: net.arcs.clone(),
            }),
            members: net.members.clone(),
            team_params: team.into(),
            member_params: members.iter().map(ParamsDoc::from).collect(),
            mediator_set: None,
            feasible: Vec::new(),
        }
    }

    /// Document for a non-traffic spec (traffic specs need their network).
    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        let family = match spec.family() {
            CostFamily::Traffic(_) => {
                return Err(Error::UnsupportedFamily {
                    op: "problem file without network",
                    family: "traffic",
                })
            }
            CostFamily::Quadratic(q) => {
                let members = q.members();
                FamilyDoc::Quadratic {
                    q_basis: (0..members).map(|i| q.q_basis(i).iter().map(from_matrix).collect()).collect(),
                    b_basis: (0..members)
                        .map(|i| {
                            (0..members)
                                .map(|j| q.b_basis(i, j).iter().map(from_matrix).collect())
                                .collect()
                        })
                        .collect(),
                    gamma_map: (0..members).map(|i| from_matrix(q.gamma_map(i))).collect(),
                    beta_dim: (members == 1).then(|| q.dims().beta),
                    constant: q.constant(),
                }
            }
            CostFamily::Sinr(s) => FamilyDoc::Sinr {
                gains: vec_of(s.gains()),
                noise: s.noise(),
            },
            CostFamily::LqrReduced { lqr, .. } => FamilyDoc::Lqr(LqrDoc::from_spec(lqr)),
        };
        Ok(Self {
            format_version: FORMAT_VERSION,
            family,
            network: None,
            members: Vec::new(),
            team_params: spec.team_params().into(),
            member_params: spec.member_params().iter().map(ParamsDoc::from).collect(),
            mediator_set: Some(MediatorDoc::from_polyhedron(spec.mediator_set())),
            feasible: spec.feasible().iter().map(FeasibleDoc::from_polyhedron).collect(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| {
            schema(
                format!("line {}, column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        if file.format_version != FORMAT_VERSION {
            return Err(schema(
                "format_version",
                format!("unsupported version {}, expected {FORMAT_VERSION}", file.format_version),
            ));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_problem(&self) -> Result<Problem> {
        let team: Params = (&self.team_params).into();
        let members: Vec<Params> = self.member_params.iter().map(Params::from).collect();
        let (spec, network) = match &self.family {
            FamilyDoc::Traffic {
                parameterization,
                capacity,
            } => {
                let doc = self
                    .network
                    .as_ref()
                    .ok_or_else(|| schema("network", "traffic problems need a network"))?;
                if self.members.len() != self.member_params.len() {
                    return Err(schema(
                        "member_params",
                        format!("expected {} entries, got {}", self.members.len(), self.member_params.len()),
                    ));
                }
                let net = TrafficNetwork {
                    nodes: doc.nodes,
                    arcs: doc.arcs.clone(),
                    members: self.members.clone(),
                };
                net.validate()?;
                let param = match parameterization {
                    ParameterizationDoc::Scalar => TrafficParameterization::Scalar,
                    ParameterizationDoc::Diagonal => TrafficParameterization::Diagonal,
                };
                let spec = build_traffic_problem(&net, param, team, members, *capacity)?;
                (spec, Some(net))
            }
            FamilyDoc::Quadratic {
                q_basis,
                b_basis,
                gamma_map,
                beta_dim,
                constant,
            } => {
                let n = gamma_map.first().map_or(0, |g| g.len());
                let q = q_basis
                    .iter()
                    .enumerate()
                    .map(|(i, ql)| {
                        ql.iter()
                            .enumerate()
                            .map(|(l, m)| to_matrix(m, n, &format!("family.q_basis[{i}][{l}]")))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let b = b_basis
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(j, bl)| {
                                bl.iter()
                                    .enumerate()
                                    .map(|(l, m)| to_matrix(m, n, &format!("family.b_basis[{i}][{j}][{l}]")))
                                    .collect::<Result<Vec<_>>>()
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let g = gamma_map
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        let cols = m.first().map_or(0, |r| r.len());
                        to_matrix(m, cols, &format!("family.gamma_map[{i}]"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut fam = QuadraticFamily::new(q, b, g)?.with_constant(*constant);
                if let Some(d) = beta_dim {
                    fam = fam.with_beta_dim(*d);
                }
                let spec = self.assemble(CostFamily::Quadratic(fam), team, members)?;
                (spec, None)
            }
            FamilyDoc::Sinr { gains, noise } => {
                let fam = SinrFamily::new(DVector::from_column_slice(gains), *noise)?;
                (self.assemble(CostFamily::Sinr(fam), team, members)?, None)
            }
            FamilyDoc::Lqr(doc) => {
                let l = doc.to_spec()?;
                let spec = build_lqr_reduction(&l)?
                    .with_team_params(team)?
                    .with_member_params(members)?;
                (spec, None)
            }
        };
        let spec = match &self.mediator_set {
            Some(m) => {
                let set = m.to_polyhedron(spec.theta_dim())?;
                spec.with_mediator_set(set)?
            }
            None => spec,
        };
        Ok(Problem {
            file: self.clone(),
            spec,
            network,
        })
    }

    fn assemble(&self, family: CostFamily, team: Params, members: Vec<Params>) -> Result<ProblemSpec> {
        let count = family.members();
        if self.feasible.len() != count {
            return Err(schema(
                "feasible",
                format!("expected {count} strategy sets, got {}", self.feasible.len()),
            ));
        }
        let feasible = self
            .feasible
            .iter()
            .enumerate()
            .map(|(i, f)| f.to_polyhedron(&format!("feasible[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let d = family.dims().total() * count;
        let mediator = Polyhedron::uniform_box(d, -DEFAULT_MEDIATOR_BOUND, DEFAULT_MEDIATOR_BOUND);
        ProblemSpec::new(family, team, members, feasible, mediator)
    }
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<Problem> {
    let text = std::fs::read_to_string(path)?;
    ProblemFile::from_json(&text)?.to_problem()
}

pub fn save_problem(path: impl AsRef<Path>, file: &ProblemFile) -> Result<()> {
    std::fs::write(path, file.to_json()? + "\n")?;
    Ok(())
}
