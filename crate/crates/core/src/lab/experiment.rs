//! Config-driven experiment runs producing CSV rows.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fields::{bump_suite, divergence_free, phi_suite};
use super::grid::TorusGrid;
use super::ratios::{
    blowup_family, circulation_ratio, divfree_witness_growth, duality_ratio, fractional_ratio,
    target_ratio, Polyline, Target, MAX_FRACTIONAL_GRID,
};
use super::spectral::p2_sharp_check;
use crate::error::{Error, Result};
use crate::operator::{self, catalog, Operator};

pub const CSV_HEADER: &str =
    "experiment,operator,N,epsilon,ell,p,sigma,ratio,refinement_delta,seed";

/// Default constraint operator for duality runs.
const DUALITY_OPERATOR: &str = "catalog:divergence:n=2";
/// Frequency band of the stream functions in duality runs.
const STREAM_BAND: usize = 4;
/// Support radius of the divergence-free fields in duality runs.
const STREAM_RADIUS: f64 = 0.2;
/// Side of the square curve in circulation runs.
const SQUARE_SIDE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentKind {
    Sobolev,
    Hardy,
    Fractional,
    P2,
    Blowup,
    Duality,
    DivfreeGrowth,
    Circulation,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Sobolev,
        ExperimentKind::Hardy,
        ExperimentKind::Fractional,
        ExperimentKind::P2,
        ExperimentKind::Blowup,
        ExperimentKind::Duality,
        ExperimentKind::DivfreeGrowth,
        ExperimentKind::Circulation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sobolev => "sobolev",
            ExperimentKind::Hardy => "hardy",
            ExperimentKind::Fractional => "fractional",
            ExperimentKind::P2 => "p2",
            ExperimentKind::Blowup => "blowup",
            ExperimentKind::Duality => "duality",
            ExperimentKind::DivfreeGrowth => "divfree-growth",
            ExperimentKind::Circulation => "circulation",
        }
    }

    fn needs_operator(self) -> bool {
        !matches!(
            self,
            ExperimentKind::Duality | ExperimentKind::DivfreeGrowth | ExperimentKind::Circulation
        )
    }

    fn needs_epsilons(self) -> bool {
        matches!(
            self,
            ExperimentKind::Blowup | ExperimentKind::DivfreeGrowth | ExperimentKind::Circulation
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::precondition("experiment_kind", format!("unknown experiment `{s}`"))
            })
    }
}

/// Test-field family for the ratio experiments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// The five radial bumps of the fixed suite.
    Bump,
    /// The five anisotropic blobs of the fixed suite.
    Blob,
    /// Mollified fundamental solutions, one per `ε`.
    Blowup,
    /// Bumps and blobs together.
    #[default]
    Suite,
}

fn default_trials() -> usize {
    10
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `catalog:NAME[:params]` or a path to an operator file.
    #[serde(default)]
    pub operator: Option<String>,
    pub grid_sizes: Vec<usize>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub ell: usize,
    #[serde(default)]
    pub seed: u64,
    /// CSV destination; the command line may override it.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Ratio computed along blow-up families.
    #[serde(default)]
    pub target: Option<Target>,
    /// Source vector in `E` for blow-up families; defaults to the first
    /// basis vector.
    #[serde(default)]
    pub witness: Option<Vec<f64>>,
    /// Fibre vector in `V` for bump families; defaults to the first basis
    /// vector.
    #[serde(default)]
    pub fibre: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::precondition("config", e.to_string()))
    }

    fn operator_reference(&self, kind: ExperimentKind) -> Result<String> {
        match (&self.operator, kind) {
            (Some(r), _) => Ok(r.clone()),
            (None, ExperimentKind::Duality) => Ok(DUALITY_OPERATOR.to_string()),
            (None, ExperimentKind::DivfreeGrowth) => Ok(format!(
                "{}{}",
                operator::CATALOG_PREFIX,
                catalog::descriptor("partial_slice", 2, &Default::default())
            )),
            (None, ExperimentKind::Circulation) => Ok("circulation:n=2".to_string()),
            (None, _) => Err(Error::precondition(
                "operator",
                format!("`{kind}` needs an operator"),
            )),
        }
    }

    /// Checks the parameters `kind` depends on without running anything.
    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if self.grid_sizes.is_empty() {
            return Err(Error::precondition(
                "grid_sizes",
                "at least one grid size is required",
            ));
        }
        if kind.needs_operator() && self.operator.is_none() {
            return Err(Error::precondition(
                "operator",
                format!("`{kind}` needs an operator"),
            ));
        }
        let needs_eps =
            kind.needs_epsilons() || (self.family == Family::Blowup && kind.needs_operator());
        if needs_eps && self.epsilons.is_empty() {
            return Err(Error::precondition(
                "epsilons",
                format!("`{kind}` needs mollification scales"),
            ));
        }
        let finest = *self.grid_sizes.iter().max().expect("nonempty");
        for &size in &self.grid_sizes {
            TorusGrid::new(1, size)?;
        }
        let spacing = 1.0 / finest as f64;
        if needs_eps {
            for &epsilon in &self.epsilons {
                if !(epsilon >= 2.0 * spacing) {
                    return Err(Error::Unresolvable { epsilon, spacing });
                }
            }
        }
        if self.trials == 0 {
            return Err(Error::precondition(
                "trials",
                "at least one trial is required",
            ));
        }
        match kind {
            ExperimentKind::Fractional => {
                if self.p.is_none() || self.sigma.is_none() {
                    return Err(Error::precondition(
                        "fractional_exponent",
                        "`p` and `sigma` are required",
                    ));
                }
                if finest > MAX_FRACTIONAL_GRID {
                    return Err(Error::precondition(
                        "fractional_grid",
                        format!("grid size {finest} exceeds {MAX_FRACTIONAL_GRID}"),
                    ));
                }
                if self.family == Family::Blowup {
                    return Err(Error::precondition(
                        "family",
                        "fractional runs use bump families",
                    ));
                }
            }
            ExperimentKind::Duality | ExperimentKind::DivfreeGrowth => {
                if self.ell == 0 {
                    return Err(Error::precondition(
                        "duality_exponent",
                        "`ell` must be at least 1",
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// One CSV row. `member` and `source_perturbation` are not part of the CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub operator: String,
    #[serde(rename = "N")]
    pub grid_size: usize,
    pub epsilon: Option<f64>,
    pub ell: Option<usize>,
    pub p: Option<f64>,
    pub sigma: Option<f64>,
    pub ratio: f64,
    pub refinement_delta: Option<f64>,
    pub seed: u64,
    /// Position of the test field within its family.
    #[serde(skip)]
    pub member: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_perturbation: Option<f64>,
}

impl ExperimentRow {
    fn record(&self) -> [String; 10] {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        [
            self.experiment.clone(),
            self.operator.clone(),
            self.grid_size.to_string(),
            opt(self.epsilon),
            opt(self.ell),
            opt(self.p),
            opt(self.sigma),
            self.ratio.to_string(),
            opt(self.refinement_delta),
            self.seed.to_string(),
        ]
    }

    /// Rows sharing a key differ only in grid size.
    fn key(&self) -> (String, String, Option<u64>, usize) {
        (
            self.experiment.clone(),
            self.operator.clone(),
            self.epsilon.map(f64::to_bits),
            self.member,
        )
    }
}

/// Fills `refinement_delta` with `|r_N − r_{N'}| / |r_{N'}|`, `N'` the next
/// coarser grid carrying the same key. Coarsest rows stay empty.
pub fn refinement_deltas(rows: &mut [ExperimentRow]) {
    let mut by_key: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        by_key.entry(row.key()).or_default().push(i);
    }
    for mut idx in by_key.into_values() {
        idx.sort_by_key(|&i| rows[i].grid_size);
        for w in idx.windows(2) {
            let coarse = rows[w[0]].ratio;
            let fine = rows[w[1]].ratio;
            rows[w[1]].refinement_delta = Some((fine - coarse).abs() / coarse.abs());
        }
    }
}

pub fn write_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    writer.write_record(CSV_HEADER.split(',')).map_err(io)?;
    for row in rows {
        writer.write_record(row.record()).map_err(io)?;
    }
    writer.flush().map_err(Error::Io)
}

fn basis(dim: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[0] = 1.0;
    e
}

fn checked_vector(v: &Option<Vec<f64>>, dim: usize, name: &'static str) -> Result<Vec<f64>> {
    match v {
        None => Ok(basis(dim)),
        Some(v) if v.len() == dim && v.iter().any(|&x| x != 0.0) => Ok(v.clone()),
        Some(v) => Err(Error::precondition(
            name,
            format!("expected a nonzero vector of length {dim}, got {v:?}"),
        )),
    }
}

struct Runner<'a> {
    kind: ExperimentKind,
    cfg: &'a ExperimentConfig,
    label: String,
}

impl Runner<'_> {
    fn row(&self, grid_size: usize, member: usize, ratio: f64) -> ExperimentRow {
        ExperimentRow {
            experiment: self.kind.name().to_string(),
            operator: self.label.clone(),
            grid_size,
            epsilon: None,
            ell: None,
            p: None,
            sigma: None,
            ratio,
            refinement_delta: None,
            seed: self.cfg.seed,
            member,
            source_perturbation: None,
        }
    }

    fn members(&self) -> std::ops::Range<usize> {
        match self.cfg.family {
            Family::Bump => 0..5,
            Family::Blob => 5..10,
            _ => 0..10,
        }
    }

    /// Ratios over the fixed bump suite, one job per (grid, member).
    fn suite<F>(&self, op: &Operator, ratio: F) -> Result<Vec<ExperimentRow>>
    where
        F: Fn(&super::grid::GridField) -> Result<f64> + Sync,
    {
        let fibre = checked_vector(&self.cfg.fibre, op.dim_v(), "fibre")?;
        let members = self.members();
        let jobs: Vec<(usize, usize)> = self
            .cfg
            .grid_sizes
            .iter()
            .flat_map(|&size| members.clone().map(move |m| (size, m)))
            .collect();
        let grids: Vec<TorusGrid> = self
            .cfg
            .grid_sizes
            .iter()
            .map(|&s| TorusGrid::new(op.n(), s))
            .collect::<Result<_>>()?;
        jobs.par_iter()
            .map(|&(size, m)| {
                let grid = grids[self
                    .cfg
                    .grid_sizes
                    .iter()
                    .position(|&s| s == size)
                    .expect("listed")];
                let (radius, u) = bump_suite(grid, &fibre).swap_remove(m);
                let mut row = self.row(size, m, ratio(&u)?);
                row.epsilon = Some(radius);
                Ok(row)
            })
            .collect()
    }

    fn blowup(&self, op: &Operator, target: Target) -> Result<Vec<ExperimentRow>> {
        let e = checked_vector(&self.cfg.witness, op.dim_e(), "witness")?;
        let per_grid: Vec<Vec<ExperimentRow>> = self
            .cfg
            .grid_sizes
            .iter()
            .map(|&size| {
                let points = blowup_family(op, &e, &self.cfg.epsilons, self.cfg.ell, target, size)?;
                Ok(points
                    .into_iter()
                    .map(|pt| {
                        let mut row = self.row(size, 0, pt.ratio);
                        row.epsilon = Some(pt.epsilon);
                        row.ell = Some(self.cfg.ell);
                        row.source_perturbation = Some(pt.source_perturbation);
                        row
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(per_grid.into_iter().flatten().collect())
    }

    fn run(&self) -> Result<Vec<ExperimentRow>> {
        let cfg = self.cfg;
        let l = cfg.ell;
        let mut rows = match self.kind {
            ExperimentKind::Sobolev | ExperimentKind::Hardy => {
                let target = if self.kind == ExperimentKind::Sobolev {
                    Target::Sobolev
                } else {
                    Target::Hardy
                };
                let op = operator::resolve(&self.reference()?)?;
                if cfg.family == Family::Blowup {
                    self.blowup(&op, target)?
                } else {
                    let mut rows = self.suite(&op, |u| target_ratio(target, &op, u, l))?;
                    rows.iter_mut().for_each(|r| r.ell = Some(l));
                    rows
                }
            }
            ExperimentKind::Blowup => {
                let op = operator::resolve(&self.reference()?)?;
                self.blowup(&op, cfg.target.unwrap_or(Target::Sobolev))?
            }
            ExperimentKind::Fractional => {
                let op = operator::resolve(&self.reference()?)?;
                let (p, sigma) = (cfg.p.expect("validated"), cfg.sigma.expect("validated"));
                let mut rows = self.suite(&op, |u| fractional_ratio(&op, u, l, sigma, p))?;
                for r in &mut rows {
                    r.ell = Some(l);
                    r.p = Some(p);
                    r.sigma = Some(sigma);
                }
                rows
            }
            ExperimentKind::P2 => {
                let op = operator::resolve(&self.reference()?)?;
                cfg.grid_sizes
                    .iter()
                    .map(|&size| {
                        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                        let check = p2_sharp_check(&op, size, cfg.trials, &mut rng)?;
                        let mut row = self.row(size, 0, check.measured_max_ratio / check.bound);
                        row.p = Some(2.0);
                        Ok(row)
                    })
                    .collect::<Result<_>>()?
            }
            ExperimentKind::Duality => self.duality(l)?,
            ExperimentKind::DivfreeGrowth => {
                let x0 = [0.5, 0.5];
                cfg.grid_sizes
                    .iter()
                    .map(|&size| {
                        divfree_witness_growth(&cfg.epsilons, size, &x0).map(|pts| (size, pts))
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .flat_map(|(size, pts)| {
                        pts.into_iter()
                            .map(|(eps, ratio)| {
                                let mut row = self.row(size, 0, ratio);
                                row.epsilon = Some(eps);
                                row.ell = Some(1);
                                row
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect()
            }
            ExperimentKind::Circulation => self.circulation()?,
        };
        refinement_deltas(&mut rows);
        Ok(rows)
    }

    fn reference(&self) -> Result<String> {
        self.cfg.operator_reference(self.kind)
    }

    /// Divergence-free `f` from random stream functions paired with the
    /// random `φ` suite; member `j` uses seed stream `j` on every grid.
    fn duality(&self, l: usize) -> Result<Vec<ExperimentRow>> {
        let cfg = self.cfg;
        let l_op = operator::resolve(&self.reference()?)?;
        let n = l_op.n();
        let jobs: Vec<(usize, usize)> = cfg
            .grid_sizes
            .iter()
            .flat_map(|&size| (0..cfg.trials).map(move |j| (size, j)))
            .collect();
        let suites: Vec<Vec<super::grid::GridField>> = cfg
            .grid_sizes
            .iter()
            .map(|&size| Ok(phi_suite(TorusGrid::new(n, size)?, cfg.trials, cfg.seed)))
            .collect::<Result<_>>()?;
        jobs.par_iter()
            .map(|&(size, j)| {
                let slot = cfg
                    .grid_sizes
                    .iter()
                    .position(|&s| s == size)
                    .expect("listed");
                let grid = TorusGrid::new(n, size)?;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f1e1d);
                rng.set_stream(j as u64);
                let f =
                    divergence_free(grid, &grid.centre(), STREAM_RADIUS, STREAM_BAND, &mut rng)?;
                let mut row = self.row(size, j, duality_ratio(&l_op, &f, &suites[slot][j], l)?);
                row.ell = Some(l);
                Ok(row)
            })
            .collect()
    }

    /// Square of side ½ around the cell centre against the `φ` suite.
    fn circulation(&self) -> Result<Vec<ExperimentRow>> {
        let cfg = self.cfg;
        let curve = Polyline::square([0.5, 0.5], SQUARE_SIDE);
        let mut jobs = Vec::new();
        for &size in &cfg.grid_sizes {
            for &eps in &cfg.epsilons {
                for j in 0..cfg.trials {
                    jobs.push((size, eps, j));
                }
            }
        }
        let suites: Vec<Vec<super::grid::GridField>> = cfg
            .grid_sizes
            .iter()
            .map(|&size| Ok(phi_suite(TorusGrid::new(2, size)?, cfg.trials, cfg.seed)))
            .collect::<Result<_>>()?;
        jobs.par_iter()
            .map(|&(size, eps, j)| {
                let slot = cfg
                    .grid_sizes
                    .iter()
                    .position(|&s| s == size)
                    .expect("listed");
                let mut row = self.row(size, j, circulation_ratio(&curve, &suites[slot][j], eps)?);
                row.epsilon = Some(eps);
                row.ell = Some(1);
                Ok(row)
            })
            .collect()
    }
}

/// Runs one experiment. Jobs run in parallel; rows come back in job order
/// (grid size, then scale, then family member) regardless of scheduling.
pub fn run_experiment(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate(kind)?;
    let reference = cfg.operator_reference(kind)?;
    let label = reference
        .strip_prefix(operator::CATALOG_PREFIX)
        .unwrap_or(&reference)
        .to_string();
    Runner { kind, cfg, label }.run()
}
