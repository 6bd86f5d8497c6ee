//! Verification harness and identity discovery.
//!
//! [`run_suite`] evaluates every pointwise, integral, Noether and exterior
//! identity of the crate and collects one [`IdentityRow`] per identity.
//! Printed coefficient sets that fail are kept as `printed` rows next to the
//! reconciled ones, never replaced.
//!
//! [`discover_identities`] builds the surfaces × basis matrix of integrals,
//! extracts its numerical nullspace and reconstructs rational coefficient
//! vectors, which are then checked on held-out surfaces.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{mobius_apply, CatalogError, ChartPoint, Family, Generator, MobiusTransform, SurfaceSpec};
use crate::energies::{self, two_grid, EnergyError, EnergyPreset, InvariantIntegrals, QCurvature};
use crate::exterior::{self, ExteriorError};
use crate::noether::{self, LagrangianSpec, NoetherError};
use crate::shape::{curvature_at, invariants_at, second_order_at, shape_at, InvariantVector, SecondOrderData, ShapeError};

#[derive(Debug, thiserror::Error)]
pub enum IdentityError {
    #[error("{0} is an open patch; basis integrals need a closed surface")]
    OpenPatch(String),
    #[error("family has {got} surfaces, at least {needed} required")]
    FamilyTooSmall { got: usize, needed: usize },
    #[error("family spans {shapes} shapes and {topologies} topologies, at least 3 and 2 required")]
    FamilyTooNarrow { shapes: usize, topologies: usize },
    #[error("ill-conditioned family: {0}")]
    IllConditioned(ConditionReport),
    #[error("rank-deficient fit, singular values {0:?}")]
    RankDeficient(Vec<f64>),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Noether(#[from] NoetherError),
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
}

// ---------------------------------------------------------------------------
// Report

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Discrepancy,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Discrepancy => "DISCREPANCY",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Pointwise,
    Integral,
    Noether,
    Exterior,
    Discovery,
}

impl Category {
    /// Report order.
    pub const ALL: [Category; 5] = [Category::Pointwise, Category::Integral, Category::Noether, Category::Exterior, Category::Discovery];

    pub fn name(self) -> &'static str {
        match self {
            Category::Pointwise => "pointwise",
            Category::Integral => "integral",
            Category::Noether => "noether",
            Category::Exterior => "exterior",
            Category::Discovery => "discovery",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// How a row relates to the source text: its coefficients as printed, a
/// corrected set replacing printed ones that fail, or a statement derived
/// by the same rules but not printed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reading {
    Printed,
    Reconciled,
    Derived,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceResidual {
    pub surface: String,
    pub residual: f64,
    /// `log₂` of the coarse/fine residual ratio; `None` at the roundoff floor
    /// or for rows without a grid.
    pub convergence_order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub id: String,
    pub statement: String,
    pub category: Category,
    pub reading: Reading,
    /// Row holding the corrected statement of a printed one.
    pub companion: Option<String>,
    pub surfaces: Vec<String>,
    pub grid: Option<usize>,
    pub samples: usize,
    /// Worst residual over all surfaces; absent when the check errored.
    pub residual: Option<f64>,
    pub tolerance: f64,
    /// Worst convergence order over surfaces not yet at the roundoff floor.
    pub convergence_order: Option<f64>,
    pub requires_convergence: bool,
    pub verdict: Verdict,
    pub recovered: Option<Vec<f64>>,
    pub details: Vec<SurfaceResidual>,
    pub error: Option<String>,
    pub note: Option<String>,
}

/// Minimum convergence order for quadrature rows.
pub const MIN_ORDER: f64 = 1.5;

/// Residuals below this are treated as converged regardless of order.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

impl IdentityRow {
    fn decide(&mut self) {
        let converged = !self.requires_convergence
            || self.details.iter().all(|d| d.convergence_order.is_none_or(|o| o >= MIN_ORDER));
        let ok = self.error.is_none() && self.residual.is_some_and(|r| r <= self.tolerance) && converged;
        self.verdict = if ok { Verdict::Pass } else { Verdict::Discrepancy };
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool_version: String,
    pub seed: u64,
    pub grid: usize,
    pub points: usize,
    pub surfaces: Vec<String>,
    pub categories: Vec<Category>,
    pub variational: bool,
    pub tolerance_override: Option<f64>,
    pub passed: usize,
    pub discrepancies: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub meta: ReportMeta,
    pub rows: Vec<IdentityRow>,
}

impl VerificationReport {
    pub fn get(&self, id: &str) -> Option<&IdentityRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict == Verdict::Pass)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub surfaces: Vec<SurfaceSpec>,
    pub grid: usize,
    /// Random points per surface for pointwise rows.
    pub points: usize,
    /// Points per surface for the Noether field rows.
    pub noether_points: usize,
    /// Random algebraic inputs for the exterior rows, per surface.
    pub exterior_samples: usize,
    pub seed: u64,
    /// Replaces every row tolerance when set.
    pub tolerance_override: Option<f64>,
    /// Row groups to run, emitted in [`Category::ALL`] order.
    pub categories: Vec<Category>,
    /// Adds the variational rows to the Noether group.
    pub variational: bool,
    pub lagrangians: Vec<LagrangianSpec>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            surfaces: default_surfaces(),
            grid: 16,
            points: 100,
            noether_points: 4,
            exterior_samples: 100,
            seed: 1,
            tolerance_override: None,
            categories: Category::ALL[..4].to_vec(),
            variational: false,
            lagrangians: VARIATIONAL_LAGRANGIANS.to_vec(),
        }
    }
}

/// Sphere, generic ellipsoid and torus.
pub fn default_surfaces() -> Vec<SurfaceSpec> {
    vec![
        SurfaceSpec::sphere(1.0).expect("valid radius"),
        SurfaceSpec::ellipsoid(GENERIC_AXES).expect("valid axes"),
        SurfaceSpec::torus(2.0, 1.0).expect("valid radii"),
    ]
}

pub const GENERIC_AXES: [f64; 5] = [1.0, 1.3, 0.8, 1.1, 0.9];

const ALGEBRAIC_TOL: f64 = 1e-9;
const JET_TOL: f64 = 1e-7;
const EXTERIOR_TOL: f64 = 1e-11;

struct RowSpec {
    id: &'static str,
    statement: &'static str,
    reading: Reading,
    companion: Option<&'static str>,
    tolerance: f64,
}

const fn row(id: &'static str, statement: &'static str, reading: Reading, tolerance: f64) -> RowSpec {
    RowSpec { id, statement, reading, companion: None, tolerance }
}

const fn printed(id: &'static str, statement: &'static str, companion: &'static str, tolerance: f64) -> RowSpec {
    RowSpec { id, statement, reading: Reading::Printed, companion: Some(companion), tolerance }
}

impl RowSpec {
    fn start(&self, category: Category) -> IdentityRow {
        IdentityRow {
            id: self.id.to_string(),
            statement: self.statement.to_string(),
            category,
            reading: self.reading,
            companion: self.companion.map(str::to_string),
            surfaces: Vec::new(),
            grid: None,
            samples: 0,
            residual: None,
            tolerance: self.tolerance,
            convergence_order: None,
            requires_convergence: false,
            verdict: Verdict::Discrepancy,
            recovered: None,
            details: Vec::new(),
            error: None,
            note: None,
        }
    }
}

/// Accumulates per-surface residuals into a row.
struct Tally {
    row: IdentityRow,
}

impl Tally {
    fn new(spec: &RowSpec, category: Category) -> Self {
        Tally { row: spec.start(category) }
    }

    fn surface(&mut self, label: String, residual: f64, order: Option<f64>) {
        let r = if residual.is_nan() { f64::INFINITY } else { residual };
        self.row.residual = Some(self.row.residual.map_or(r, |x| x.max(r)));
        if let Some(o) = order {
            self.row.convergence_order = Some(self.row.convergence_order.map_or(o, |x| x.min(o)));
        }
        self.row.surfaces.push(label.clone());
        self.row.details.push(SurfaceResidual { surface: label, residual: r, convergence_order: order });
    }

    fn fail(&mut self, label: String, e: impl fmt::Display) {
        self.row.surfaces.push(label.clone());
        let msg = format!("{label}: {e}");
        self.row.error = Some(match self.row.error.take() {
            Some(prev) => format!("{prev}; {msg}"),
            None => msg,
        });
    }

    fn finish(mut self, tolerance_override: Option<f64>) -> IdentityRow {
        if let Some(t) = tolerance_override {
            self.row.tolerance = t;
        }
        if self.row.surfaces.is_empty() {
            self.row.error.get_or_insert_with(|| "no applicable surface in the configuration".to_string());
        }
        if self.row.residual.is_some_and(|r| !r.is_finite()) {
            self.row.error.get_or_insert_with(|| "non-finite residual".to_string());
            self.row.residual = None;
        }
        self.row.decide();
        self.row
    }
}

/// `|l − r| / max(|l|, |r|, scale)`, zero when all three vanish.
pub fn relative_residual(l: f64, r: f64, scale: f64) -> f64 {
    let d = l.abs().max(r.abs()).max(scale);
    if d == 0.0 {
        0.0
    } else {
        (l - r).abs() / d
    }
}

// ---------------------------------------------------------------------------
// Pointwise identities

/// Everything the pointwise rows read at one sample point.
pub struct PointSample {
    pub mean: f64,
    pub h_sq: f64,
    pub iv: InvariantVector,
    pub so: SecondOrderData,
    pub q: QCurvature,
}

impl PointSample {
    pub fn at(spec: &SurfaceSpec, p: &ChartPoint) -> Result<Self, IdentityError> {
        let j = spec.evaluate(p, 4)?;
        let (f, s) = shape_at(&j, spec.orientation())?;
        let c = curvature_at(&s, &f);
        let iv = invariants_at(&s, &c, &f);
        let so = second_order_at(&j, spec.orientation())?;
        let q = energies::q_curvature_at(spec, p)?;
        Ok(PointSample { mean: s.mean, h_sq: f.inner2(&s.h, &s.h), iv, so, q })
    }

    /// Quartic curvature scale used to normalise scalar residuals.
    fn scale(&self) -> f64 {
        self.iv.h_norm4.max(self.iv.grad_h_sq)
    }

    /// `|∇h|² − 16|∇H|² + 10H²|h|² − 52H⁴ − ¾|h₀|⁴`.
    fn eb_core(&self) -> f64 {
        let v = &self.iv;
        v.grad_h_sq - 16.0 * v.grad_mean_sq + 10.0 * v.mean2_h2 - 52.0 * v.mean4 - 0.75 * v.h0_norm4
    }

    fn quartic(&self) -> f64 {
        0.25 * self.iv.h_norm4 - self.iv.mean_tr_h3
    }

    fn ric_weyl_tail(&self, det: f64) -> f64 {
        0.5 * self.iv.weyl_sq + det * self.iv.det_h
    }
}

type PointEval = fn(&PointSample) -> f64;

fn vec_gap(a: &[f64], b: &[f64], scale: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn rel_scalar(p: &PointSample, l: f64, r: f64) -> f64 {
    relative_residual(l, r, p.scale())
}

const POINTWISE: &[(RowSpec, PointEval)] = &[
    (row("scalar_curvature_gauss", "R = 16H² − |h|²", Reading::Printed, ALGEBRAIC_TOL), |p| {
        relative_residual(p.iv.scalar_r, 16.0 * p.mean * p.mean - p.h_sq, p.scale().sqrt())
    }),
    (row("traceless_norm_expansion", "|h₀|⁴ = |h|⁴ − 8H²|h|² + 16H⁴", Reading::Printed, ALGEBRAIC_TOL), |p| {
        let v = &p.iv;
        rel_scalar(p, v.h0_norm4, v.h_norm4 - 8.0 * v.mean2_h2 + 16.0 * v.mean4)
    }),
    (row("traceless_trace_expansion", "Tr h₀⁴ = Tr h⁴ − 4H Tr h³ + 6H²|h|² − 12H⁴", Reading::Printed, ALGEBRAIC_TOL), |p| {
        let v = &p.iv;
        rel_scalar(p, v.tr_h0_4, v.tr_h4 - 4.0 * v.mean_tr_h3 + 6.0 * v.mean2_h2 - 12.0 * v.mean4)
    }),
    (row("ricci_norm_shape", "Ric² = Tr h⁴ − 8H Tr h³ + 16H²|h|²", Reading::Printed, ALGEBRAIC_TOL), |p| {
        let v = &p.iv;
        rel_scalar(p, v.ric_sq, v.tr_h4 - 8.0 * v.mean_tr_h3 + 16.0 * v.mean2_h2)
    }),
    (row("ricci_norm_traceless", "Ric² = Tr h₀⁴ − 4H Tr h³ + 10H²|h|² + 12H⁴", Reading::Printed, ALGEBRAIC_TOL), |p| {
        let v = &p.iv;
        rel_scalar(p, v.ric_sq, v.tr_h0_4 - 4.0 * v.mean_tr_h3 + 10.0 * v.mean2_h2 + 12.0 * v.mean4)
    }),
    (
        printed(
            "quartic_ricci_expansion_printed",
            "¼|h|⁴ − H Tr h³ = ¼|h₀|⁴ + 2H²|h|² − 8H⁴ + ¼Ric² − ¼Tr h₀⁴ − (5/2)H²|h|² − 3H⁴",
            "quartic_ricci_expansion_recovered",
            ALGEBRAIC_TOL,
        ),
        |p| {
            let v = &p.iv;
            let r = 0.25 * v.h0_norm4 + 2.0 * v.mean2_h2 - 8.0 * v.mean4 + 0.25 * v.ric_sq - 0.25 * v.tr_h0_4 - 2.5 * v.mean2_h2
                - 3.0 * v.mean4;
            rel_scalar(p, p.quartic(), r)
        },
    ),
    (
        row(
            "quartic_ricci_expansion_recovered",
            "¼|h|⁴ − H Tr h³ = ¼|h₀|⁴ + 2H²|h|² − 4H⁴ + ¼Ric² − ¼Tr h₀⁴ − (5/2)H²|h|² − 3H⁴",
            Reading::Reconciled,
            ALGEBRAIC_TOL,
        ),
        |p| {
            let v = &p.iv;
            let r = 0.25 * v.h0_norm4 + 2.0 * v.mean2_h2 - 4.0 * v.mean4 + 0.25 * v.ric_sq - 0.25 * v.tr_h0_4 - 2.5 * v.mean2_h2
                - 3.0 * v.mean4;
            rel_scalar(p, p.quartic(), r)
        },
    ),
    (
        row(
            "quartic_ricci_rewrite",
            "¼|h|⁴ − H Tr h³ = ¼|h₀|⁴ − ¼Tr h₀⁴ − ½H²|h|² − 7H⁴ + ¼Ric²",
            Reading::Printed,
            ALGEBRAIC_TOL,
        ),
        |p| {
            let v = &p.iv;
            rel_scalar(p, p.quartic(), 0.25 * v.h0_norm4 - 0.25 * v.tr_h0_4 - 0.5 * v.mean2_h2 - 7.0 * v.mean4 + 0.25 * v.ric_sq)
        },
    ),
    (row("scalar_square_power_form", "R² = 256H⁴ − 32H²|h|² + |h|⁴", Reading::Printed, ALGEBRAIC_TOL), |p| {
        let v = &p.iv;
        rel_scalar(p, v.scalar_r * v.scalar_r, 256.0 * v.mean4 - 32.0 * v.mean2_h2 + v.h_norm4)
    }),
    (row("scalar_square_traceless_form", "⅓R² = 80H⁴ − 8H²|h|² + ⅓|h₀|⁴", Reading::Printed, ALGEBRAIC_TOL), |p| {
        let v = &p.iv;
        rel_scalar(p, v.scalar_r * v.scalar_r / 3.0, 80.0 * v.mean4 - 8.0 * v.mean2_h2 + v.h0_norm4 / 3.0)
    }),
    (printed("ricci_weyl_printed", "Ric² = ½|W|² − 3 det_g h + ⅓R²", "ricci_weyl_recovered", ALGEBRAIC_TOL), |p| {
        rel_scalar(p, p.iv.ric_sq, p.ric_weyl_tail(-3.0) + p.iv.scalar_r.powi(2) / 3.0)
    }),
    (row("ricci_weyl_recovered", "Ric² = ½|W|² − 12 det_g h + ⅓R²", Reading::Reconciled, ALGEBRAIC_TOL), |p| {
        rel_scalar(p, p.iv.ric_sq, p.ric_weyl_tail(-12.0) + p.iv.scalar_r.powi(2) / 3.0)
    }),
    (
        printed(
            "ricci_weyl_power_form_printed",
            "Ric² = ½|W|² − 3 det_g h + ⅓(256H⁴ − 32H²|h|² + |h|⁴)",
            "ricci_weyl_power_form_recovered",
            ALGEBRAIC_TOL,
        ),
        |p| {
            let v = &p.iv;
            rel_scalar(p, v.ric_sq, p.ric_weyl_tail(-3.0) + (256.0 * v.mean4 - 32.0 * v.mean2_h2 + v.h_norm4) / 3.0)
        },
    ),
    (
        row(
            "ricci_weyl_power_form_recovered",
            "Ric² = ½|W|² − 12 det_g h + ⅓(256H⁴ − 32H²|h|² + |h|⁴)",
            Reading::Reconciled,
            ALGEBRAIC_TOL,
        ),
        |p| {
            let v = &p.iv;
            rel_scalar(p, v.ric_sq, p.ric_weyl_tail(-12.0) + (256.0 * v.mean4 - 32.0 * v.mean2_h2 + v.h_norm4) / 3.0)
        },
    ),
    (
        printed(
            "ricci_weyl_traceless_form_printed",
            "Ric² = ½|W|² − 3 det_g h + 80H⁴ − 8H²|h|² + ⅓|h₀|⁴",
            "ricci_weyl_traceless_form_recovered",
            ALGEBRAIC_TOL,
        ),
        |p| {
            let v = &p.iv;
            rel_scalar(p, v.ric_sq, p.ric_weyl_tail(-3.0) + 80.0 * v.mean4 - 8.0 * v.mean2_h2 + v.h0_norm4 / 3.0)
        },
    ),
    (
        row(
            "ricci_weyl_traceless_form_recovered",
            "Ric² = ½|W|² − 12 det_g h + 80H⁴ − 8H²|h|² + ⅓|h₀|⁴",
            Reading::Reconciled,
            ALGEBRAIC_TOL,
        ),
        |p| {
            let v = &p.iv;
            rel_scalar(p, v.ric_sq, p.ric_weyl_tail(-12.0) + 80.0 * v.mean4 - 8.0 * v.mean2_h2 + v.h0_norm4 / 3.0)
        },
    ),
    (
        printed(
            "quartic_weyl_intermediate_printed",
            "¼|h|⁴ − H Tr h³ = ⅛|W|² − ¾ det_g h + ⅓|h₀|⁴ − ¼Tr h₀⁴ − (5/2)H²|h|² + 13H⁴",
            "quartic_weyl_intermediate_recovered",
            ALGEBRAIC_TOL,
        ),
        |p| {
            let v = &p.iv;
            let r = v.weyl_sq / 8.0 - 0.75 * v.det_h + v.h0_norm4 / 3.0 - 0.25 * v.tr_h0_4 - 2.5 * v.mean2_h2 + 13.0 * v.mean4;
            rel_scalar(p, p.quartic(), r)
        },
    ),
    (
        row(
            "quartic_weyl_intermediate_recovered",
            "¼|h|⁴ − H Tr h³ = ⅛|W|² − 3 det_g h + ⅓|h₀|⁴ − ¼Tr h₀⁴ − (5/2)H²|h|² + 13H⁴",
            Reading::Reconciled,
            ALGEBRAIC_TOL,
        ),
        |p| {
            let v = &p.iv;
            let r = v.weyl_sq / 8.0 - 3.0 * v.det_h + v.h0_norm4 / 3.0 - 0.25 * v.tr_h0_4 - 2.5 * v.mean2_h2 + 13.0 * v.mean4;
            rel_scalar(p, p.quartic(), r)
        },
    ),
    (row("weyl_norm_identity", "|W|² = (7/3)|h₀|⁴ − 4 Tr h₀⁴", Reading::Printed, ALGEBRAIC_TOL), |p| {
        let v = &p.iv;
        rel_scalar(p, v.weyl_sq, 7.0 / 3.0 * v.h0_norm4 - 4.0 * v.tr_h0_4)
    }),
    (
        printed(
            "quartic_weyl_printed",
            "¼|h|⁴ − H Tr h³ = (3/16)|W|² − ¾ det_g h + (9/8)|h₀|⁴ − (5/2)H²|h|² + 13H⁴",
            "quartic_weyl_recovered",
            ALGEBRAIC_TOL,
        ),
        |p| {
            let v = &p.iv;
            let r = 3.0 / 16.0 * v.weyl_sq - 0.75 * v.det_h + 9.0 / 8.0 * v.h0_norm4 - 2.5 * v.mean2_h2 + 13.0 * v.mean4;
            rel_scalar(p, p.quartic(), r)
        },
    ),
    (
        row(
            "quartic_weyl_recovered",
            "¼|h|⁴ − H Tr h³ = (3/16)|W|² − 3 det_g h + (3/16)|h₀|⁴ − (5/2)H²|h|² + 13H⁴",
            Reading::Reconciled,
            ALGEBRAIC_TOL,
        ),
        |p| {
            let v = &p.iv;
            let r = 3.0 / 16.0 * v.weyl_sq - 3.0 * v.det_h + 3.0 / 16.0 * v.h0_norm4 - 2.5 * v.mean2_h2 + 13.0 * v.mean4;
            rel_scalar(p, p.quartic(), r)
        },
    ),
    (
        row("simons_hessian", "h^{ij}∇_{ij}H = ¼h^{ij}Δh_{ij} − H Tr h³ + ¼|h|⁴", Reading::Printed, JET_TOL),
        |p| rel_scalar(p, p.so.h_hess_mean, 0.25 * p.so.h_lap_h + p.quartic()),
    ),
    (
        row("simons_laplacian_form", "h^{ij}∇_{ij}H = ⅛Δ|h|² − ¼|∇h|² − H Tr h³ + ¼|h|⁴", Reading::Printed, JET_TOL),
        |p| rel_scalar(p, p.so.h_hess_mean, p.so.lap_h_sq / 8.0 - 0.25 * p.iv.grad_h_sq + p.quartic()),
    ),
    (
        row("codazzi_hessian", "h^{ij}∇_{ij}H = ∇_{ij}(h^{ij}H − 4H²g^{ij}) + 2ΔH² − 4|∇H|²", Reading::Printed, JET_TOL),
        |p| rel_scalar(p, p.so.h_hess_mean, p.so.div2_hh + 2.0 * p.so.lap_mean_sq - 4.0 * p.iv.grad_mean_sq),
    ),
    (
        row(
            "scalar_laplacian_identity",
            "⅛ΔR = 4|∇H|² − ¼|∇h|² − H Tr h³ + ¼|h|⁴ − ∇_{ij}(h^{ij}H − 4H²g^{ij})",
            Reading::Printed,
            JET_TOL,
        ),
        |p| {
            let r = 4.0 * p.iv.grad_mean_sq - 0.25 * p.iv.grad_h_sq + p.quartic() - p.so.div2_hh;
            rel_scalar(p, p.so.lap_r / 8.0, r)
        },
    ),
    (
        printed(
            "scalar_laplacian_weyl_printed",
            "⅙ΔR = −E_B + ½|W|² − (4/3)∇_{ij}(h^{ij}H − 4H²g^{ij}) with the printed E_B",
            "scalar_laplacian_weyl_recovered",
            JET_TOL,
        ),
        |p| {
            let r = -EnergyPreset::EBPrinted.integrand(&p.iv) + 0.5 * p.iv.weyl_sq - 4.0 / 3.0 * p.so.div2_hh;
            rel_scalar(p, p.so.lap_r / 6.0, r)
        },
    ),
    (
        row(
            "scalar_laplacian_weyl_recovered",
            "⅙ΔR = −⅓(|∇h|² − 16|∇H|² + 10H²|h|² − 52H⁴ − ¾|h₀|⁴ + 12 det_g h) + ¼|W|² − (4/3)∇_{ij}(h^{ij}H − 4H²g^{ij})",
            Reading::Reconciled,
            JET_TOL,
        ),
        |p| {
            let r = -(p.eb_core() + 12.0 * p.iv.det_h) / 3.0 + 0.25 * p.iv.weyl_sq - 4.0 / 3.0 * p.so.div2_hh;
            rel_scalar(p, p.so.lap_r / 6.0, r)
        },
    ),
    (
        printed(
            "q_expansion_printed",
            "6 det_g h − ¼|W|² − ⅙ΔR = E_B + 6 det_g h − ¾|W|² + (4/3)∇_{ij}(h^{ij}H − 4H²g^{ij}) with the printed E_B",
            "q_expansion_recovered",
            JET_TOL,
        ),
        |p| rel_scalar(p, p.q.intrinsic, p.q.printed_expansion),
    ),
    (
        row(
            "q_expansion_recovered",
            "6 det_g h − ¼|W|² − ⅙ΔR = ⅓(|∇h|² − 16|∇H|² + 10H²|h|² − 52H⁴ − ¾|h₀|⁴ + 30 det_g h) − ½|W|² + (4/3)∇_{ij}(h^{ij}H − 4H²g^{ij})",
            Reading::Reconciled,
            JET_TOL,
        ),
        |p| rel_scalar(p, p.q.intrinsic, p.q.consistent_expansion),
    ),
    (
        row(
            "mean_curvature_flux_lemma",
            "∇_j(∇^jH⃗ − 2(H²g^{jk} − Hh^{jk})∂_kΦ) = (ΔH + |h|²H − 8H³) n",
            Reading::Printed,
            JET_TOL,
        ),
        |p| vec_gap(&p.so.flux_lhs, &p.so.flux_rhs, p.so.scale),
    ),
    (
        row("einstein_normal_divergence", "∇_j(E^{ij}∂_iΦ) = E^{ij}h_{ij} n", Reading::Printed, JET_TOL),
        |p| vec_gap(&p.so.einstein_lhs, &p.so.einstein_rhs, p.so.scale),
    ),
    (row("einstein_divergence_free", "∇_jE^{ij} = 0", Reading::Printed, JET_TOL), |p| {
        p.so.einstein_div.iter().map(|x| x.abs()).fold(0.0, f64::max) / p.so.scale
    }),
];

fn random_points(spec: &SurfaceSpec, count: usize, seed: u64) -> Vec<ChartPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chart = spec.chart();
    (0..count).map(|_| chart.sample(&mut rng, 0.1)).collect()
}

fn surface_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64)
}

fn pointwise_rows(cfg: &SuiteConfig) -> Vec<IdentityRow> {
    let mut tallies: Vec<Tally> = POINTWISE.iter().map(|(s, _)| Tally::new(s, Category::Pointwise)).collect();
    for (k, spec) in cfg.surfaces.iter().enumerate() {
        let label = spec.label();
        let samples: Result<Vec<PointSample>, IdentityError> =
            random_points(spec, cfg.points, surface_seed(cfg.seed, k)).iter().map(|p| PointSample::at(spec, p)).collect();
        match samples {
            Ok(samples) => {
                for (t, (_, eval)) in tallies.iter_mut().zip(POINTWISE) {
                    let worst = samples.iter().map(eval).map(|x| if x.is_nan() { f64::INFINITY } else { x }).fold(0.0, f64::max);
                    t.surface(label.clone(), worst, None);
                    t.row.samples += samples.len();
                }
            }
            Err(e) => tallies.iter_mut().for_each(|t| t.fail(label.clone(), &e)),
        }
    }
    tallies.into_iter().map(|t| t.finish(cfg.tolerance_override)).collect()
}

// ---------------------------------------------------------------------------
// Integral identities

/// Indices into the fourteen invariant integrals.
mod ix {
    pub const GRAD_H: usize = 0;
    pub const GRAD_MEAN: usize = 1;
    pub const H_NORM4: usize = 3;
    pub const MEAN_TR_H3: usize = 4;
    pub const MEAN2_H2: usize = 5;
    pub const MEAN4: usize = 6;
    pub const DET: usize = 7;
    pub const H0_NORM4: usize = 8;
    pub const WEYL: usize = 10;
    pub const Q: usize = 13;
}

fn weights(pairs: &[(usize, f64)]) -> [f64; 14] {
    let mut w = [0.0; 14];
    for &(k, x) in pairs {
        w[k] += x;
    }
    w
}

/// `|w·I − target| / max(Σ|w_k I_k|, |target|)`.
fn linear_rel(ii: &InvariantIntegrals, w: &[f64; 14], target: f64) -> f64 {
    let spread: f64 = w.iter().zip(ii.values.iter()).filter(|(a, _)| **a != 0.0).map(|(a, b)| (a * b).abs()).sum();
    relative_residual(ii.combine(w), target, spread)
}

fn corollary_recovered_weights() -> [f64; 14] {
    weights(&[(ix::GRAD_H, 1.0), (ix::GRAD_MEAN, -16.0), (ix::H_NORM4, -1.0), (ix::MEAN_TR_H3, 4.0)])
}

fn corollary_printed_weights() -> [f64; 14] {
    weights(&[(ix::GRAD_H, 1.0), (ix::GRAD_MEAN, -16.0), (ix::MEAN_TR_H3, -1.0), (ix::H_NORM4, -0.25)])
}

/// `⅔(|∇h|² − 16|∇H|² + 10H²|h|² − 52H⁴ − ¾|h₀|⁴ + 12 det_g h) − ½|W|²`.
fn eb_consistent_weights() -> [f64; 14] {
    let s = 2.0 / 3.0;
    weights(&[
        (ix::GRAD_H, s),
        (ix::GRAD_MEAN, -16.0 * s),
        (ix::MEAN2_H2, 10.0 * s),
        (ix::MEAN4, -52.0 * s),
        (ix::H0_NORM4, -0.75 * s),
        (ix::DET, 12.0 * s),
        (ix::WEYL, -0.5),
    ])
}

fn is_sphere(spec: &SurfaceSpec) -> bool {
    matches!(spec.family, Family::Sphere { .. })
}

/// Spheres, the rotational tori and their Möbius images have `W ≡ 0`.
pub fn conformally_flat(spec: &SurfaceSpec) -> bool {
    match &spec.family {
        Family::Sphere { .. } | Family::Torus { .. } => true,
        Family::Mobius { inner, .. } => conformally_flat(inner),
        _ => false,
    }
}

fn convergence_order(fine: f64, coarse: f64) -> Option<f64> {
    if fine <= ROUNDOFF_FLOOR {
        None
    } else {
        Some((coarse.max(ROUNDOFF_FLOOR) / fine).log2())
    }
}

type IntegralEval = fn(&InvariantIntegrals, &SurfaceSpec) -> f64;

struct IntegralIdentity {
    spec: RowSpec,
    applies: fn(&SurfaceSpec) -> bool,
    eval: IntegralEval,
}

const INTEGRALS: &[IntegralIdentity] = &[
    IntegralIdentity {
        spec: row("gauss_bonnet", "6∫det_g h = 8π²χ, relative to 16π²", Reading::Printed, 1e-6),
        applies: |_| true,
        eval: |ii, s| {
            let chi = s.euler_char().unwrap_or(0) as f64;
            (6.0 * ii.values[ix::DET] - 8.0 * PI * PI * chi).abs() / (16.0 * PI * PI)
        },
    },
    IntegralIdentity {
        spec: row(
            "corollary_integral_recovered",
            "∫(|∇h|² − 16|∇H|²) = ∫(|h|⁴ − 4H Tr h³)",
            Reading::Reconciled,
            1e-6,
        ),
        applies: |_| true,
        eval: |ii, _| linear_rel(ii, &corollary_recovered_weights(), 0.0),
    },
    IntegralIdentity {
        spec: printed(
            "corollary_integral_printed",
            "∫(|∇h|² − 16|∇H|²) = ∫(H Tr h³ + ¼|h|⁴)",
            "corollary_integral_recovered",
            1e-6,
        ),
        applies: |_| true,
        eval: |ii, _| linear_rel(ii, &corollary_printed_weights(), 0.0),
    },
    IntegralIdentity {
        spec: row(
            "weyl_energy_vanishes_conformally_flat",
            "½∫|W|² = 0 on conformally flat surfaces, absolute",
            Reading::Derived,
            1e-8,
        ),
        applies: conformally_flat,
        eval: |ii, _| (0.5 * ii.values[ix::WEYL]).abs(),
    },
    IntegralIdentity {
        spec: row(
            "eb_consistent_integral",
            "⅔∫(|∇h|² − 16|∇H|² + 10H²|h|² − 52H⁴ − ¾|h₀|⁴ + 12 det_g h) = ½∫|W|²",
            Reading::Reconciled,
            1e-6,
        ),
        applies: |_| true,
        eval: |ii, _| linear_rel(ii, &eb_consistent_weights(), 0.0),
    },
    IntegralIdentity {
        spec: row("eb_printed_sphere_value", "∫E_B (printed integrand) = −8π² on round spheres, absolute", Reading::Derived, 1e-5),
        applies: is_sphere,
        eval: |ii, _| (ii.combine(&EnergyPreset::EBPrinted.weights()) + 8.0 * PI * PI).abs(),
    },
    IntegralIdentity {
        spec: printed(
            "eb_printed_sphere_vanishes",
            "∫E_B = ½∫|W|² = 0 on round spheres with the printed E_B integrand",
            "eb_consistent_integral",
            1e-6,
        ),
        applies: is_sphere,
        eval: |ii, _| linear_rel(ii, &EnergyPreset::EBPrinted.weights(), 0.0),
    },
];

const SPHERE_RADII: [f64; 3] = [0.5, 1.0, 2.0];

const CLOSED_FORMS: &[(RowSpec, EnergyPreset, f64)] = &[
    (row("sphere_energy_c_closed_form", "E_C(sphere(ρ)) = 96π²", Reading::Derived, 1e-6), EnergyPreset::EC, 96.0),
    (row("sphere_energy_a_closed_form", "E_A(sphere(ρ)) = −88π²/3", Reading::Derived, 1e-6), EnergyPreset::EA, -88.0 / 3.0),
];

const WEYL_POSITIVE: RowSpec = row(
    "weyl_energy_positive",
    "½∫|W|² > 0 off the conformally flat class; residual is error estimate over value",
    Reading::Printed,
    1e-2,
);

const Q_TOTAL: RowSpec = row("q_curvature_total", "∫Q = 8π²χ on round spheres, relative to 16π²", Reading::Printed, 1e-6);

/// Inversion about `(0,0,0,0,6)` followed by dilation by 1.7.
pub fn reference_transform() -> MobiusTransform {
    MobiusTransform::new(vec![Generator::Inversion([0.0, 0.0, 0.0, 0.0, 6.0]), Generator::Dilation(1.7)]).expect("valid generators")
}

fn conformal_presets() -> [(RowSpec, EnergyPreset); 5] {
    [
        (
            printed("conformal_invariance_ea", "E_A is invariant under Möbius transformations", "conformal_invariance_ea_recovered", 1e-4),
            EnergyPreset::EA,
        ),
        (
            row("conformal_invariance_ea_recovered", "E_A with +7H⁴ is invariant under Möbius transformations", Reading::Reconciled, 1e-4),
            EnergyPreset::EARecovered,
        ),
        (row("conformal_invariance_ec", "E_C is invariant under Möbius transformations", Reading::Printed, 1e-4), EnergyPreset::EC),
        (
            row("conformal_invariance_e100", "E_{1,0,0} is invariant under Möbius transformations", Reading::Printed, 1e-4),
            EnergyPreset::EMuLamSig(1.0, 0.0, 0.0),
        ),
        (
            row("conformal_invariance_e010", "E_{0,1,0} is invariant under Möbius transformations", Reading::Printed, 1e-4),
            EnergyPreset::EMuLamSig(0.0, 1.0, 0.0),
        ),
    ]
}

type Pair = (InvariantIntegrals, InvariantIntegrals);

/// Two-grid sweeps shared between rows, keyed by surface label.
#[derive(Default)]
struct SweepCache {
    plain: BTreeMap<(String, usize), Result<Pair, String>>,
}

impl SweepCache {
    fn get(&mut self, spec: &SurfaceSpec, n: usize) -> Result<Pair, String> {
        self.plain
            .entry((spec.label(), n))
            .or_insert_with(|| two_grid(spec, n, false).map_err(|e| e.to_string()))
            .clone()
    }
}

fn integral_rows(cfg: &SuiteConfig) -> Vec<IdentityRow> {
    let n = cfg.grid;
    let mut cache = SweepCache::default();
    let closed: Vec<&SurfaceSpec> = cfg.surfaces.iter().filter(|s| s.is_closed()).collect();
    let mut rows = Vec::new();
    let start = |spec: &RowSpec| {
        let mut t = Tally::new(spec, Category::Integral);
        t.row.grid = Some(n);
        t.row.requires_convergence = true;
        t
    };

    for id in INTEGRALS {
        let mut t = start(&id.spec);
        for s in closed.iter().filter(|s| (id.applies)(s)) {
            match cache.get(s, n) {
                Ok((fine, coarse)) => {
                    let (rf, rc) = ((id.eval)(&fine, s), (id.eval)(&coarse, s));
                    t.surface(s.label(), rf, convergence_order(rf, rc));
                }
                Err(e) => t.fail(s.label(), e),
            }
        }
        rows.push(t.finish(cfg.tolerance_override));
    }

    for (spec, preset, multiple) in CLOSED_FORMS {
        let mut t = start(spec);
        let target = multiple * PI * PI;
        for rho in SPHERE_RADII {
            let s = SurfaceSpec::sphere(rho).expect("positive radius");
            match cache.get(&s, n) {
                Ok((fine, coarse)) => {
                    let r = |ii: &InvariantIntegrals| relative_residual(ii.combine(&preset.weights()), target, target.abs());
                    let (rf, rc) = (r(&fine), r(&coarse));
                    t.surface(s.label(), rf, convergence_order(rf, rc));
                }
                Err(e) => t.fail(s.label(), e),
            }
        }
        rows.push(t.finish(cfg.tolerance_override));
    }

    let mut t = Tally::new(&WEYL_POSITIVE, Category::Integral);
    t.row.grid = Some(n);
    for s in closed.iter().filter(|s| !conformally_flat(s)) {
        match cache.get(s, n) {
            Ok((fine, coarse)) => {
                let (vf, vc) = (0.5 * fine.values[ix::WEYL], 0.5 * coarse.values[ix::WEYL]);
                let err = (vf - vc).abs().max(f64::EPSILON * vf.abs());
                t.surface(s.label(), if vf > 0.0 { err / vf } else { f64::INFINITY }, None);
            }
            Err(e) => t.fail(s.label(), e),
        }
    }
    rows.push(t.finish(cfg.tolerance_override));

    let presets = conformal_presets();
    let mut tallies: Vec<Tally> = presets.iter().map(|(s, _)| start(s)).collect();
    let transform = reference_transform();
    for s in closed.iter().filter(|s| !is_sphere(s)) {
        let image = mobius_apply(&transform, s).map_err(|e| e.to_string());
        let sweeps = image.and_then(|im| Ok((cache.get(s, n)?, cache.get(&im, n)?)));
        match sweeps {
            Ok((orig, img)) => {
                for (t, (_, preset)) in tallies.iter_mut().zip(&presets) {
                    let w = preset.weights();
                    let dev = |a: &InvariantIntegrals, b: &InvariantIntegrals| {
                        let spread: f64 = w.iter().zip(a.values.iter()).map(|(x, y)| (x * y).abs()).sum();
                        relative_residual(a.combine(&w), b.combine(&w), spread)
                    };
                    let (rf, rc) = (dev(&orig.0, &img.0), dev(&orig.1, &img.1));
                    t.surface(s.label(), rf, convergence_order(rf, rc));
                }
            }
            Err(e) => tallies.iter_mut().for_each(|t| t.fail(s.label(), &e)),
        }
    }
    rows.extend(tallies.into_iter().map(|t| {
        let mut r = t.finish(cfg.tolerance_override);
        r.note = Some(format!("transform {}", reference_transform_label()));
        r
    }));

    let mut t = start(&Q_TOTAL);
    for s in closed.iter().filter(|s| is_sphere(s)) {
        match two_grid(s, n, true) {
            Ok((fine, coarse)) => {
                let r = |ii: &InvariantIntegrals| (ii.values[ix::Q] - 16.0 * PI * PI).abs() / (16.0 * PI * PI);
                let (rf, rc) = (r(&fine), r(&coarse));
                t.surface(s.label(), rf, convergence_order(rf, rc));
            }
            Err(e) => t.fail(s.label(), e),
        }
    }
    rows.push(t.finish(cfg.tolerance_override));
    rows
}

fn reference_transform_label() -> String {
    reference_transform().generators.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(" then ")
}

// ---------------------------------------------------------------------------
// Noether rows

const TABLE_ROWS: &[(RowSpec, LagrangianSpec)] = &[
    (
        row("noether_table_grad_mean_sq", "T and 𝓕 of |∇H|² equal their tabulated closed forms", Reading::Printed, ALGEBRAIC_TOL),
        LagrangianSpec::GradMeanSq,
    ),
    (
        row("noether_table_mean2_h2", "T and 𝓕 of H²|h|² equal their tabulated closed forms", Reading::Printed, ALGEBRAIC_TOL),
        LagrangianSpec::Mean2H2,
    ),
    (
        row("noether_table_mean4", "T and 𝓕 of H⁴ equal their tabulated closed forms", Reading::Printed, ALGEBRAIC_TOL),
        LagrangianSpec::Mean4,
    ),
    (
        row("noether_table_tr_h0_4", "T and 𝓕 of Tr h₀⁴ equal their tabulated closed forms", Reading::Printed, ALGEBRAIC_TOL),
        LagrangianSpec::TrH04,
    ),
    (
        row("noether_table_h0_norm4", "T and 𝓕 of |h₀|⁴ equal their tabulated closed forms", Reading::Printed, ALGEBRAIC_TOL),
        LagrangianSpec::H0Norm4,
    ),
];

const DET_ZERO: RowSpec = row(
    "noether_det_zero_fields",
    "for det_g h the stress T and the divergence ∇_b𝓕^{ab} vanish identically",
    Reading::Printed,
    ALGEBRAIC_TOL,
);

const TRACE_ROWS: &[(RowSpec, LagrangianSpec)] = &[
    (row("noether_trace_grad_h_sq", "Tr T and Tr 𝓕 of |∇h|² equal their closed forms", Reading::Printed, JET_TOL), LagrangianSpec::GradHSq),
    (row("noether_trace_grad_mean_sq", "Tr T and Tr 𝓕 of |∇H|² equal their closed forms", Reading::Printed, JET_TOL), LagrangianSpec::GradMeanSq),
    (row("noether_trace_mean2_h2", "Tr T and Tr 𝓕 of H²|h|² equal their closed forms", Reading::Printed, JET_TOL), LagrangianSpec::Mean2H2),
    (row("noether_trace_mean4", "Tr T and Tr 𝓕 of H⁴ equal their closed forms", Reading::Printed, JET_TOL), LagrangianSpec::Mean4),
    (row("noether_trace_tr_h0_4", "Tr T and Tr 𝓕 of Tr h₀⁴ equal their closed forms", Reading::Printed, JET_TOL), LagrangianSpec::TrH04),
    (row("noether_trace_h0_norm4", "Tr T and Tr 𝓕 of |h₀|⁴ equal their closed forms", Reading::Printed, JET_TOL), LagrangianSpec::H0Norm4),
    (row("noether_trace_det", "Tr T and Tr 𝓕 of det_g h equal their closed forms", Reading::Derived, JET_TOL), LagrangianSpec::DetH),
];

const VARIATIONAL: RowSpec = row(
    "noether_variational_consistency",
    "d/dt E[Φ + tφe] = ∫⟨∇_aV⃗^a, e⟩φ for the current with +(∇_b𝓕^{ab})n",
    Reading::Reconciled,
    1e-5,
);

const VARIATIONAL_PRINTED: RowSpec = printed(
    "noether_current_printed_sign",
    "d/dt E[Φ + tφe] = ∫⟨∇_aV⃗^a, e⟩φ for the current with −(∇_b𝓕^{ab})n as printed",
    "noether_variational_consistency",
    1e-5,
);

pub const VARIATIONAL_LAGRANGIANS: [LagrangianSpec; 3] = [LagrangianSpec::Mean4, LagrangianSpec::TrH04, LagrangianSpec::GradMeanSq];

/// Jet order of Φ for the field rows; enough for the first-order Lagrangians.
const FIELD_ORDER: usize = 5;

fn noether_rows(cfg: &SuiteConfig) -> Vec<IdentityRow> {
    let mut table: Vec<Tally> = TABLE_ROWS.iter().map(|(s, _)| Tally::new(s, Category::Noether)).collect();
    let mut traces: Vec<Tally> = TRACE_ROWS.iter().map(|(s, _)| Tally::new(s, Category::Noether)).collect();
    let mut zero = Tally::new(&DET_ZERO, Category::Noether);
    for (k, spec) in cfg.surfaces.iter().enumerate() {
        let label = spec.label();
        let points = random_points(spec, cfg.noether_points, surface_seed(cfg.seed, 1000 + k));
        let mut worst_table = vec![0.0f64; TABLE_ROWS.len()];
        let mut worst_trace = vec![0.0f64; TRACE_ROWS.len()];
        let mut worst_zero = 0.0f64;
        let result: Result<(), IdentityError> = points.iter().try_for_each(|p| {
            let geo = noether::point_geometry(spec, p, FIELD_ORDER)?;
            for (w, (_, l)) in worst_table.iter_mut().zip(TABLE_ROWS) {
                let fields = noether::muller_fields(l, &geo)?;
                *w = w.max(noether::table_residual(l, &geo, &fields).unwrap_or(f64::INFINITY));
            }
            for (w, (_, l)) in worst_trace.iter_mut().zip(TRACE_ROWS) {
                let fields = noether::muller_fields(l, &geo)?;
                let r = noether::trace_checks(l, &geo, &fields);
                *w = w.max(r.t_residual().max(r.f_residual()));
            }
            let fields = noether::muller_fields(&LagrangianSpec::DetH, &geo)?;
            let q = geo.trace(&geo.matmul(&geo.h, &geo.h)).value();
            let z = fields.t.max_abs_value().max(fields.div_f.max_abs_value());
            worst_zero = worst_zero.max(z / (q * q).max(1.0));
            Ok(())
        });
        let n = points.len();
        match result {
            Ok(()) => {
                for (t, w) in table.iter_mut().zip(&worst_table) {
                    t.surface(label.clone(), *w, None);
                    t.row.samples += n;
                }
                for (t, w) in traces.iter_mut().zip(&worst_trace) {
                    t.surface(label.clone(), *w, None);
                    t.row.samples += n;
                }
                zero.surface(label.clone(), worst_zero, None);
                zero.row.samples += n;
            }
            Err(e) => {
                table.iter_mut().chain(traces.iter_mut()).chain(std::iter::once(&mut zero)).for_each(|t| t.fail(label.clone(), &e))
            }
        }
    }
    let mut rows: Vec<IdentityRow> = table.into_iter().chain(std::iter::once(zero)).chain(traces).map(|t| t.finish(cfg.tolerance_override)).collect();
    if cfg.variational {
        rows.extend(variational_rows(cfg));
    }
    rows
}

fn unit(a: usize) -> [f64; 5] {
    std::array::from_fn(|b| if a == b { 1.0 } else { 0.0 })
}

/// Three Lagrangians × five ambient directions against a bump on torus(2,1).
fn variational_rows(cfg: &SuiteConfig) -> Vec<IdentityRow> {
    let mut t = Tally::new(&VARIATIONAL, Category::Noether);
    let mut tp = Tally::new(&VARIATIONAL_PRINTED, Category::Noether);
    let spec = SurfaceSpec::torus(2.0, 1.0).expect("valid radii");
    let bump = noether::Bump::new([0.7, 1.2, 1.9, 0.4], [0.3; 4]);
    let dirs: Vec<[f64; 5]> = (0..5).map(unit).collect();
    match noether::variational_batch(&spec, &cfg.lagrangians, &bump, &dirs, &noether::DEFAULT_STEPS, 8) {
        Ok(res) => {
            let all = res.iter().flatten();
            let dev = all.clone().map(|r| r.deviation).fold(0.0, f64::max);
            let dev_p = all.clone().map(|r| relative_residual(r.fd_derivative, r.current_integral_printed, r.scale)).fold(0.0, f64::max);
            let count = all.count();
            t.surface(spec.label(), dev, None);
            tp.surface(spec.label(), dev_p, None);
            t.row.samples = count;
            tp.row.samples = count;
        }
        Err(e) => {
            t.fail(spec.label(), &e);
            tp.fail(spec.label(), &e);
        }
    }
    let names = cfg.lagrangians.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ");
    [t, tp]
        .into_iter()
        .map(|t| {
            let mut r = t.finish(cfg.tolerance_override);
            r.note = Some(format!("Lagrangians {names}; five coordinate directions"));
            r
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Exterior rows

const EXTERIOR_ROWS: &[(&str, RowSpec)] = &[
    (
        "mean_curvature_flux",
        row(
            "exterior_mean_curvature_flux",
            "df⌐̇dΦ + nΔH = (h^{ij}∇_iH − 4H∇^jH)∇_jΦ for f = ∇^iH⃗∧∇_iΦ",
            Reading::Reconciled,
            JET_TOL,
        ),
    ),
    ("interior_wedge_adjoint", row("exterior_interior_wedge_adjoint", "⟨A⌐B, C⟩ = ⟨A, B∧C⟩", Reading::Derived, EXTERIOR_TOL)),
    ("hodge_double_star", row("exterior_hodge_double_star", "★★ = (−1)^{p(4−p)} on parameter p-forms", Reading::Derived, EXTERIOR_TOL)),
    ("hodge_isometry", row("exterior_hodge_isometry", "⟨★A, ★B⟩ = ⟨A, B⟩", Reading::Derived, EXTERIOR_TOL)),
    ("contraction_first", row("exterior_contraction_first", "η⌐̇(L⌐̂dΦ) = L⌐̇dΦ", Reading::Printed, EXTERIOR_TOL)),
    (
        "contraction_second_printed",
        printed(
            "exterior_contraction_second_printed",
            "L⌐̂dΦ = ⅙η⌐•C + ½(★D)⌐•η − ⅙η⌐A − ½(★B)⌐η as stated",
            "exterior_contraction_second_recovered",
            EXTERIOR_TOL,
        ),
    ),
    (
        "contraction_second_proof",
        printed(
            "exterior_contraction_second_proof",
            "L⌐̂dΦ = −⅓η⌐•C + (★D)⌐•η − η⌐A − (★B)⌐η as at the end of the proof",
            "exterior_contraction_second_recovered",
            EXTERIOR_TOL,
        ),
    ),
    (
        "contraction_second_recovered",
        row(
            "exterior_contraction_second_recovered",
            "L⌐̂dΦ = ⅓η⌐•C + ⅔(★D)⌐•η + ⅓η⌐A − ⅔(★B)⌐η",
            Reading::Reconciled,
            EXTERIOR_TOL,
        ),
    ),
    (
        "antisymmetric_pairing",
        row("exterior_antisymmetric_pairing", "(L^{ab}·∇_bΦ)∇_aΦ + (L^{ab}·∇_aΦ)∇_bΦ = 0 for antisymmetric L", Reading::Printed, EXTERIOR_TOL),
    ),
    ("frame_bullet", row("exterior_frame_bullet", "η^{jk}•(n∧∇_iΦ) = −g_i^k n∧∇^jΦ + g_i^j n∧∇^kΦ", Reading::Printed, EXTERIOR_TOL)),
    ("eta_normal_contraction", row("exterior_eta_normal_contraction", "η⌐(n∧dΦ) = −3 n∧dΦ", Reading::Printed, EXTERIOR_TOL)),
    (
        "traceless_h0_contraction",
        row("exterior_traceless_h0_contraction", "contraction lemma for traceless h₀", Reading::Printed, EXTERIOR_TOL),
    ),
    (
        "traceless_h0_cubed_contraction",
        row("exterior_traceless_h0_cubed_contraction", "contraction lemma for h₀³ with traceless h₀", Reading::Printed, EXTERIOR_TOL),
    ),
    ("normal_bullet_metric", row("exterior_normal_bullet_metric", "(n∧∇_iΦ)•∇_jΦ = −g_{ij} n", Reading::Printed, EXTERIOR_TOL)),
    ("traceless_h0_bullet", row("exterior_traceless_h0_bullet", "bullet identity for traceless h₀", Reading::Printed, EXTERIOR_TOL)),
    (
        "traceless_h0_cubed_bullet",
        row("exterior_traceless_h0_cubed_bullet", "bullet identity for h₀³ with traceless h₀", Reading::Printed, EXTERIOR_TOL),
    ),
    ("p_operator_round_trip", row("exterior_p_operator_round_trip", "𝓟⁻¹(𝓟(ℓ)) = ℓ", Reading::Printed, EXTERIOR_TOL)),
];

fn exterior_rows(cfg: &SuiteConfig) -> Vec<IdentityRow> {
    let mut tallies: Vec<Tally> = EXTERIOR_ROWS.iter().map(|(_, s)| Tally::new(s, Category::Exterior)).collect();
    let mut sigma_min = f64::INFINITY;
    let mut fitted: Vec<[f64; 4]> = Vec::new();
    for (k, spec) in cfg.surfaces.iter().enumerate() {
        let label = spec.label();
        match exterior::exterior_suite(spec, cfg.noether_points, cfg.exterior_samples, surface_seed(cfg.seed, 2000 + k)) {
            Ok(suite) => {
                sigma_min = sigma_min.min(suite.sigma_min);
                fitted.push(suite.fitted_id2);
                for (t, (check, _)) in tallies.iter_mut().zip(EXTERIOR_ROWS) {
                    match suite.get(check) {
                        Some(c) => {
                            t.surface(label.clone(), c.max_residual, None);
                            t.row.samples += c.count;
                        }
                        None => t.fail(label.clone(), "check missing from the exterior suite"),
                    }
                }
            }
            Err(e) => tallies.iter_mut().for_each(|t| t.fail(label.clone(), &e)),
        }
    }
    let mut rows: Vec<IdentityRow> = tallies.into_iter().map(|t| t.finish(cfg.tolerance_override)).collect();
    for r in &mut rows {
        match r.id.as_str() {
            "exterior_contraction_second_recovered" if !fitted.is_empty() => {
                let mut mean = [0.0; 4];
                for f in &fitted {
                    for (m, x) in mean.iter_mut().zip(f) {
                        *m += x / fitted.len() as f64;
                    }
                }
                r.recovered = Some(mean.to_vec());
                r.note = Some("recovered: least-squares coefficients averaged over samples".to_string());
            }
            "exterior_p_operator_round_trip" if sigma_min.is_finite() => {
                r.note = Some(format!("smallest singular value of 𝓟 over sampled frames {sigma_min:.6}"));
            }
            _ => {}
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// Suite

/// Every row id `run_suite` emits for the given groups, in report order.
pub fn row_catalogue(categories: &[Category], variational: bool) -> Vec<&'static str> {
    let mut ids = Vec::new();
    for c in Category::ALL.into_iter().filter(|c| categories.contains(c)) {
        match c {
            Category::Pointwise => ids.extend(POINTWISE.iter().map(|(s, _)| s.id)),
            Category::Integral => {
                ids.extend(INTEGRALS.iter().map(|i| i.spec.id));
                ids.extend(CLOSED_FORMS.iter().map(|(s, _, _)| s.id));
                ids.push(WEYL_POSITIVE.id);
                ids.extend(conformal_presets().iter().map(|(s, _)| s.id));
                ids.push(Q_TOTAL.id);
            }
            Category::Noether => {
                ids.extend(TABLE_ROWS.iter().map(|(s, _)| s.id));
                ids.push(DET_ZERO.id);
                ids.extend(TRACE_ROWS.iter().map(|(s, _)| s.id));
                if variational {
                    ids.extend([VARIATIONAL.id, VARIATIONAL_PRINTED.id]);
                }
            }
            Category::Exterior => ids.extend(EXTERIOR_ROWS.iter().map(|(_, s)| s.id)),
            Category::Discovery => ids.extend(DISCOVERY_ROWS.iter().map(|s| s.id)),
        }
    }
    ids
}

pub fn run_suite(cfg: &SuiteConfig) -> VerificationReport {
    let mut rows = Vec::new();
    for c in Category::ALL.into_iter().filter(|c| cfg.categories.contains(c)) {
        rows.extend(match c {
            Category::Pointwise => pointwise_rows(cfg),
            Category::Integral => integral_rows(cfg),
            Category::Noether => noether_rows(cfg),
            Category::Exterior => exterior_rows(cfg),
            Category::Discovery => discovery_rows(cfg),
        });
    }
    let passed = rows.iter().filter(|r| r.verdict == Verdict::Pass).count();
    let categories = Category::ALL.into_iter().filter(|c| cfg.categories.contains(c)).collect();
    let meta = ReportMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        grid: cfg.grid,
        points: cfg.points,
        surfaces: cfg.surfaces.iter().map(|s| s.label()).collect(),
        categories,
        variational: cfg.variational,
        tolerance_override: cfg.tolerance_override,
        passed,
        discrepancies: rows.len() - passed,
    };
    VerificationReport { meta, rows }
}

// ---------------------------------------------------------------------------
// Basis integrals

pub const BASIS_DIM: usize = 12;

/// Columns of the discovery matrix; the last is `8π²χ`, scaled so that
/// every known identity has rational coefficients.
pub const BASIS_NAMES: [&str; BASIS_DIM] =
    ["|∇h|²", "|∇H|²", "Tr h⁴", "|h|⁴", "H Tr h³", "H²|h|²", "H⁴", "det_g h", "|h₀|⁴", "Tr h₀⁴", "|W|²", "8π²χ"];

pub const CHI_COLUMN: usize = 11;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisIntegralVector {
    pub surface: String,
    pub shape: String,
    pub euler_char: i32,
    pub grid: usize,
    pub values: [f64; BASIS_DIM],
    /// Two-grid estimates, floored at a small positive multiple of the
    /// largest entry.
    pub errors: [f64; BASIS_DIM],
}

fn shape_kind(spec: &SurfaceSpec) -> &'static str {
    match spec.family {
        Family::Sphere { .. } => "sphere",
        Family::Ellipsoid { .. } => "ellipsoid",
        Family::Torus { .. } => "torus",
        Family::Graph(_) => "graph",
        Family::Mobius { .. } => "mobius",
    }
}

pub fn basis_integrals(spec: &SurfaceSpec, n: usize) -> Result<BasisIntegralVector, IdentityError> {
    let chi = match (spec.is_closed(), spec.euler_char()) {
        (true, Some(chi)) => chi,
        _ => return Err(IdentityError::OpenPatch(spec.label())),
    };
    let (fine, coarse) = two_grid(spec, n, false)?;
    let mut values = [0.0; BASIS_DIM];
    values[..11].copy_from_slice(&fine.values[..11]);
    values[CHI_COLUMN] = 8.0 * PI * PI * chi as f64;
    let floor = 1e-15 * values.iter().fold(8.0 * PI * PI, |a, x| a.max(x.abs()));
    let mut errors = [floor; BASIS_DIM];
    for k in 0..11 {
        errors[k] = (fine.values[k] - coarse.values[k]).abs().max(floor);
    }
    Ok(BasisIntegralVector { surface: spec.label(), shape: shape_kind(spec).to_string(), euler_char: chi, grid: n, values, errors })
}

// ---------------------------------------------------------------------------
// Rational reconstruction

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: i64,
    pub den: i64,
}

impl Rational {
    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

pub const MAX_DENOMINATOR: i64 = 64;

/// Last continued-fraction convergent of `x` with denominator `≤ max_den`.
pub fn rationalize(x: f64, max_den: i64) -> Rational {
    if !x.is_finite() || x.abs() > 1e15 {
        return Rational { num: x.round() as i64, den: 1 };
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut y = x;
    for _ in 0..64 {
        let a = y.floor();
        let (h2, k2) = (a as i64 * h1 + h0, a as i64 * k1 + k0);
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = y - a;
        if frac.abs() < 1e-12 || (x - h1 as f64 / k1 as f64).abs() <= 1e-12 * x.abs().max(1.0) {
            break;
        }
        y = 1.0 / frac;
    }
    if k1 == 0 {
        return Rational { num: x.round() as i64, den: 1 };
    }
    Rational { num: h1, den: k1 }
}

// ---------------------------------------------------------------------------
// Discovery

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub singular_values: Vec<f64>,
    pub null_dim: usize,
    /// Smallest retained over largest discarded singular value.
    pub gap: f64,
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "nullspace dimension {} with spectral gap {:.3e}; singular values {:?}", self.null_dim, self.gap, self.singular_values)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveredIdentity {
    /// Floating coefficients, pivot normalised to one.
    pub coefficients: Vec<f64>,
    pub rational: Vec<Rational>,
    pub pivot: usize,
    pub rational_error: f64,
    /// Worst `|r·b| / Σ|r_k b_k|` over the family.
    pub fit_residual: f64,
    pub held_out_residual: Option<f64>,
    /// Ten times the propagated quadrature error on the held-out surfaces,
    /// in the same relative units.
    pub held_out_budget: Option<f64>,
}

impl DiscoveredIdentity {
    pub fn rational_values(&self) -> [f64; BASIS_DIM] {
        std::array::from_fn(|k| self.rational[k].value())
    }

    /// `a·X + b·Y + … = 0` with the basis names.
    pub fn equation(&self) -> String {
        let mut s = String::new();
        for (r, name) in self.rational.iter().zip(BASIS_NAMES) {
            if r.num == 0 {
                continue;
            }
            let mag = Rational { num: r.num.abs(), den: r.den };
            let sign = if r.num < 0 { " − " } else if s.is_empty() { "" } else { " + " };
            let sign = if s.is_empty() && r.num < 0 { "−" } else { sign };
            if mag.num == 1 && mag.den == 1 {
                s += &format!("{sign}{name}");
            } else {
                s += &format!("{sign}{mag} {name}");
            }
        }
        s + " = 0"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub family: Vec<BasisIntegralVector>,
    pub held_out: Vec<BasisIntegralVector>,
    /// Singular values of the column-normalised matrix, descending.
    pub singular_values: Vec<f64>,
    pub column_norms: Vec<f64>,
    pub null_dim: usize,
    /// Orthonormal nullspace basis in normalised coordinates.
    pub null_basis: Vec<[f64; BASIS_DIM]>,
    /// Reduced row echelon basis of the nullspace.
    pub identities: Vec<DiscoveredIdentity>,
}

/// Null singular values satisfy `σ ≤ NULL_TOL·σ_max`.
pub const NULL_TOL: f64 = 1e-6;

/// Minimum ratio between the smallest retained and the largest discarded
/// singular value.
pub const MIN_GAP: f64 = 1e3;

/// Pivot preference for the echelon basis: one identity per derivative,
/// topological, determinant and Weyl-type column.
pub const PIVOT_ORDER: [usize; BASIS_DIM] = [0, 11, 2, 8, 9, 10, 1, 3, 4, 5, 6, 7];

pub const MIN_FAMILY: usize = 2 * BASIS_DIM;

/// Fractions of the row maximum, in normalised coordinates, below which
/// echelon entries are tried as noise.
pub const SPARSE_LADDER: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

fn check_family(family: &[BasisIntegralVector]) -> Result<(), IdentityError> {
    if family.len() < MIN_FAMILY {
        return Err(IdentityError::FamilyTooSmall { got: family.len(), needed: MIN_FAMILY });
    }
    let mut shapes: Vec<&str> = family.iter().map(|b| b.shape.as_str()).collect();
    shapes.sort_unstable();
    shapes.dedup();
    let mut topologies: Vec<i32> = family.iter().map(|b| b.euler_char).collect();
    topologies.sort_unstable();
    topologies.dedup();
    if shapes.len() < 3 || topologies.len() < 2 {
        return Err(IdentityError::FamilyTooNarrow { shapes: shapes.len(), topologies: topologies.len() });
    }
    Ok(())
}

/// `(|r·b| / D, 10 Σ|r_k| e_k / D)` with `D = max(Σ|r_k b_k|, 8π² max|r_k|)`, so
/// identities whose terms all vanish on a surface are not judged on roundoff.
pub fn identity_residual(r: &[f64; BASIS_DIM], b: &BasisIntegralVector) -> (f64, f64) {
    let num: f64 = r.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let unit = 8.0 * PI * PI * r.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let den: f64 = r.iter().zip(&b.values).map(|(x, y)| (x * y).abs()).sum::<f64>().max(unit);
    let err: f64 = r.iter().zip(&b.errors).map(|(x, e)| x.abs() * e).sum();
    if den == 0.0 {
        (0.0, 0.0)
    } else {
        (num.abs() / den, 10.0 * err / den)
    }
}

fn sorted_svd(m: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let cols = m.ncols();
    let rows = m.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(&m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let mut idx: Vec<usize> = (0..cols).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = idx.iter().map(|&k| svd.singular_values[k]).collect();
    let vecs = idx.iter().map(|&k| vt.row(k).iter().copied().collect()).collect();
    (sv, vecs)
}

impl Discovery {
    fn from_normalised(&self, y: &[f64; BASIS_DIM], pivot: usize) -> DiscoveredIdentity {
        let mut x: [f64; BASIS_DIM] = std::array::from_fn(|k| y[k] / self.column_norms[k]);
        let p = x[pivot];
        x.iter_mut().for_each(|v| *v /= p);
        let big = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for v in x.iter_mut() {
            if v.abs() < 1e-9 * big {
                *v = 0.0;
            }
        }
        let rational: Vec<Rational> = x.iter().map(|&v| rationalize(v, MAX_DENOMINATOR)).collect();
        let rational_error = x.iter().zip(&rational).map(|(v, r)| (v - r.value()).abs() / v.abs().max(1.0)).fold(0.0, f64::max);
        let rv: [f64; BASIS_DIM] = std::array::from_fn(|k| rational[k].value());
        let fit_residual = self.family.iter().map(|b| identity_residual(&rv, b).0).fold(0.0, f64::max);
        let held: Vec<(f64, f64)> = self.held_out.iter().map(|b| identity_residual(&rv, b)).collect();
        let (held_out_residual, held_out_budget) = if held.is_empty() {
            (None, None)
        } else {
            (Some(held.iter().map(|h| h.0).fold(0.0, f64::max)), Some(held.iter().map(|h| h.1).fold(0.0, f64::max)))
        };
        DiscoveredIdentity { coefficients: x.to_vec(), rational, pivot, rational_error, fit_residual, held_out_residual, held_out_budget }
    }

    /// Worst family residual of a vector in normalised coordinates.
    fn fit(&self, y: &[f64; BASIS_DIM]) -> f64 {
        let x: [f64; BASIS_DIM] = std::array::from_fn(|k| y[k] / self.column_norms[k]);
        self.family.iter().map(|b| identity_residual(&x, b).0).fold(0.0, f64::max)
    }

    fn normalised(&self, v: &[f64; BASIS_DIM]) -> [f64; BASIS_DIM] {
        std::array::from_fn(|k| v[k] * self.column_norms[k])
    }

    /// Relative distance of `v` (raw coefficients) from the nullspace.
    pub fn contains(&self, v: &[f64; BASIS_DIM]) -> f64 {
        let y = self.normalised(v);
        let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let mut rest = y;
        for b in &self.null_basis {
            let c: f64 = b.iter().zip(&y).map(|(p, q)| p * q).sum();
            rest.iter_mut().zip(b).for_each(|(r, p)| *r -= c * p);
        }
        rest.iter().map(|a| a * a).sum::<f64>().sqrt() / norm
    }

    /// The nullspace vector vanishing off `support`, normalised on
    /// `support[0]`; `None` when no such vector exists.
    pub fn restrict(&self, support: &[usize]) -> Option<DiscoveredIdentity> {
        let y = self.restricted(support)?;
        (y[support[0]].abs() >= 1e-8).then(|| self.from_normalised(&y, support[0]))
    }

    /// Maximum of `|c_k − v_k| / max(|v_k|, 1)` between the restriction to
    /// the support of `v` and `v` itself, both normalised on the first
    /// support column in `order`.
    pub fn deviation(&self, v: &[f64; BASIS_DIM], order: &[usize]) -> Option<f64> {
        let c = self.restrict(order)?;
        let p = v[order[0]];
        Some((0..BASIS_DIM).map(|k| (c.coefficients[k] - v[k] / p).abs() / (v[k] / p).abs().max(1.0)).fold(0.0, f64::max))
    }

    fn restricted(&self, support: &[usize]) -> Option<[f64; BASIS_DIM]> {
        let k = self.null_basis.len();
        if k == 0 || support.is_empty() {
            return None;
        }
        let off: Vec<usize> = (0..BASIS_DIM).filter(|j| !support.contains(j)).collect();
        let m = DMatrix::from_fn(off.len(), k, |r, c| self.null_basis[c][off[r]]);
        let (sv, vecs) = sorted_svd(m);
        if *sv.last().expect("k ≥ 1") > NULL_TOL.sqrt() {
            return None;
        }
        let c = vecs.last().expect("k ≥ 1");
        let mut y: [f64; BASIS_DIM] = std::array::from_fn(|j| self.null_basis.iter().zip(c).map(|(b, w)| w * b[j]).sum());
        for j in off {
            y[j] = 0.0;
        }
        Some(y)
    }
}

pub fn discover_from_basis(family: &[BasisIntegralVector], held_out: &[BasisIntegralVector]) -> Result<Discovery, IdentityError> {
    check_family(family)?;
    let column_norms: Vec<f64> = (0..BASIS_DIM)
        .map(|j| {
            let n = family.iter().map(|b| b.values[j].powi(2)).sum::<f64>().sqrt();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let a = DMatrix::from_fn(family.len(), BASIS_DIM, |i, j| family[i].values[j] / column_norms[j]);
    let (sv, vecs) = sorted_svd(a);
    let smax = sv[0];
    let null_dim = sv.iter().filter(|&&s| s <= NULL_TOL * smax).count();
    let rank = BASIS_DIM - null_dim;
    let gap = if null_dim == 0 || rank == 0 { f64::INFINITY } else { sv[rank - 1] / sv[rank].max(f64::MIN_POSITIVE) };
    if gap < MIN_GAP {
        return Err(IdentityError::IllConditioned(ConditionReport { singular_values: sv, null_dim, gap }));
    }
    let null_basis: Vec<[f64; BASIS_DIM]> = vecs[rank..].iter().map(|v| std::array::from_fn(|j| v[j])).collect();

    let mut d = Discovery {
        family: family.to_vec(),
        held_out: held_out.to_vec(),
        singular_values: sv,
        column_norms,
        null_dim,
        null_basis: null_basis.clone(),
        identities: Vec::new(),
    };

    // echelon form in normalised coordinates
    let mut rows = null_basis;
    let mut pivots = Vec::new();
    for &col in &PIVOT_ORDER {
        let cur = pivots.len();
        if cur == rows.len() {
            break;
        }
        let best = (cur..rows.len()).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs())).expect("non-empty range");
        if rows[best][col].abs() < 1e-8 {
            continue;
        }
        rows.swap(cur, best);
        let p = rows[cur][col];
        rows[cur].iter_mut().for_each(|v| *v /= p);
        let pivot_row = rows[cur];
        for (r, other) in rows.iter_mut().enumerate() {
            if r != cur {
                let f = other[col];
                other.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
        pivots.push(col);
    }
    // Quadrature noise leaks into free columns along weakly determined
    // directions; re-solve each row on its dominant support and keep the
    // sparsest candidate that fits the family as well as the dense row.
    for (y, &p) in rows.iter_mut().zip(&pivots) {
        let dense = d.fit(y);
        let big = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for tau in SPARSE_LADDER {
            let support: Vec<usize> = (0..BASIS_DIM).filter(|&k| y[k].abs() > tau * big).collect();
            if support.len() == BASIS_DIM || !support.contains(&p) {
                continue;
            }
            if let Some(z) = d.restricted(&support) {
                if z[p].abs() >= 1e-8 && d.fit(&z) <= 10.0 * dense.max(1e-14) {
                    *y = z.map(|v| v / z[p]);
                }
            }
        }
    }
    d.identities = rows.iter().zip(&pivots).map(|(y, &p)| d.from_normalised(y, p)).collect();
    Ok(d)
}

pub fn discover_identities(family: &[SurfaceSpec], held_out: &[SurfaceSpec], n: usize) -> Result<Discovery, IdentityError> {
    let fam = family.iter().map(|s| basis_integrals(s, n)).collect::<Result<Vec<_>, _>>()?;
    let held = held_out.iter().map(|s| basis_integrals(s, n)).collect::<Result<Vec<_>, _>>()?;
    discover_from_basis(&fam, &held)
}

/// `6 det_g h − 8π²χ`.
pub fn gauss_bonnet_vector() -> [f64; BASIS_DIM] {
    let mut v = [0.0; BASIS_DIM];
    v[7] = 6.0;
    v[CHI_COLUMN] = -1.0;
    v
}

/// Support of the derivative identity: `|∇h|², |∇H|², H Tr h³, |h|⁴`.
pub const COROLLARY_SUPPORT: [usize; 4] = [0, 1, 4, 3];

/// `|∇h|² − 16|∇H|² + 4H Tr h³ − |h|⁴`.
pub fn corollary_recovered_vector() -> [f64; BASIS_DIM] {
    let mut v = [0.0; BASIS_DIM];
    v[..5].copy_from_slice(&[1.0, -16.0, 0.0, -1.0, 4.0]);
    v
}

/// `|∇h|² − 16|∇H|² − H Tr h³ − ¼|h|⁴` as printed.
pub fn corollary_printed_vector() -> [f64; BASIS_DIM] {
    let mut v = [0.0; BASIS_DIM];
    v[..5].copy_from_slice(&[1.0, -16.0, 0.0, -0.25, -1.0]);
    v
}

// ---------------------------------------------------------------------------
// E_B reconciliation

/// Printed `(s, c₁, c₂, c₃, c₄)` in
/// `E_B = s(|∇h|² − 16|∇H|² + c₁H²|h|² + c₂H⁴ + c₃|h₀|⁴ + c₄ det_g h)`.
pub const EB_PRINTED: [f64; 5] = [1.0 / 3.0, 10.0, -52.0, -4.5, 3.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EbReconciliation {
    pub prefactor: f64,
    pub coefficients: [f64; 4],
    pub rational: Vec<Rational>,
    pub singular_values: Vec<f64>,
    /// Worst relative gap between `∫E_B` and `½∫|W|²` over the family.
    pub fit_residual: f64,
    /// Same gap for the rational coefficients on the held-out surfaces.
    pub held_out_residual: Option<f64>,
    /// Largest `|∫E_B − ½∫|W|²|` over round spheres of the family, with
    /// the rational coefficients.
    pub sphere_value: Option<f64>,
    pub printed_residual: f64,
    pub printed_sphere_value: Option<f64>,
}

fn eb_columns(b: &BasisIntegralVector) -> ([f64; 5], f64) {
    let v = &b.values;
    ([v[0] - 16.0 * v[1], v[5], v[6], v[8], v[7]], 0.5 * v[10])
}

/// Gap for the parametrisation `y = (s, s·c₁, …, s·c₄)`.
fn eb_gap(y: &[f64; 5], b: &BasisIntegralVector) -> (f64, f64) {
    let (a, t) = eb_columns(b);
    let lhs: f64 = a.iter().zip(y).map(|(p, q)| p * q).sum();
    let spread: f64 = a.iter().zip(y).map(|(p, q)| (p * q).abs()).sum::<f64>() + t.abs();
    (relative_residual(lhs, t, spread), lhs - t)
}

fn eb_y(s: f64, c: &[f64]) -> [f64; 5] {
    [s, s * c[0], s * c[1], s * c[2], s * c[3]]
}

pub fn eb_from_basis(family: &[BasisIntegralVector], held_out: &[BasisIntegralVector]) -> Result<EbReconciliation, IdentityError> {
    check_family(family)?;
    let cols: Vec<([f64; 5], f64)> = family.iter().map(eb_columns).collect();
    let norms: [f64; 5] = std::array::from_fn(|j| cols.iter().map(|(a, _)| a[j] * a[j]).sum::<f64>().sqrt().max(f64::MIN_POSITIVE));
    let a = DMatrix::from_fn(family.len(), 5, |i, j| cols[i].0[j] / norms[j]);
    let t = nalgebra::DVector::from_iterator(family.len(), cols.iter().map(|c| c.1));
    let svd = a.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[4] <= 1e-8 * sv[0] {
        return Err(IdentityError::RankDeficient(sv));
    }
    let z = svd.solve(&t, 0.0).map_err(|_| IdentityError::RankDeficient(sv.clone()))?;
    let y: [f64; 5] = std::array::from_fn(|j| z[j] / norms[j]);
    let prefactor = y[0];
    let coefficients: [f64; 4] = std::array::from_fn(|k| y[k + 1] / prefactor);
    let rational: Vec<Rational> = std::iter::once(prefactor).chain(coefficients).map(|v| rationalize(v, MAX_DENOMINATOR)).collect();
    let q: Vec<f64> = rational.iter().map(Rational::value).collect();
    let exact = eb_y(q[0], &q[1..]);
    let worst = |y: &[f64; 5], set: &[BasisIntegralVector]| set.iter().map(|b| eb_gap(y, b).0).fold(0.0, f64::max);
    let sphere = |y: &[f64; 5]| {
        family.iter().filter(|b| b.shape == "sphere").map(|b| eb_gap(y, b).1.abs()).reduce(f64::max)
    };
    let printed = eb_y(EB_PRINTED[0], &EB_PRINTED[1..]);
    Ok(EbReconciliation {
        prefactor,
        coefficients,
        rational,
        singular_values: sv,
        fit_residual: worst(&y, family),
        held_out_residual: (!held_out.is_empty()).then(|| worst(&exact, held_out)),
        sphere_value: sphere(&exact),
        printed_residual: worst(&printed, family),
        printed_sphere_value: family.iter().find(|b| b.shape == "sphere").map(|b| eb_gap(&printed, b).1),
    })
}

pub fn eb_reconciliation(family: &[SurfaceSpec], held_out: &[SurfaceSpec], n: usize) -> Result<EbReconciliation, IdentityError> {
    let fam = family.iter().map(|s| basis_integrals(s, n)).collect::<Result<Vec<_>, _>>()?;
    let held = held_out.iter().map(|s| basis_integrals(s, n)).collect::<Result<Vec<_>, _>>()?;
    eb_from_basis(&fam, &held)
}

// ---------------------------------------------------------------------------
// Default family

fn family_axes(k: usize) -> [f64; 5] {
    std::array::from_fn(|i| 1.0 + 0.2 * (1.7 * k as f64 + 2.3 * i as f64).sin())
}

fn image(spec: SurfaceSpec, gens: Vec<Generator>) -> SurfaceSpec {
    let t = MobiusTransform::new(gens).expect("valid generators");
    mobius_apply(&t, &spec).expect("admissible transform")
}

/// Four spheres, twelve ellipsoids, ten tori and four Möbius images.
pub fn default_family() -> Vec<SurfaceSpec> {
    let mut f: Vec<SurfaceSpec> = [0.5, 1.0, 1.5, 2.0].iter().map(|&r| SurfaceSpec::sphere(r).expect("radius")).collect();
    f.push(SurfaceSpec::ellipsoid(GENERIC_AXES).expect("axes"));
    f.extend((1..12).map(|k| SurfaceSpec::ellipsoid(family_axes(k)).expect("axes")));
    f.extend([1.6, 1.8, 2.0, 2.3, 2.6, 3.0, 3.5, 4.0, 5.0, 6.0].iter().map(|&r| SurfaceSpec::torus(r, 1.0).expect("radii")));
    f.push(image(SurfaceSpec::ellipsoid(GENERIC_AXES).expect("axes"), vec![Generator::Inversion([0.0, 0.0, 0.0, 0.0, 3.0])]));
    f.push(image(
        SurfaceSpec::ellipsoid(family_axes(3)).expect("axes"),
        vec![Generator::Inversion([0.0, 0.0, 0.0, 2.5, 0.0]), Generator::Dilation(0.8)],
    ));
    f.push(image(SurfaceSpec::torus(2.0, 1.0).expect("radii"), vec![Generator::Inversion([0.0, 0.0, 0.0, 0.0, 4.0])]));
    f.push(image(SurfaceSpec::torus(3.0, 1.0).expect("radii"), vec![Generator::Inversion([0.0, 0.0, 0.0, 0.5, 3.0])]));
    f
}

/// Surfaces outside [`default_family`] used to re-verify recovered identities.
pub fn default_held_out() -> Vec<SurfaceSpec> {
    vec![
        SurfaceSpec::ellipsoid([1.15, 0.85, 1.05, 0.95, 1.2]).expect("axes"),
        image(SurfaceSpec::torus(2.5, 1.0).expect("radii"), vec![Generator::Inversion([0.0, 0.0, 0.0, 0.0, 4.5]), Generator::Dilation(1.3)]),
    ]
}

// ---------------------------------------------------------------------------
// Discovery rows

const DISCOVERY_ROWS: [RowSpec; 10] = [
    row("discovery_gauss_bonnet", "the nullspace vector on {det_g h, 8π²χ} is 6 det_g h − 8π²χ", Reading::Printed, 1e-5),
    row(
        "discovery_corollary_leading",
        "the nullspace vector on {|∇h|², |∇H|², H Tr h³, |h|⁴} has the printed (1, −16) on (|∇h|², |∇H|²)",
        Reading::Printed,
        1e-5,
    ),
    printed(
        "discovery_corollary_remaining",
        "the same vector has the printed (−1, −¼) on (H Tr h³, |h|⁴)",
        "discovery_corollary_recovered",
        1e-6,
    ),
    row("discovery_corollary_recovered", "the same vector is |∇h|² − 16|∇H|² + 4H Tr h³ − |h|⁴", Reading::Reconciled, 1e-4),
    row("discovery_rational_basis", "echelon nullspace basis has rational coefficients with denominators ≤ 64", Reading::Derived, 1e-4),
    row("discovery_held_out", "recovered identities hold on held-out surfaces", Reading::Derived, 1e-4),
    row(
        "eb_reconciliation_fit",
        "∫s(|∇h|² − 16|∇H|² + c₁H²|h|² + c₂H⁴ + c₃|h₀|⁴ + c₄ det_g h) = ½∫|W|² across the family",
        Reading::Reconciled,
        1e-5,
    ),
    printed(
        "eb_reconciliation_printed",
        "the printed (s, c) = (⅓; 10, −52, −9/2, 3) satisfies ∫E_B = ½∫|W|² across the family",
        "eb_reconciliation_fit",
        1e-6,
    ),
    row("eb_reconciliation_sphere", "the rational E_B integrates to zero on round spheres, absolute", Reading::Reconciled, 1e-9),
    row("eb_reconciliation_held_out", "the rational E_B satisfies ∫E_B = ½∫|W|² on held-out surfaces", Reading::Reconciled, 1e-4),
];

fn discovery_rows(cfg: &SuiteConfig) -> Vec<IdentityRow> {
    let n = cfg.grid;
    let mut t: Vec<Tally> = DISCOVERY_ROWS.iter().map(|s| Tally::new(s, Category::Discovery)).collect();
    for x in t.iter_mut() {
        x.row.grid = Some(n);
    }
    let family = default_family();
    let held = default_held_out();
    let basis = |set: &[SurfaceSpec]| set.iter().map(|s| basis_integrals(s, n)).collect::<Result<Vec<_>, _>>();
    let all = basis(&family).and_then(|f| Ok((f, basis(&held)?)));
    let label = format!("family of {} (+{} held out)", family.len(), held.len());
    let (fam, hold) = match all {
        Ok(v) => v,
        Err(e) => {
            t.iter_mut().for_each(|x| x.fail(label.clone(), &e));
            return t.into_iter().map(|x| x.finish(cfg.tolerance_override)).collect();
        }
    };
    t.iter_mut().for_each(|x| x.row.samples = fam.len());

    match discover_from_basis(&fam, &hold) {
        Ok(d) => {
            let gb = gauss_bonnet_vector();
            match d.deviation(&gb, &[7, CHI_COLUMN]) {
                Some(v) => t[0].surface(label.clone(), v, None),
                None => t[0].fail(label.clone(), "no nullspace vector on {det_g h, 8π²χ}"),
            }
            t[0].row.recovered = d.restrict(&[CHI_COLUMN, 7]).map(|c| c.rational_values().iter().map(|v| -v).collect());
            t[0].row.note = Some(format!("nullspace dimension {}, distance of the vector from the nullspace {:.3e}", d.null_dim, d.contains(&gb)));
            match d.restrict(&COROLLARY_SUPPORT) {
                Some(c) => {
                    let pv = corollary_printed_vector();
                    let lead = (c.coefficients[0] - pv[0]).abs().max((c.coefficients[1] - pv[1]).abs() / 16.0);
                    let rest = (c.coefficients[4] - pv[4]).abs().max((c.coefficients[3] - pv[3]).abs());
                    t[1].surface(label.clone(), lead, None);
                    t[2].surface(label.clone(), rest, None);
                    let rec = c.rational_values().to_vec();
                    t[1].row.recovered = Some(rec.clone());
                    t[2].row.recovered = Some(rec.clone());
                    t[3].row.recovered = Some(rec);
                    t[2].row.note = Some(format!("recovered {}", c.equation()));
                }
                None => {
                    for x in &mut t[1..3] {
                        x.fail(label.clone(), "no nullspace vector on the derivative support");
                    }
                }
            }
            match d.deviation(&corollary_recovered_vector(), &COROLLARY_SUPPORT) {
                Some(v) => t[3].surface(label.clone(), v, None),
                None => t[3].fail(label.clone(), "no nullspace vector on the derivative support"),
            }
            let rat = d.identities.iter().map(|i| i.rational_error).fold(0.0, f64::max);
            t[4].surface(label.clone(), rat, None);
            t[4].row.note = Some(d.identities.iter().map(|i| i.equation()).collect::<Vec<_>>().join("; "));
            let mut ids: Vec<&DiscoveredIdentity> = d.identities.iter().collect();
            let cor = d.restrict(&COROLLARY_SUPPORT);
            ids.extend(cor.as_ref());
            let held_res = ids.iter().filter_map(|i| i.held_out_residual).fold(0.0, f64::max);
            let budget = ids.iter().filter_map(|i| i.held_out_budget).fold(0.0, f64::max);
            t[5].surface(hold.iter().map(|b| b.surface.clone()).collect::<Vec<_>>().join(", "), held_res, None);
            t[5].row.note = Some(format!("quadrature budget {budget:.3e}"));
        }
        Err(e) => t[..6].iter_mut().for_each(|x| x.fail(label.clone(), &e)),
    }

    match eb_from_basis(&fam, &hold) {
        Ok(r) => {
            let rec: Vec<f64> = std::iter::once(r.prefactor).chain(r.coefficients).collect();
            t[6].surface(label.clone(), r.fit_residual, None);
            t[6].row.recovered = Some(rec);
            t[6].row.note = Some(format!("s = {}, c = ({})", r.rational[0], r.rational[1..].iter().map(|q| q.to_string()).collect::<Vec<_>>().join(", ")));
            t[7].surface(label.clone(), r.printed_residual, None);
            t[7].row.recovered = Some(EB_PRINTED.to_vec());
            if let Some(v) = r.printed_sphere_value {
                t[7].row.note = Some(format!("printed ∫E_B − ½∫|W|² on a round sphere {v:.9}"));
            }
            match r.sphere_value {
                Some(v) => t[8].surface(label.clone(), v, None),
                None => t[8].fail(label.clone(), "no round sphere in the family"),
            }
            match r.held_out_residual {
                Some(v) => t[9].surface(hold.iter().map(|b| b.surface.clone()).collect::<Vec<_>>().join(", "), v, None),
                None => t[9].fail(label.clone(), "no held-out surfaces"),
            }
        }
        Err(e) => t[6..].iter_mut().for_each(|x| x.fail(label.clone(), &e)),
    }
    t.into_iter().map(|x| x.finish(cfg.tolerance_override)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::Rng;

    fn q(num: i64, den: i64) -> Rational {
        Rational { num, den }
    }

    #[test]
    fn rationalize_recovers_small_denominators() {
        for (x, r) in [(0.75, q(3, 4)), (-52.0, q(-52, 1)), (7.0 / 3.0, q(7, 3)), (1.0 / 64.0, q(1, 64)), (0.0, q(0, 1)), (-4.5, q(-9, 2))] {
            assert_eq!(rationalize(x, MAX_DENOMINATOR), r, "{x}");
        }
        let pi = rationalize(PI, MAX_DENOMINATOR);
        assert_eq!(pi, q(22, 7));
        assert!(rationalize(1.0 / 65.0, MAX_DENOMINATOR).den <= MAX_DENOMINATOR);
        assert_eq!(q(-3, 4).to_string(), "-3/4");
        assert_eq!(q(12, 1).to_string(), "12");
    }

    #[test]
    fn relative_residual_scales() {
        assert_eq!(relative_residual(0.0, 0.0, 0.0), 0.0);
        assert!((relative_residual(1.0, 1.1, 0.0) - 0.1 / 1.1).abs() < 1e-15);
        assert!((relative_residual(1e-9, 0.0, 1.0) - 1e-9).abs() < 1e-20);
    }

    #[test]
    fn sphere_basis_is_scale_free() {
        let unit = 8.0 * PI * PI / 3.0;
        let expected = [0.0, 0.0, 4.0, 16.0, 4.0, 4.0, 1.0, 1.0, 0.0, 0.0, 0.0, 6.0].map(|v| v * unit);
        for rho in [0.7, 1.9] {
            let b = basis_integrals(&SurfaceSpec::sphere(rho).unwrap(), 8).unwrap();
            assert_eq!(b.euler_char, 2);
            assert_eq!(b.shape, "sphere");
            for k in 0..BASIS_DIM {
                assert!((b.values[k] - expected[k]).abs() < 1e-7 * 16.0 * unit, "ρ={rho} column {}", BASIS_NAMES[k]);
            }
        }
    }

    #[test]
    fn torus_basis_has_no_weyl_or_determinant() {
        let b = basis_integrals(&SurfaceSpec::torus(2.0, 1.0).unwrap(), 8).unwrap();
        let big = b.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert_eq!(b.euler_char, 0);
        assert!(b.values[10].abs() < 1e-10 * big);
        assert!(b.values[7].abs() < 1e-10 * big);
        assert_eq!(b.values[CHI_COLUMN], 0.0);
    }

    #[test]
    fn open_patch_is_rejected() {
        let e = basis_integrals(&SurfaceSpec::graph(0.1).unwrap(), 4).unwrap_err();
        assert!(matches!(e, IdentityError::OpenPatch(_)));
    }

    const SHAPES: [&str; 3] = ["sphere", "ellipsoid", "torus"];

    fn vector(b: [f64; BASIS_DIM], k: usize) -> BasisIntegralVector {
        BasisIntegralVector {
            surface: format!("synthetic({k})"),
            shape: SHAPES[k % 3].to_string(),
            euler_char: if k.is_multiple_of(2) { 2 } else { 0 },
            grid: 0,
            values: b,
            errors: b.map(|v| 1e-13 * v.abs().max(1.0)),
        }
    }

    /// Random rows orthogonal to each of `nulls`.
    fn synthetic(count: usize, nulls: &[[f64; BASIS_DIM]], seed: u64) -> Vec<BasisIntegralVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ortho: Vec<[f64; BASIS_DIM]> = Vec::new();
        for v in nulls {
            let mut u = *v;
            for o in &ortho {
                let c: f64 = u.iter().zip(o).map(|(a, b)| a * b).sum();
                u.iter_mut().zip(o).for_each(|(a, b)| *a -= c * b);
            }
            let n = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            ortho.push(u.map(|a| a / n));
        }
        (0..count)
            .map(|k| {
                let mut b: [f64; BASIS_DIM] = std::array::from_fn(|_| rng.gen_range(1.0..10.0));
                for o in &ortho {
                    let c: f64 = b.iter().zip(o).map(|(a, x)| a * x).sum();
                    b.iter_mut().zip(o).for_each(|(a, x)| *a -= c * x);
                }
                vector(b, k)
            })
            .collect()
    }

    fn known() -> [[f64; BASIS_DIM]; 2] {
        [gauss_bonnet_vector(), corollary_recovered_vector()]
    }

    #[test]
    fn discovery_recovers_planted_identities() {
        let fam = synthetic(30, &known(), 3);
        let held = synthetic(2, &known(), 4);
        let d = discover_from_basis(&fam, &held).unwrap();
        assert_eq!(d.null_dim, 2);
        assert!(d.deviation(&gauss_bonnet_vector(), &[7, CHI_COLUMN]).unwrap() < 1e-10);
        assert!(d.deviation(&corollary_recovered_vector(), &COROLLARY_SUPPORT).unwrap() < 1e-10);
        let c = d.restrict(&COROLLARY_SUPPORT).unwrap();
        assert_eq!(c.rational_values(), corollary_recovered_vector());
        assert!(d.contains(&corollary_printed_vector()) > 1e-2);
        for id in &d.identities {
            assert!(id.rational_error < 1e-9, "{}", id.equation());
            assert!(id.held_out_residual.unwrap() < 1e-12);
        }
        assert!(d.restrict(&[2, 3]).is_none());
    }

    #[test]
    fn discovery_ignores_duplicates_and_row_scaling() {
        let fam = synthetic(30, &known(), 5);
        let base = discover_from_basis(&fam, &[]).unwrap();
        let mut dup = fam.clone();
        dup.extend(fam[..6].iter().cloned());
        let mut scaled = fam.clone();
        scaled[4].values.iter_mut().for_each(|v| *v *= 7.5);
        for other in [dup, scaled] {
            let d = discover_from_basis(&other, &[]).unwrap();
            assert_eq!(d.null_dim, base.null_dim);
            let a: Vec<Vec<Rational>> = base.identities.iter().map(|i| i.rational.clone()).collect();
            let b: Vec<Vec<Rational>> = d.identities.iter().map(|i| i.rational.clone()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn discovery_sparsifies_noisy_echelon_rows() {
        // One weakly sampled direction in the complement and small noise
        // along the planted identities tilt the dense echelon rows.
        let nulls = known();
        let fam0 = synthetic(30, &nulls, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut weak = [0.0; BASIS_DIM];
        weak[5] = 1.0;
        weak[6] = -1.0;
        let mut fam = fam0.clone();
        for b in fam.iter_mut() {
            let c: f64 = b.values.iter().zip(&weak).map(|(x, w)| x * w).sum::<f64>() / 2.0;
            let t = 1e-3 * rng.gen_range(-1.0..1.0);
            for k in 0..BASIS_DIM {
                b.values[k] += (t - c) * weak[k];
            }
            for v in &nulls {
                let e = 1e-9 * rng.gen_range(-1.0..1.0);
                b.values.iter_mut().zip(v).for_each(|(x, w)| *x += e * w);
            }
        }
        let d = discover_from_basis(&fam, &[]).unwrap();
        assert_eq!(d.null_dim, 2);
        let cor = d.identities.iter().find(|i| i.pivot == 0).unwrap();
        assert_eq!(cor.rational_values(), corollary_recovered_vector());
        assert!(cor.rational_error < 1e-6);
        let gb = d.identities.iter().find(|i| i.pivot == CHI_COLUMN).unwrap();
        assert_eq!(gb.rational_values().map(|v| -v), gauss_bonnet_vector());
    }

    #[test]
    fn family_preconditions() {
        let fam = synthetic(10, &known(), 7);
        assert!(matches!(discover_from_basis(&fam, &[]), Err(IdentityError::FamilyTooSmall { got: 10, .. })));
        let mut narrow = synthetic(30, &known(), 7);
        narrow.iter_mut().for_each(|b| b.shape = "sphere".into());
        assert!(matches!(discover_from_basis(&narrow, &[]), Err(IdentityError::FamilyTooNarrow { shapes: 1, .. })));
        narrow.iter_mut().enumerate().for_each(|(k, b)| {
            b.shape = SHAPES[k % 3].into();
            b.euler_char = 2;
        });
        assert!(matches!(discover_from_basis(&narrow, &[]), Err(IdentityError::FamilyTooNarrow { topologies: 1, .. })));
    }

    #[test]
    fn weak_gap_is_ill_conditioned() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = DMatrix::from_fn(30, BASIS_DIM, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let v = DMatrix::from_fn(BASIS_DIM, BASIS_DIM, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let mut sv = vec![1.0; BASIS_DIM];
        sv[10] = 2e-6;
        sv[11] = 5e-7;
        let a = &u * DMatrix::from_diagonal(&DVector::from_vec(sv)) * v.transpose();
        let fam: Vec<BasisIntegralVector> = (0..30).map(|i| vector(std::array::from_fn(|j| a[(i, j)]), i)).collect();
        match discover_from_basis(&fam, &[]) {
            Err(IdentityError::IllConditioned(r)) => {
                assert_eq!(r.null_dim, 1);
                assert!(r.gap < MIN_GAP);
            }
            other => panic!("expected ill-conditioned, got {other:?}"),
        }
    }

    #[test]
    fn eb_fit_recovers_planted_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let planted = [2.0 / 3.0, 10.0, -52.0, -0.75, 12.0];
        let fam: Vec<BasisIntegralVector> = (0..30)
            .map(|k| {
                let mut b: [f64; BASIS_DIM] = std::array::from_fn(|_| rng.gen_range(1.0..10.0));
                let (a, _) = eb_columns(&b_vec(b));
                let y = eb_y(planted[0], &planted[1..]);
                b[10] = 2.0 * a.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>();
                vector(b, k)
            })
            .collect();
        let r = eb_from_basis(&fam, &fam[..2]).unwrap();
        assert_eq!(r.rational, vec![q(2, 3), q(10, 1), q(-52, 1), q(-3, 4), q(12, 1)]);
        assert!(r.fit_residual < 1e-12);
        assert!(r.held_out_residual.unwrap() < 1e-12);
        assert!(r.printed_residual > 1e-2);
    }

    fn b_vec(b: [f64; BASIS_DIM]) -> BasisIntegralVector {
        vector(b, 0)
    }

    fn tiny(surfaces: Vec<SurfaceSpec>, seed: u64) -> SuiteConfig {
        SuiteConfig { surfaces, grid: 4, points: 3, noether_points: 1, exterior_samples: 3, seed, ..SuiteConfig::default() }
    }

    #[test]
    fn report_covers_catalogue_in_order() {
        let r = run_suite(&tiny(vec![SurfaceSpec::sphere(1.0).unwrap()], 1));
        let ids: Vec<&str> = r.rows.iter().map(|x| x.id.as_str()).collect();
        assert_eq!(ids, row_catalogue(&Category::ALL[..4], false));
        assert_eq!(r.meta.passed + r.meta.discrepancies, r.rows.len());
        // the sphere is conformally flat, so the positivity row has nothing to test
        let w = r.get("weyl_energy_positive").unwrap();
        assert_eq!(w.verdict, Verdict::Discrepancy);
        assert!(w.error.as_deref().unwrap().contains("no applicable surface"));
        for row in &r.rows {
            if let Some(c) = &row.companion {
                assert_eq!(row.reading, Reading::Printed);
                assert!(ids.contains(&c.as_str()), "{} → {c}", row.id);
            }
        }
    }

    #[test]
    fn suite_is_deterministic_and_override_applies() {
        let cfg = tiny(vec![SurfaceSpec::ellipsoid(GENERIC_AXES).unwrap()], 5);
        let a = run_suite(&cfg);
        assert_eq!(a, run_suite(&cfg));
        let o = run_suite(&SuiteConfig { tolerance_override: Some(0.1), ..cfg });
        for (x, y) in a.rows.iter().zip(&o.rows) {
            assert_eq!(y.tolerance, 0.1);
            assert_eq!(x.residual, y.residual);
            if y.residual.is_some_and(|r| r > 0.1) {
                assert_eq!(y.verdict, Verdict::Discrepancy, "{}", y.id);
            }
        }
    }

    #[test]
    fn decide_requires_convergence() {
        let spec = row("t", "t", Reading::Derived, 1e-6);
        let mut t = Tally::new(&spec, Category::Integral);
        t.row.requires_convergence = true;
        t.surface("a".into(), 1e-8, Some(1.0));
        assert_eq!(t.finish(None).verdict, Verdict::Discrepancy);
        let mut t = Tally::new(&spec, Category::Integral);
        t.row.requires_convergence = true;
        t.surface("a".into(), 1e-8, Some(4.0));
        t.surface("b".into(), 1e-14, None);
        assert_eq!(t.finish(None).verdict, Verdict::Pass);
        let mut t = Tally::new(&spec, Category::Integral);
        t.surface("a".into(), f64::NAN, None);
        let r = t.finish(None);
        assert_eq!(r.verdict, Verdict::Discrepancy);
        assert!(r.error.is_some());
    }

    #[test]
    fn convergence_order_uses_roundoff_floor() {
        assert_eq!(convergence_order(1e-14, 1e-15), None);
        assert!((convergence_order(1e-6, 1e-4).unwrap() - 100f64.log2()).abs() < 1e-12);
    }
}
