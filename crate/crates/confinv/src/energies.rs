//! Energy integrands, quadrature over closed surfaces, coefficient reduction,
//! Q-curvature and Gauss–Bonnet.

use crate::catalog::{mobius_apply, CatalogError, MobiusTransform, ProductRule, SurfaceSpec};
use crate::shape::{densities_at, invariants_at, curvature_at, second_order_at, shape_at, InvariantVector, ShapeError};
use nalgebra::{Matrix5, Vector5};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("{0} is an open patch; integrals need a closed surface")]
    OpenPatch(String),
    #[error("unknown energy preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Coefficients of |∇h|², |∇H|², Tr h⁴, |h|⁴, H Tr h³, H²|h|², H⁴.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CoefficientVector {
    pub a: [f64; 7],
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ReducedCoefficients {
    pub alpha: f64,
    pub mu: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ReducedCoefficients {
    /// Weights on the invariant vector of the reduced integrand.
    pub fn weights(&self) -> [f64; 14] {
        let mut w = [0.0; 14];
        w[1] = self.alpha;
        w[8] = self.mu;
        w[9] = self.lambda;
        w[7] = self.sigma;
        w[5] = self.beta;
        w[6] = self.gamma;
        w
    }
}

/// Quartic invariants in power sums of the shape operator eigenvalues,
/// coordinates `(p₁⁴, p₁²p₂, p₁p₃, p₂², p₄)`.
fn power_sum_coords(kind: usize) -> [f64; 5] {
    match kind {
        // Tr h⁴
        0 => [0.0, 0.0, 0.0, 0.0, 1.0],
        // |h|⁴
        1 => [0.0, 0.0, 0.0, 1.0, 0.0],
        // H Tr h³ with H = p₁/4
        2 => [0.0, 0.0, 0.25, 0.0, 0.0],
        // H²|h|²
        3 => [0.0, 1.0 / 16.0, 0.0, 0.0, 0.0],
        // H⁴
        4 => [1.0 / 256.0, 0.0, 0.0, 0.0, 0.0],
        // det = e₄
        5 => [1.0 / 24.0, -0.25, 1.0 / 3.0, 0.125, -0.25],
        // |h₀|⁴ = |h|⁴ − 8H²|h|² + 16H⁴
        6 => [1.0 / 16.0, -0.5, 0.0, 1.0, 0.0],
        // Tr h₀⁴ = Tr h⁴ − 4H Tr h³ + 6H²|h|² − 12H⁴
        7 => [-12.0 / 256.0, 6.0 / 16.0, -1.0, 0.0, 1.0],
        _ => unreachable!(),
    }
}

/// Rewrite the seven-term integrand as α|∇H|² + μ|h₀|⁴ + λTr h₀⁴ + σ det h + βH²|h|² + γH⁴,
/// modulo divergences, using ∫|∇h|² = ∫(16|∇H|² + |h|⁴ − 4H Tr h³).
pub fn reduce_coefficients(c: &CoefficientVector) -> ReducedCoefficients {
    let a = c.a;
    let quartic = [a[2], a[3] + a[0], a[4] - 4.0 * a[0], a[5], a[6]];
    let mut target = Vector5::zeros();
    for (k, q) in quartic.iter().enumerate() {
        target += Vector5::from(power_sum_coords(k)) * *q;
    }
    // Columns: |h₀|⁴, Tr h₀⁴, det, H²|h|², H⁴.
    let basis = Matrix5::from_columns(&[
        Vector5::from(power_sum_coords(6)),
        Vector5::from(power_sum_coords(7)),
        Vector5::from(power_sum_coords(5)),
        Vector5::from(power_sum_coords(3)),
        Vector5::from(power_sum_coords(4)),
    ]);
    let x = basis.lu().solve(&target).expect("quartic basis is invertible");
    ReducedCoefficients { alpha: 16.0 * a[0] + a[1], mu: x[0], lambda: x[1], sigma: x[2], beta: x[3], gamma: x[4] }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnergyPreset {
    EA,
    /// E_A with +7H⁴, the Möbius-invariant combination.
    EARecovered,
    /// ½∫|W|².
    EB,
    /// The printed E_B integrand, kept for discrepancy reporting.
    EBPrinted,
    EC,
    EMuLamSig(f64, f64, f64),
    W2,
    QTotal,
    Generic([f64; 7]),
}

impl EnergyPreset {
    pub fn weights(&self) -> [f64; 14] {
        let mut w = [0.0; 14];
        match *self {
            EnergyPreset::EA => {
                w[1] = 1.0;
                w[5] = -1.0;
                w[6] = -7.0;
            }
            EnergyPreset::EARecovered => {
                w[1] = 1.0;
                w[5] = -1.0;
                w[6] = 7.0;
            }
            EnergyPreset::EC => {
                w[0] = 1.0;
                w[5] = -6.0;
                w[6] = 60.0;
            }
            EnergyPreset::EB => w[10] = 0.5,
            EnergyPreset::W2 => w[10] = 1.0,
            EnergyPreset::EBPrinted => {
                let t = 1.0 / 3.0;
                w[0] = t;
                w[1] = -16.0 * t;
                w[5] = 10.0 * t;
                w[6] = -52.0 * t;
                w[8] = -4.5 * t;
                w[7] = 3.0 * t;
            }
            EnergyPreset::EMuLamSig(mu, lambda, sigma) => {
                w[8] = mu;
                w[9] = lambda;
                w[7] = sigma;
            }
            EnergyPreset::QTotal => w[13] = 1.0,
            EnergyPreset::Generic(a) => w[..7].copy_from_slice(&a),
        }
        w
    }

    pub fn needs_q(&self) -> bool {
        matches!(self, EnergyPreset::QTotal)
    }

    pub fn integrand(&self, iv: &InvariantVector) -> f64 {
        let v = iv.as_array();
        self.weights().iter().zip(v.iter()).filter(|(w, _)| **w != 0.0).map(|(w, x)| w * x).sum()
    }

    pub fn parse(s: &str) -> Result<EnergyPreset, EnergyError> {
        let bad = || EnergyError::UnknownPreset(s.to_string());
        let nums = |t: &str| -> Result<Vec<f64>, EnergyError> {
            t.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect()
        };
        Ok(match s {
            "EA" => EnergyPreset::EA,
            "EA_recovered" => EnergyPreset::EARecovered,
            "EB" => EnergyPreset::EB,
            "EB_printed" => EnergyPreset::EBPrinted,
            "EC" => EnergyPreset::EC,
            "W2" => EnergyPreset::W2,
            "Q" => EnergyPreset::QTotal,
            _ => match s.split_once(':') {
                Some(("E3", rest)) => match nums(rest)?.as_slice() {
                    [m, l, g] => EnergyPreset::EMuLamSig(*m, *l, *g),
                    _ => return Err(bad()),
                },
                Some(("generic", rest)) => {
                    let v = nums(rest)?;
                    EnergyPreset::Generic(v.try_into().map_err(|_| bad())?)
                }
                _ => return Err(bad()),
            },
        })
    }
}

impl fmt::Display for EnergyPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnergyPreset::EA => write!(f, "EA"),
            EnergyPreset::EARecovered => write!(f, "EA_recovered"),
            EnergyPreset::EB => write!(f, "EB"),
            EnergyPreset::EBPrinted => write!(f, "EB_printed"),
            EnergyPreset::EC => write!(f, "EC"),
            EnergyPreset::W2 => write!(f, "W2"),
            EnergyPreset::QTotal => write!(f, "Q"),
            EnergyPreset::EMuLamSig(a, b, c) => write!(f, "E3:{a},{b},{c}"),
            EnergyPreset::Generic(a) => {
                write!(f, "generic:{}", a.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
            }
        }
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Integrals of the fourteen invariants and of the volume over one grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantIntegrals {
    pub n: usize,
    pub values: [f64; 14],
    pub volume: f64,
}

impl InvariantIntegrals {
    pub fn combine(&self, w: &[f64; 14]) -> f64 {
        w.iter().zip(self.values.iter()).filter(|(a, _)| **a != 0.0).map(|(a, b)| a * b).sum()
    }
}

/// One quadrature sweep; `with_q` switches to order-4 jets so that `Q` is available.
pub fn invariant_integrals(spec: &SurfaceSpec, n: usize, with_q: bool) -> Result<InvariantIntegrals, EnergyError> {
    if !spec.is_closed() {
        return Err(EnergyError::OpenPatch(spec.label()));
    }
    let rule = ProductRule::for_chart(&spec.chart(), n)?;
    let m = rule.len();
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(m); 15];
    let orient = spec.orientation();
    for k in 0..m {
        let (p, w) = rule.node(k);
        let (iv, sg) = if with_q {
            let j = spec.evaluate(&p, 4)?;
            let (f, s) = shape_at(&j, orient)?;
            let c = curvature_at(&s, &f);
            (invariants_at(&s, &c, &f), f.sqrt_det_g)
        } else {
            densities_at(&spec.evaluate(&p, 3)?, orient)?
        };
        let ww = w * sg;
        for (col, x) in cols.iter_mut().zip(iv.as_array()) {
            col.push(if x.is_nan() { 0.0 } else { ww * x });
        }
        cols[14].push(ww);
    }
    let mut values = [0.0; 14];
    for (k, v) in values.iter_mut().enumerate() {
        *v = pairwise_sum(&cols[k]);
    }
    if !with_q {
        values[13] = f64::NAN;
    }
    Ok(InvariantIntegrals { n, values, volume: pairwise_sum(&cols[14]) })
}

/// Coarse companion grid for error estimates.
pub fn coarse_grid(n: usize) -> usize {
    (n / 2).max(4)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub n: usize,
}

fn estimate(fine: f64, coarse: f64) -> f64 {
    (fine - coarse).abs().max(f64::EPSILON * fine.abs())
}

/// Fine- and coarse-grid sweeps of a surface.
pub fn two_grid(spec: &SurfaceSpec, n: usize, with_q: bool) -> Result<(InvariantIntegrals, InvariantIntegrals), EnergyError> {
    Ok((invariant_integrals(spec, n, with_q)?, invariant_integrals(spec, coarse_grid(n), with_q)?))
}

pub fn combine_two_grid(pair: &(InvariantIntegrals, InvariantIntegrals), w: &[f64; 14]) -> IntegralResult {
    let (f, c) = (pair.0.combine(w), pair.1.combine(w));
    IntegralResult { value: f, error_estimate: estimate(f, c), n: pair.0.n }
}

pub fn integrate(spec: &SurfaceSpec, preset: &EnergyPreset, n: usize) -> Result<IntegralResult, EnergyError> {
    let pair = two_grid(spec, n, preset.needs_q())?;
    Ok(combine_two_grid(&pair, &preset.weights()))
}

/// Q-curvature: intrinsic form and the hypersurface expansion as printed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QCurvature {
    /// `6 det h − ¼|W|² − ⅙ΔR`.
    pub intrinsic: f64,
    /// `E_B + 6 det h − ¾|W|² + (4/3)∇_{ij}(h^{ij}H − 4H²g^{ij})` with the printed E_B.
    pub printed_expansion: f64,
    /// The same expansion with the self-consistent coefficients
    /// `⅓(|∇h|² − 16|∇H|² + 10H²|h|² − 52H⁴ − ¾|h₀|⁴ + 30 det h) − ½|W|² + (4/3)∇_{ij}(…)`.
    pub consistent_expansion: f64,
}

pub fn q_curvature_at(spec: &SurfaceSpec, p: &crate::catalog::ChartPoint) -> Result<QCurvature, EnergyError> {
    let j = spec.evaluate(p, 4)?;
    let (f, s) = shape_at(&j, spec.orientation())?;
    let c = curvature_at(&s, &f);
    let iv = invariants_at(&s, &c, &f);
    let d = second_order_at(&j, spec.orientation())?;
    let intrinsic = 6.0 * iv.det_h - 0.25 * iv.weyl_sq - d.lap_r / 6.0;
    let eb = EnergyPreset::EBPrinted.integrand(&iv);
    let printed_expansion = eb + 6.0 * iv.det_h - 0.75 * iv.weyl_sq + 4.0 / 3.0 * d.div2_hh;
    let x = iv.grad_h_sq - 16.0 * iv.grad_mean_sq + 10.0 * iv.mean2_h2 - 52.0 * iv.mean4 - 0.75 * iv.h0_norm4;
    let consistent_expansion = (x + 30.0 * iv.det_h) / 3.0 - 0.5 * iv.weyl_sq + 4.0 / 3.0 * d.div2_hh;
    Ok(QCurvature { intrinsic, printed_expansion, consistent_expansion })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussBonnet {
    pub six_int_det: f64,
    pub expected: f64,
    pub residual: f64,
    pub error_estimate: f64,
}

pub fn gauss_bonnet_check(spec: &SurfaceSpec, n: usize) -> Result<GaussBonnet, EnergyError> {
    let chi = spec.euler_char().ok_or_else(|| EnergyError::OpenPatch(spec.label()))?;
    let pair = two_grid(spec, n, false)?;
    let mut w = [0.0; 14];
    w[7] = 6.0;
    let r = combine_two_grid(&pair, &w);
    let expected = 8.0 * PI * PI * chi as f64;
    Ok(GaussBonnet { six_int_det: r.value, expected, residual: (r.value - expected).abs(), error_estimate: r.error_estimate })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvarianceResult {
    pub original: IntegralResult,
    pub transformed: IntegralResult,
    pub deviation: f64,
}

pub fn conformal_invariance_test(
    spec: &SurfaceSpec,
    preset: &EnergyPreset,
    t: &MobiusTransform,
    n: usize,
) -> Result<InvarianceResult, EnergyError> {
    let image = mobius_apply(t, spec)?;
    let original = integrate(spec, preset, n)?;
    let transformed = integrate(&image, preset, n)?;
    let deviation = (transformed.value - original.value).abs() / original.value.abs().max(1.0);
    Ok(InvarianceResult { original, transformed, deviation })
}
