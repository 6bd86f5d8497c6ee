//! Translation Noether currents of curvature Lagrangians 𝓕(g, h, ∇h) by
//! Müller's process, evaluated on jets so that every derivative is exact.

use std::fmt;

use crate::catalog::{AxisKind, CatalogError, ChartPoint, SurfaceSpec};
use crate::energies::pairwise_sum;
use crate::jets::{AmbientJet, Jet, JetError};
use crate::shape::{densities_at, second_order_at, InvariantVector, ShapeError};
use crate::tensor::{contract, Field, JetGeometry, DIM};

#[derive(Debug, thiserror::Error)]
pub enum NoetherError {
    #[error("jet order {got} is below the {needed} this computation consumes")]
    InsufficientOrder { needed: usize, got: usize },
    #[error("bump support leaves the chart interior on axis {axis}")]
    BumpOutsideChart { axis: usize },
    #[error("unknown Lagrangian {0:?}")]
    UnknownLagrangian(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Building blocks; every Lagrangian is a linear combination of these.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    GradHSq,
    GradMeanSq,
    TrH4,
    HNorm4,
    MeanTrH3,
    Mean2H2,
    Mean4,
    TrH04,
    H0Norm4,
    DetH,
}

impl Term {
    pub fn is_first_order(self) -> bool {
        matches!(self, Term::GradHSq | Term::GradMeanSq)
    }

    /// Index into `InvariantVector::as_array`.
    fn invariant_index(self) -> usize {
        match self {
            Term::GradHSq => 0,
            Term::GradMeanSq => 1,
            Term::TrH4 => 2,
            Term::HNorm4 => 3,
            Term::MeanTrH3 => 4,
            Term::Mean2H2 => 5,
            Term::Mean4 => 6,
            Term::DetH => 7,
            Term::H0Norm4 => 8,
            Term::TrH04 => 9,
        }
    }
}

const SEVEN: [Term; 7] = [Term::GradHSq, Term::GradMeanSq, Term::TrH4, Term::HNorm4, Term::MeanTrH3, Term::Mean2H2, Term::Mean4];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LagrangianSpec {
    GradHSq,
    GradMeanSq,
    Mean2H2,
    Mean4,
    TrH04,
    H0Norm4,
    DetH,
    /// αH²|h|² + βH⁴.
    EAlphaBeta { alpha: f64, beta: f64 },
    /// Weights of |∇h|², |∇H|², Tr h⁴, |h|⁴, H Tr h³, H²|h|², H⁴.
    Generic([f64; 7]),
}

impl LagrangianSpec {
    pub fn terms(&self) -> Vec<(f64, Term)> {
        match *self {
            LagrangianSpec::GradHSq => vec![(1.0, Term::GradHSq)],
            LagrangianSpec::GradMeanSq => vec![(1.0, Term::GradMeanSq)],
            LagrangianSpec::Mean2H2 => vec![(1.0, Term::Mean2H2)],
            LagrangianSpec::Mean4 => vec![(1.0, Term::Mean4)],
            LagrangianSpec::TrH04 => vec![(1.0, Term::TrH04)],
            LagrangianSpec::H0Norm4 => vec![(1.0, Term::H0Norm4)],
            LagrangianSpec::DetH => vec![(1.0, Term::DetH)],
            LagrangianSpec::EAlphaBeta { alpha, beta } => vec![(alpha, Term::Mean2H2), (beta, Term::Mean4)],
            LagrangianSpec::Generic(a) => a.iter().zip(SEVEN).filter(|(w, _)| **w != 0.0).map(|(w, t)| (*w, t)).collect(),
        }
    }

    pub fn is_first_order(&self) -> bool {
        self.terms().iter().any(|(_, t)| t.is_first_order())
    }

    /// Jet order of Φ needed for the fields and for the current divergence.
    pub fn required_orders(&self) -> (usize, usize) {
        if self.is_first_order() {
            (5, 6)
        } else {
            (3, 4)
        }
    }

    /// 𝓕 from the invariant densities at a point.
    pub fn value(&self, inv: &InvariantVector) -> f64 {
        let a = inv.as_array();
        self.terms().iter().map(|(w, t)| w * a[t.invariant_index()]).sum()
    }

    pub fn parse(s: &str) -> Result<Self, NoetherError> {
        let bad = || NoetherError::UnknownLagrangian(s.to_string());
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s.trim(), None),
        };
        let nums = |a: Option<&str>, k: usize| -> Result<Vec<f64>, NoetherError> {
            let v: Vec<f64> = a
                .ok_or_else(bad)?
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad())?;
            if v.len() != k || v.iter().any(|x| !x.is_finite()) {
                return Err(bad());
            }
            Ok(v)
        };
        let simple = |l: LagrangianSpec| if args.is_some() { Err(bad()) } else { Ok(l) };
        match name {
            "grad_h_sq" => simple(LagrangianSpec::GradHSq),
            "grad_H_sq" => simple(LagrangianSpec::GradMeanSq),
            "H2_h2" => simple(LagrangianSpec::Mean2H2),
            "H4" => simple(LagrangianSpec::Mean4),
            "tr_h04" => simple(LagrangianSpec::TrH04),
            "h0_4" => simple(LagrangianSpec::H0Norm4),
            "det_h" => simple(LagrangianSpec::DetH),
            "E_alpha_beta" => {
                let v = nums(args, 2)?;
                Ok(LagrangianSpec::EAlphaBeta { alpha: v[0], beta: v[1] })
            }
            "generic" => {
                let v = nums(args, 7)?;
                Ok(LagrangianSpec::Generic(std::array::from_fn(|i| v[i])))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for LagrangianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LagrangianSpec::GradHSq => write!(f, "grad_h_sq"),
            LagrangianSpec::GradMeanSq => write!(f, "grad_H_sq"),
            LagrangianSpec::Mean2H2 => write!(f, "H2_h2"),
            LagrangianSpec::Mean4 => write!(f, "H4"),
            LagrangianSpec::TrH04 => write!(f, "tr_h04"),
            LagrangianSpec::H0Norm4 => write!(f, "h0_4"),
            LagrangianSpec::DetH => write!(f, "det_h"),
            LagrangianSpec::EAlphaBeta { alpha, beta } => write!(f, "E_alpha_beta:{alpha},{beta}"),
            LagrangianSpec::Generic(a) => {
                let s: Vec<String> = a.iter().map(|x| x.to_string()).collect();
                write!(f, "generic:{}", s.join(","))
            }
        }
    }
}

/// Pointwise algebra shared by all terms. All tensors carry lowered indices;
/// matrix powers are taken through `g⁻¹`.
pub struct PointAlgebra<'a> {
    pub geo: &'a JetGeometry,
    pub h2: Field,
    pub h3: Field,
    pub h0: Field,
    /// `h^d_c` stored as `[d, c]`.
    pub h_mixed: Field,
    pub h_norm2: Jet,
    pub tr_h3: Jet,
    pub tr_h4: Jet,
    pub grad_h: Option<Field>,
}

impl<'a> PointAlgebra<'a> {
    pub fn new(geo: &'a JetGeometry, with_gradient: bool) -> Self {
        let h2 = geo.matmul(&geo.h, &geo.h);
        let h3 = geo.matmul(&h2, &geo.h);
        let h0 = geo.h.sub(&geo.g.mul_scalar(&geo.mean));
        let h_mixed = contract("de,ec->dc", &[&geo.ginv, &geo.h]);
        let h_norm2 = geo.trace(&h2);
        let tr_h3 = geo.trace(&h3);
        let tr_h4 = contract("ab,ab->", &[&geo.raise_both(&h2), &h2]).c[0].clone();
        let grad_h = with_gradient.then(|| geo.nabla(&geo.h));
        PointAlgebra { geo, h2, h3, h0, h_mixed, h_norm2, tr_h3, tr_h4, grad_h }
    }
}

impl JetGeometry {
    /// `(a g⁻¹ b)_{ab}` for lowered 2-tensors.
    pub fn matmul(&self, a: &Field, b: &Field) -> Field {
        let ag = contract("ac,cd->ad", &[a, &self.ginv]);
        contract("ad,db->ab", &[&ag, b])
    }

    pub fn trace(&self, a: &Field) -> Jet {
        contract("ab,ab->", &[&self.ginv, a]).c[0].clone()
    }

    pub fn raise_both(&self, a: &Field) -> Field {
        self.raise(&self.raise(a, 0), 1)
    }
}

/// Closed-form partial derivatives of one term, indices lowered.
pub struct Partials {
    pub lagrangian: Jet,
    /// ∂𝓕/∂h_{ab}.
    pub e: Field,
    /// ∂𝓕/∂g_{ab}.
    pub p: Field,
    /// ∂𝓕/∂∇_c h_{ab}, stored `[c, a, b]`.
    pub k: Option<Field>,
}

pub fn term_partials(term: Term, alg: &PointAlgebra) -> Partials {
    let geo = alg.geo;
    let (g, h, hm) = (&geo.g, &geo.h, &geo.mean);
    let q = &alg.h_norm2;
    let t3 = &alg.tr_h3;
    let zero2 = || Field::zeros(2, h.order());
    match term {
        Term::GradHSq => {
            let dh = alg.grad_h.as_ref().expect("gradient of h required");
            let dh_ab = geo.raise(&geo.raise(dh, 1), 2);
            let dh_up = geo.raise(&dh_ab, 0);
            let lag = contract("cab,cab->", &[dh, &dh_up]).c[0].clone();
            // ∇^c h_b^d with b lowered
            let mixed = contract("be,ced->cbd", &[g, &dh_up]);
            let p1 = contract("acd,bcd->ab", &[dh, &dh_ab]);
            let p2 = contract("cad,cbd->ab", &[dh, &mixed]);
            let mut p = p1.scale(-1.0);
            p.axpy(-2.0, &p2);
            Partials { lagrangian: lag, e: zero2(), p, k: Some(dh.scale(2.0)) }
        }
        Term::GradMeanSq => {
            let d_mean = geo.nabla(&Field::scalar(hm.clone()));
            let d_mean_up = geo.raise(&d_mean, 0);
            let lag = contract("c,c->", &[&d_mean, &d_mean_up]).c[0].clone();
            let k = contract("c,ab->cab", &[&d_mean, g]).scale(0.5);
            let dh = alg.grad_h.as_ref().expect("gradient of h required");
            let mut p = contract("a,b->ab", &[&d_mean, &d_mean]).scale(-1.0);
            p.axpy(-0.5, &contract("c,cab->ab", &[&d_mean_up, dh]));
            Partials { lagrangian: lag, e: zero2(), p, k: Some(k) }
        }
        Term::TrH4 => {
            let h4 = geo.matmul(&alg.h3, h);
            Partials { lagrangian: alg.tr_h4.clone(), e: alg.h3.scale(4.0), p: h4.scale(-4.0), k: None }
        }
        Term::HNorm4 => Partials {
            lagrangian: q * q,
            e: h.mul_scalar(&q.scale(4.0)),
            p: alg.h2.mul_scalar(&q.scale(-4.0)),
            k: None,
        },
        Term::MeanTrH3 => {
            let mut e = g.mul_scalar(&t3.scale(0.25));
            e.axpy(1.0, &alg.h2.mul_scalar(&hm.scale(3.0)));
            let mut p = h.mul_scalar(&t3.scale(-0.25));
            p.axpy(1.0, &alg.h3.mul_scalar(&hm.scale(-3.0)));
            Partials { lagrangian: hm * t3, e, p, k: None }
        }
        Term::Mean2H2 => {
            let hq = hm * q;
            let h_sq = hm * hm;
            let mut e = g.mul_scalar(&hq.scale(0.5));
            e.axpy(1.0, &h.mul_scalar(&h_sq.scale(2.0)));
            let mut p = h.mul_scalar(&hq.scale(-0.5));
            p.axpy(1.0, &alg.h2.mul_scalar(&h_sq.scale(-2.0)));
            Partials { lagrangian: &h_sq * q, e, p, k: None }
        }
        Term::Mean4 => {
            let cube = &(hm * hm) * hm;
            Partials { lagrangian: &cube * hm, e: g.mul_scalar(&cube), p: h.mul_scalar(&cube.scale(-1.0)), k: None }
        }
        Term::TrH04 => {
            let h0 = &alg.h0;
            let h0_2 = geo.matmul(h0, h0);
            let h0_3 = geo.matmul(&h0_2, h0);
            let tr3 = geo.trace(&h0_3);
            let lag = contract("ab,ab->", &[&geo.raise_both(&h0_2), &h0_2]).c[0].clone();
            let mut e = h0_3.scale(4.0);
            e.axpy(-1.0, &g.mul_scalar(&tr3));
            let mut p = geo.matmul(&h0_3, h).scale(-4.0);
            p.axpy(1.0, &h.mul_scalar(&tr3));
            Partials { lagrangian: lag, e, p, k: None }
        }
        Term::H0Norm4 => {
            let h0 = &alg.h0;
            let q0 = contract("ab,ab->", &[&geo.raise_both(h0), h0]).c[0].clone();
            let p = geo.matmul(h0, h).mul_scalar(&q0.scale(-4.0));
            Partials { lagrangian: &q0 * &q0, e: h0.mul_scalar(&q0.scale(4.0)), p, k: None }
        }
        Term::DetH => {
            let e1 = hm.scale(4.0);
            let e1_sq = &e1 * &e1;
            let e2 = (&e1_sq - q).scale(0.5);
            let e3 = (&(&(&e1_sq * &e1) - &(&e1 * q).scale(3.0)) + &t3.scale(2.0)).scale(1.0 / 6.0);
            let e4 = {
                let mut s = &e1_sq * &e1_sq;
                s.axpy(-6.0, &(&e1_sq * q));
                s.axpy(3.0, &(q * q));
                s.axpy(8.0, &(&e1 * t3));
                s.axpy(-6.0, &alg.tr_h4);
                s.scale(1.0 / 24.0)
            };
            // adjugate of the shape operator, by Cayley–Hamilton
            let mut e = g.mul_scalar(&e3);
            e.axpy(-1.0, &h.mul_scalar(&e2));
            e.axpy(1.0, &alg.h2.mul_scalar(&e1));
            e.axpy(-1.0, &alg.h3);
            Partials { lagrangian: e4.clone(), e, p: g.mul_scalar(&e4.scale(-1.0)), k: None }
        }
    }
}

/// Sum of term partials with weights.
pub fn lagrangian_partials(l: &LagrangianSpec, alg: &PointAlgebra) -> Partials {
    let geo = alg.geo;
    let order = geo.h.order();
    let mut out = Partials { lagrangian: Jet::zero(DIM, order), e: Field::zeros(2, order), p: Field::zeros(2, order), k: None };
    for (w, t) in l.terms() {
        let part = term_partials(t, alg);
        out.lagrangian.axpy(w, &part.lagrangian);
        out.e.axpy(w, &part.e);
        out.p.axpy(w, &part.p);
        if let Some(k) = part.k {
            match out.k.as_mut() {
                Some(acc) => acc.axpy(w, &k),
                None => out.k = Some(k.scale(w)),
            }
        }
    }
    out
}

/// Output of Müller's process. Tensors are lowered; `v[A]` is the covector
/// `V_b` of ambient component `A`.
#[derive(Clone, Debug)]
pub struct MullerFields {
    pub lagrangian: Jet,
    pub k: Option<Field>,
    pub f: Field,
    pub g: Option<Field>,
    pub t: Field,
    /// `∇^b 𝓕_{ab}`.
    pub div_f: Field,
    pub v: [Field; 5],
    /// The current with the normal term subtracted, as printed.
    pub v_printed: [Field; 5],
}

pub fn muller_fields(l: &LagrangianSpec, geo: &JetGeometry) -> Result<MullerFields, NoetherError> {
    let needed = l.required_orders().0;
    if geo.phi_order < needed {
        return Err(NoetherError::InsufficientOrder { needed, got: geo.phi_order });
    }
    let alg = PointAlgebra::new(geo, l.is_first_order());
    let parts = lagrangian_partials(l, &alg);
    let mut f = parts.e.clone();
    let mut gfield = None;
    let mut t = geo.g.mul_scalar(&parts.lagrangian).scale(-1.0);
    t.axpy(-2.0, &parts.p);
    if let Some(k) = &parts.k {
        let dk = geo.nabla(k);
        f.axpy(-1.0, &contract("dc,dcab->ab", &[&geo.ginv, &dk]));
        let hm = &alg.h_mixed;
        let mut gg = contract("abd,dc->cab", &[k, hm]);
        gg.axpy(-1.0, &contract("acd,db->cab", &[k, hm]));
        gg.axpy(-1.0, &contract("cad,db->cab", &[k, hm]));
        let dg = contract("dc,dcab->ab", &[&geo.ginv, &geo.nabla(&gg)]);
        // only the symmetric part pairs with δg_{ab}
        t.axpy(1.0, &dg);
        t.axpy(1.0, &dg.permute(&[1, 0]));
        gfield = Some(gg);
    }
    t.axpy(-1.0, &contract("ac,cb->ab", &[&f, &alg.h_mixed]));
    let div_f = contract("bc,cab->a", &[&geo.ginv, &geo.nabla(&f)]);
    let t_mixed = contract("bc,cd->bd", &[&t, &geo.ginv]);
    let tangential: [Field; 5] = std::array::from_fn(|a| contract("bd,d->b", &[&t_mixed, &geo.dphi[a]]));
    let normal: [Field; 5] = std::array::from_fn(|a| div_f.mul_scalar(&geo.n[a]));
    let v = std::array::from_fn(|a| tangential[a].add(&normal[a]));
    let v_printed = std::array::from_fn(|a| tangential[a].sub(&normal[a]));
    Ok(MullerFields { lagrangian: parts.lagrangian, k: parts.k, f, g: gfield, t, div_f, v, v_printed })
}

pub fn point_geometry(spec: &SurfaceSpec, p: &ChartPoint, order: usize) -> Result<JetGeometry, NoetherError> {
    let j = spec.evaluate(p, order)?;
    Ok(JetGeometry::new(&j, spec.orientation())?)
}

/// `∇_a V⃗^a`, and the same for the printed-sign current.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurrentDivergence {
    pub div: [f64; 5],
    pub div_printed: [f64; 5],
}

pub fn current_divergence(l: &LagrangianSpec, geo: &JetGeometry) -> Result<CurrentDivergence, NoetherError> {
    let needed = l.required_orders().1;
    if geo.phi_order < needed {
        return Err(NoetherError::InsufficientOrder { needed, got: geo.phi_order });
    }
    let m = muller_fields(l, geo)?;
    Ok(CurrentDivergence {
        div: geo.div_vector(&m.v).map(|x| x.value()),
        div_printed: geo.div_vector(&m.v_printed).map(|x| x.value()),
    })
}

/// Traces of T and 𝓕 against their closed forms. `printed` marks records
/// whose formula appears in the source text; the others are derived by the
/// same rules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub trace_t: f64,
    pub expected_t: f64,
    pub trace_f: f64,
    pub expected_f: f64,
    pub printed: bool,
    pub scale: f64,
}

impl TraceRecord {
    pub fn t_residual(&self) -> f64 {
        (self.trace_t - self.expected_t).abs() / self.scale
    }

    pub fn f_residual(&self) -> f64 {
        (self.trace_f - self.expected_f).abs() / self.scale
    }
}

pub fn trace_checks(l: &LagrangianSpec, geo: &JetGeometry, fields: &MullerFields) -> TraceRecord {
    let val = |f: &Field| f.c[0].value();
    let hm = &geo.mean;
    let alg = PointAlgebra::new(geo, false);
    let q = alg.h_norm2.value();
    let t3 = alg.tr_h3.value();
    let m = hm.value();
    let lap = |s: Jet| val(&geo.laplacian(&Field::scalar(s)));
    let first = l.is_first_order();
    let (lap_mean, lap_mean_sq, lap_h_sq, div2) = if first {
        let hh = geo.h.mul_scalar(hm);
        let dd = geo.nabla(&geo.nabla(&hh));
        let div2 = val(&contract("ac,bd,abcd->", &[&geo.ginv, &geo.ginv, &dd]));
        (lap(hm.clone()), lap(hm * hm), lap(alg.h_norm2.clone()), div2)
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };
    let e1 = 4.0 * m;
    let e3 = (e1.powi(3) - 3.0 * e1 * q + 2.0 * t3) / 6.0;
    let mut expected_t = 0.0;
    let mut expected_f = 0.0;
    let mut printed = true;
    for (w, t) in l.terms() {
        let (tt, tf) = match t {
            Term::GradHSq => (16.0 * div2 - 32.0 * lap_mean_sq - 3.0 * lap_h_sq, -8.0 * lap_mean),
            Term::GradMeanSq => (-lap_mean_sq, -2.0 * lap_mean),
            Term::Mean2H2 => (0.0, 2.0 * m * q + 8.0 * m.powi(3)),
            Term::Mean4 => (0.0, 4.0 * m.powi(3)),
            Term::TrH04 | Term::H0Norm4 => (0.0, 0.0),
            Term::TrH4 => (0.0, 4.0 * t3),
            Term::HNorm4 => (0.0, 16.0 * m * q),
            Term::MeanTrH3 => (0.0, t3 + 3.0 * m * q),
            Term::DetH => (0.0, e3),
        };
        printed &= !matches!(t, Term::TrH4 | Term::HNorm4 | Term::MeanTrH3 | Term::DetH);
        expected_t += w * tt;
        expected_f += w * tf;
    }
    let trace_t = geo.trace(&fields.t).value();
    let trace_f = geo.trace(&fields.f).value();
    let weight: f64 = l.terms().iter().map(|(w, _)| w.abs()).sum();
    let scale = weight.max(1.0) * (q * q).max(1.0);
    TraceRecord { trace_t, expected_t, trace_f, expected_f, printed, scale }
}

/// Residual of `∇_j X⃗^j = (ΔH + |h|²H − 8H³) n⃗` with `X⃗^j = ∇^jH⃗ + 2H h₀^{jk} ∂_kΦ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxCheck {
    pub divergence: [f64; 5],
    pub expected: [f64; 5],
    pub residual: f64,
}

pub fn flux_field_check(j: &AmbientJet, orientation: f64) -> Result<FluxCheck, NoetherError> {
    let d = second_order_at(j, orientation)?;
    let residual = (0..5).map(|a| (d.flux_rhs[a] - d.flux_lhs[a]).abs()).fold(0.0, f64::max) / d.scale;
    Ok(FluxCheck { divergence: d.flux_rhs, expected: d.flux_lhs, residual })
}

/// `amplitude · Π(1 − s_i²)^power` on the box `|u_i − center_i| < half_width_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub center: [f64; 4],
    pub half_width: [f64; 4],
    pub power: u32,
    pub amplitude: f64,
}

impl Bump {
    /// The amplitude `0.1·min(w)³` keeps third derivatives of order one, so the
    /// default finite-difference steps stay in the linear regime.
    pub fn new(center: [f64; 4], half_width: [f64; 4]) -> Self {
        let w = half_width.iter().cloned().fold(f64::INFINITY, f64::min);
        Bump { center, half_width, power: 4, amplitude: 0.1 * w.powi(3) }
    }

    pub fn validate(&self, spec: &SurfaceSpec) -> Result<(), NoetherError> {
        let chart = spec.chart();
        for i in 0..4 {
            let (c, w) = (self.center[i], self.half_width[i]);
            let ok = w > 0.0
                && w.is_finite()
                && c.is_finite()
                && match chart.kinds[i] {
                    AxisKind::Periodic => 2.0 * w < chart.hi[i] - chart.lo[i],
                    AxisKind::Polar | AxisKind::Interval => c - w > chart.lo[i] && c + w < chart.hi[i],
                };
            if !ok {
                return Err(NoetherError::BumpOutsideChart { axis: i });
            }
        }
        Ok(())
    }

    pub fn jet(&self, p: &ChartPoint, order: usize) -> Jet {
        let mut out = Jet::constant(DIM, order, self.amplitude);
        for i in 0..4 {
            let s = Jet::variable(DIM, order, i, p.u[i]).add_scalar(-self.center[i]).scale(1.0 / self.half_width[i]);
            let one_minus = (&s * &s).scale(-1.0).add_scalar(1.0);
            let mut f = Jet::constant(DIM, order, 1.0);
            for _ in 0..self.power {
                f = &f * &one_minus;
            }
            out = &out * &f;
        }
        out
    }

    /// Gauss–Legendre nodes on the support box.
    pub fn nodes(&self, n: usize) -> Vec<(ChartPoint, f64)> {
        let axes: [Vec<(f64, f64)>; 4] = std::array::from_fn(|i| {
            let (c, w) = (self.center[i], self.half_width[i]);
            crate::catalog::axis_rule(AxisKind::Interval, c - w, c + w, n)
        });
        let mut out = Vec::with_capacity(n.pow(4));
        for a in &axes[0] {
            for b in &axes[1] {
                for c in &axes[2] {
                    for d in &axes[3] {
                        out.push((ChartPoint::new([a.0, b.0, c.0, d.0]), a.1 * b.1 * c.1 * d.1));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationalResult {
    /// Richardson-extrapolated `dE[Φ + tφe]/dt` at `t = 0`.
    pub fd_derivative: f64,
    /// `∫⟨∇_aV⃗^a, e⟩ φ √det g`.
    pub current_integral: f64,
    /// Same with the printed-sign current.
    pub current_integral_printed: f64,
    /// `∫|∇_aV⃗^a| φ √det g`, the normalisation of `deviation`.
    pub scale: f64,
    pub deviation: f64,
}

fn relative_gap(a: f64, b: f64, scale: f64) -> f64 {
    let d = scale.max(a.abs()).max(b.abs());
    if d == 0.0 {
        0.0
    } else {
        (a - b).abs() / d
    }
}

/// Central differences at each step, combined by Richardson extrapolation
/// assuming an even error expansion.
fn richardson(steps: &[f64], diffs: &[f64]) -> f64 {
    let mut table = diffs.to_vec();
    for level in 1..table.len() {
        for k in (level..table.len()).rev() {
            let r = (steps[k - level] / steps[k]).powi(2);
            table[k] = (r * table[k] - table[k - 1]) / (r - 1.0);
        }
    }
    *table.last().expect("at least one step")
}

/// Variational check for several Lagrangians and directions at once; the
/// result is indexed `[lagrangian][direction]`.
pub fn variational_batch(
    spec: &SurfaceSpec,
    lagrangians: &[LagrangianSpec],
    bump: &Bump,
    directions: &[[f64; 5]],
    steps: &[f64],
    nodes: usize,
) -> Result<Vec<Vec<VariationalResult>>, NoetherError> {
    bump.validate(spec)?;
    assert!(!steps.is_empty(), "at least one finite-difference step");
    let orient = spec.orientation();
    let div_order = lagrangians.iter().map(|l| l.required_orders().1).max().unwrap_or(4);
    let (nl, nd, ns) = (lagrangians.len(), directions.len(), steps.len());
    // energy samples [l][dir][step][±] per node, reduced afterwards
    let mut energy = vec![vec![vec![[Vec::new(), Vec::new()]; ns]; nd]; nl];
    let mut flux = vec![vec![Vec::new(); nd]; nl];
    let mut flux_printed = vec![vec![Vec::new(); nd]; nl];
    let mut norm = vec![Vec::new(); nl];
    for (p, w) in bump.nodes(nodes) {
        let base = spec.evaluate(&p, div_order)?;
        let phi = bump.jet(&p, 3);
        let phi0 = phi.value();
        let base3 = base.truncate(3);
        for (di, e) in directions.iter().enumerate() {
            for (si, &t) in steps.iter().enumerate() {
                for (sign_index, sign) in [1.0, -1.0].into_iter().enumerate() {
                    let mut jt = base3.clone();
                    for a in 0..5 {
                        jt.x[a].axpy(sign * t * e[a], &phi);
                    }
                    let (inv, sqrt_g) = densities_at(&jt, orient)?;
                    for (li, l) in lagrangians.iter().enumerate() {
                        energy[li][di][si][sign_index].push(w * l.value(&inv) * sqrt_g);
                    }
                }
            }
        }
        if phi0 == 0.0 {
            continue;
        }
        let geo = JetGeometry::new(&base, orient)?;
        let sg = geo.sqrt_g.value();
        for (li, l) in lagrangians.iter().enumerate() {
            let geo_l;
            let g = if l.required_orders().1 < div_order {
                geo_l = JetGeometry::new(&base.truncate(l.required_orders().1), orient)?;
                &geo_l
            } else {
                &geo
            };
            let d = current_divergence(l, g)?;
            norm[li].push(w * phi0 * sg * d.div.iter().map(|x| x * x).sum::<f64>().sqrt());
            for (di, e) in directions.iter().enumerate() {
                let dot = |v: &[f64; 5]| (0..5).map(|a| v[a] * e[a]).sum::<f64>();
                flux[li][di].push(w * phi0 * sg * dot(&d.div));
                flux_printed[li][di].push(w * phi0 * sg * dot(&d.div_printed));
            }
        }
    }
    let mut out = Vec::with_capacity(nl);
    for li in 0..nl {
        let scale = pairwise_sum(&norm[li]);
        let mut row = Vec::with_capacity(nd);
        for di in 0..nd {
            let diffs: Vec<f64> = (0..ns)
                .map(|si| {
                    let [plus, minus] = &energy[li][di][si];
                    (pairwise_sum(plus) - pairwise_sum(minus)) / (2.0 * steps[si])
                })
                .collect();
            let fd = richardson(steps, &diffs);
            let ci = pairwise_sum(&flux[li][di]);
            let cp = pairwise_sum(&flux_printed[li][di]);
            row.push(VariationalResult {
                fd_derivative: fd,
                current_integral: ci,
                current_integral_printed: cp,
                scale,
                deviation: relative_gap(fd, ci, scale),
            });
        }
        out.push(row);
    }
    Ok(out)
}

pub fn variational_consistency(
    spec: &SurfaceSpec,
    l: &LagrangianSpec,
    bump: &Bump,
    direction: [f64; 5],
    steps: &[f64],
    nodes: usize,
) -> Result<VariationalResult, NoetherError> {
    Ok(variational_batch(spec, std::slice::from_ref(l), bump, &[direction], steps, nodes)?[0][0])
}

/// Default ladder of finite-difference steps.
pub const DEFAULT_STEPS: [f64; 2] = [1e-3, 5e-4];

pub type Mat4 = [[f64; 4]; 4];

fn mat_values(f: &Field) -> Mat4 {
    std::array::from_fn(|a| std::array::from_fn(|b| f.at(&[a, b]).value()))
}

/// The closed-form `(T, 𝓕)` pairs tabulated for the zeroth-order families and
/// `|∇H|²`, evaluated from point values; lowered indices. `None` for
/// Lagrangians without a tabulated row.
pub fn table_fields(l: &LagrangianSpec, geo: &JetGeometry) -> Option<(Mat4, Mat4)> {
    use nalgebra::Matrix4;
    let gm = Matrix4::from_fn(|a, b| geo.g.at(&[a, b]).value());
    let gi = Matrix4::from_fn(|a, b| geo.ginv.at(&[a, b]).value());
    let h = Matrix4::from_fn(|a, b| geo.h.at(&[a, b]).value());
    let m = geo.mean.value();
    // lowered matrix powers: (x g⁻¹ y)
    let mul = |x: &Matrix4<f64>, y: &Matrix4<f64>| x * gi * y;
    let tr = |x: &Matrix4<f64>| (gi * x).trace();
    let h0 = h - gm * m;
    let out = |t: Matrix4<f64>, f: Matrix4<f64>| -> (Mat4, Mat4) {
        (std::array::from_fn(|a| std::array::from_fn(|b| t[(a, b)])), std::array::from_fn(|a| std::array::from_fn(|b| f[(a, b)])))
    };
    match l {
        LagrangianSpec::GradMeanSq => {
            if geo.phi_order < 4 {
                return None;
            }
            let hm = Field::scalar(geo.mean.clone());
            let d = geo.nabla(&hm);
            let dv: [f64; 4] = std::array::from_fn(|i| d.at(&[i]).value());
            let lap = geo.laplacian(&hm).c[0].value();
            let g2: f64 = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| gi[(a, b)] * dv[a] * dv[b]).sum();
            let dd = Matrix4::from_fn(|a, b| dv[a] * dv[b]);
            Some(out(gm * (-g2) + dd * 2.0 - h * (0.5 * lap), gm * (-0.5 * lap)))
        }
        LagrangianSpec::Mean2H2 => {
            let q = tr(&mul(&h, &h));
            let t = gm * (-m * m * q) + mul(&h, &h) * (2.0 * m * m) + h * (0.5 * q * m);
            Some(out(t, h * (2.0 * m * m) + gm * (0.5 * q * m)))
        }
        LagrangianSpec::Mean4 => Some(out(h0 * m.powi(3), gm * m.powi(3))),
        LagrangianSpec::TrH04 => {
            let h0_2 = mul(&h0, &h0);
            let h0_3 = mul(&h0_2, &h0);
            let h0_4 = mul(&h0_3, &h0);
            let (t3, t4) = (tr(&h0_3), tr(&h0_4));
            let t = gm * (-t4) + h0_4 * 4.0 + h0_3 * (4.0 * m) - h * t3;
            Some(out(t, h0_3 * 4.0 - gm * t3))
        }
        LagrangianSpec::H0Norm4 => {
            let h0_2 = mul(&h0, &h0);
            let q0 = tr(&h0_2);
            let t = gm * (-q0 * q0) + h0_2 * (4.0 * q0) + h0 * (4.0 * q0 * m);
            Some(out(t, h0 * (4.0 * q0)))
        }
        _ => None,
    }
}

/// Largest componentwise gap between the computed fields and the tabulated
/// row, relative to `max(1, |h|⁴)`.
pub fn table_residual(l: &LagrangianSpec, geo: &JetGeometry, fields: &MullerFields) -> Option<f64> {
    let (t, f) = table_fields(l, geo)?;
    let (tc, fc) = (mat_values(&fields.t), mat_values(&fields.f));
    let q = geo.trace(&geo.matmul(&geo.h, &geo.h)).value();
    let scale = (q * q).max(1.0);
    let mut worst: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            worst = worst.max((t[a][b] - tc[a][b]).abs()).max((f[a][b] - fc[a][b]).abs());
        }
    }
    Some(worst / scale)
}
