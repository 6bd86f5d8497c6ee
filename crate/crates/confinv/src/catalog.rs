//! Closed-form immersions of 4-manifolds into ℝ⁵ and Möbius images of them.

use crate::jets::{AmbientJet, Jet, JetError, OuterJet, MAX_ORDER};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("invalid surface parameter: {0}")]
    InvalidParameter(String),
    #[error("chart coordinate {index} = {value} lies outside [{lo}, {hi}]")]
    OutsideDomain { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("inversion about {center:?} inadmissible: image point at chart {point:?} is {distance:e} from the center (δ_min = {delta_min:e})")]
    Inadmissible { center: [f64; 5], point: [f64; 4], distance: f64, delta_min: f64 },
    #[error("rotation block is not orthogonal (deviation {0:e})")]
    NotOrthogonal(f64),
    #[error("quadrature needs at least 4 nodes per axis, got {0}")]
    GridTooSmall(usize),
    #[error("unsupported jet order {0}")]
    UnsupportedOrder(usize),
    #[error("could not parse surface description {0:?}")]
    Parse(String),
    #[error(transparent)]
    Jet(#[from] JetError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPoint {
    pub u: [f64; 4],
}

impl ChartPoint {
    pub fn new(u: [f64; 4]) -> Self {
        ChartPoint { u }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisKind {
    /// Periodic coordinate, integrated by the trapezoid rule; any real value is accepted.
    Periodic,
    /// Polar angle; the endpoints are coordinate singularities and excluded.
    Polar,
    /// Bounded coordinate of an open patch.
    Interval,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chart {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
    pub kinds: [AxisKind; 4],
}

impl Chart {
    pub fn contains(&self, p: &ChartPoint) -> Result<(), CatalogError> {
        for i in 0..4 {
            let (lo, hi, v) = (self.lo[i], self.hi[i], p.u[i]);
            let inside = match self.kinds[i] {
                AxisKind::Polar => v > lo && v < hi,
                AxisKind::Periodic => true,
                AxisKind::Interval => v >= lo && v <= hi,
            };
            if !inside || !v.is_finite() {
                return Err(CatalogError::OutsideDomain { index: i, value: v, lo, hi });
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        (0..4).map(|i| self.hi[i] - self.lo[i]).product()
    }

    pub fn center(&self) -> ChartPoint {
        ChartPoint { u: std::array::from_fn(|i| 0.5 * (self.lo[i] + self.hi[i])) }
    }

    /// Uniform point of the box shrunk by `margin` (a fraction of each side).
    pub fn sample(&self, rng: &mut impl rand::Rng, margin: f64) -> ChartPoint {
        ChartPoint {
            u: std::array::from_fn(|i| {
                let (lo, hi) = (self.lo[i], self.hi[i]);
                lo + (hi - lo) * (margin + (1.0 - 2.0 * margin) * rng.gen::<f64>())
            }),
        }
    }
}

fn hyperspherical_chart() -> Chart {
    Chart {
        lo: [0.0; 4],
        hi: [PI, PI, PI, 2.0 * PI],
        kinds: [AxisKind::Polar, AxisKind::Polar, AxisKind::Polar, AxisKind::Periodic],
    }
}

fn torus_chart() -> Chart {
    Chart {
        lo: [0.0; 4],
        hi: [2.0 * PI, PI, PI, 2.0 * PI],
        kinds: [AxisKind::Periodic, AxisKind::Polar, AxisKind::Polar, AxisKind::Periodic],
    }
}

fn graph_chart() -> Chart {
    Chart { lo: [-1.0; 4], hi: [1.0; 4], kinds: [AxisKind::Interval; 4] }
}

/// Graph of `f(x) = A (1 + x₁/2 − x₂x₃/3 + x₄²/4 + x₁x₂x₄/5) exp(−|x|²/2)`
/// over `[−1, 1]⁴`; `A = 0` is the flat patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphPatch {
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Translation([f64; 5]),
    Rotation([[f64; 5]; 5]),
    Dilation(f64),
    /// Unit-radius inversion `x ↦ c + (x − c)/|x − c|²`.
    Inversion([f64; 5]),
}

impl Generator {
    pub fn validate(&self) -> Result<(), CatalogError> {
        match self {
            Generator::Translation(v) if v.iter().all(|x| x.is_finite()) => Ok(()),
            Generator::Translation(_) => Err(CatalogError::InvalidParameter("translation".into())),
            Generator::Dilation(s) if *s > 0.0 && s.is_finite() => Ok(()),
            Generator::Dilation(s) => Err(CatalogError::InvalidParameter(format!("dilation factor {s} must be positive"))),
            Generator::Inversion(c) if c.iter().all(|x| x.is_finite()) => Ok(()),
            Generator::Inversion(_) => Err(CatalogError::InvalidParameter("inversion center".into())),
            Generator::Rotation(r) => {
                let mut dev: f64 = 0.0;
                for i in 0..5 {
                    for j in 0..5 {
                        let d: f64 = (0..5).map(|k| r[k][i] * r[k][j]).sum();
                        dev = dev.max((d - if i == j { 1.0 } else { 0.0 }).abs());
                    }
                }
                if dev <= 1e-12 {
                    Ok(())
                } else {
                    Err(CatalogError::NotOrthogonal(dev))
                }
            }
        }
    }

    /// Push component jets (any number of chart variables) through the map.
    pub fn apply(&self, x: &[Jet; 5]) -> Result<[Jet; 5], CatalogError> {
        Ok(match self {
            Generator::Translation(v) => std::array::from_fn(|a| x[a].add_scalar(v[a])),
            Generator::Dilation(s) => std::array::from_fn(|a| x[a].scale(*s)),
            Generator::Rotation(r) => std::array::from_fn(|a| {
                let mut y = Jet::zero(x[0].nvars(), x[0].order());
                for b in 0..5 {
                    y.axpy(r[a][b], &x[b]);
                }
                y
            }),
            Generator::Inversion(c) => {
                let d: Vec<Jet> = (0..5).map(|a| x[a].add_scalar(-c[a])).collect();
                let mut s = Jet::zero(x[0].nvars(), x[0].order());
                for da in &d {
                    s.add_mul(da, da);
                }
                let inv = s.recip()?;
                std::array::from_fn(|a| (&d[a] * &inv).add_scalar(c[a]))
            }
        })
    }

    pub fn apply_point(&self, x: [f64; 5]) -> [f64; 5] {
        match self {
            Generator::Translation(v) => std::array::from_fn(|a| x[a] + v[a]),
            Generator::Dilation(s) => std::array::from_fn(|a| s * x[a]),
            Generator::Rotation(r) => std::array::from_fn(|a| (0..5).map(|b| r[a][b] * x[b]).sum()),
            Generator::Inversion(c) => {
                let s: f64 = (0..5).map(|a| (x[a] - c[a]).powi(2)).sum();
                std::array::from_fn(|a| c[a] + (x[a] - c[a]) / s)
            }
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        match self {
            Generator::Translation(v) => write!(f, "tr({})", list(v)),
            Generator::Dilation(s) => write!(f, "dil({s})"),
            Generator::Inversion(c) => write!(f, "inv({})", list(c)),
            Generator::Rotation(r) => write!(f, "rot({})", r.iter().map(|row| list(row)).collect::<Vec<_>>().join(";")),
        }
    }
}

/// Ordered list of conformal generators, applied first to last.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MobiusTransform {
    pub generators: Vec<Generator>,
}

impl MobiusTransform {
    pub fn new(generators: Vec<Generator>) -> Result<Self, CatalogError> {
        for g in &generators {
            g.validate()?;
        }
        Ok(MobiusTransform { generators })
    }

    pub fn identity() -> Self {
        MobiusTransform::default()
    }

    pub fn then(&self, other: &MobiusTransform) -> MobiusTransform {
        let mut generators = self.generators.clone();
        generators.extend(other.generators.iter().cloned());
        MobiusTransform { generators }
    }

    pub fn apply_point(&self, mut x: [f64; 5]) -> [f64; 5] {
        for g in &self.generators {
            x = g.apply_point(x);
        }
        x
    }

    /// Jet of the ambient map itself at `base`, in five variables.
    pub fn outer_jet(&self, base: [f64; 5], order: usize) -> Result<OuterJet, CatalogError> {
        let mut x: [Jet; 5] = std::array::from_fn(|a| Jet::variable(5, order, a, base[a]));
        for g in &self.generators {
            x = g.apply(&x)?;
        }
        Ok(OuterJet { base, comps: x })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Sphere { radius: f64 },
    Ellipsoid { axes: [f64; 5] },
    Torus { major: f64, minor: f64 },
    Graph(GraphPatch),
    Mobius { inner: Box<SurfaceSpec>, transform: MobiusTransform },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceSpec {
    pub family: Family,
    /// ±1: multiplies the chart-orientation normal to obtain the outward one.
    orientation: f64,
}

impl SurfaceSpec {
    fn with_family(family: Family) -> Result<Self, CatalogError> {
        let mut s = SurfaceSpec { family, orientation: 1.0 };
        s.orientation = s.outward_sign()?;
        Ok(s)
    }

    pub fn sphere(radius: f64) -> Result<Self, CatalogError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(CatalogError::InvalidParameter(format!("sphere radius {radius} must be positive")));
        }
        Self::with_family(Family::Sphere { radius })
    }

    pub fn ellipsoid(axes: [f64; 5]) -> Result<Self, CatalogError> {
        if axes.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(CatalogError::InvalidParameter(format!("ellipsoid semi-axes {axes:?} must be positive")));
        }
        Self::with_family(Family::Ellipsoid { axes })
    }

    pub fn torus(major: f64, minor: f64) -> Result<Self, CatalogError> {
        if !(major > minor && minor > 0.0 && major.is_finite()) {
            return Err(CatalogError::InvalidParameter(format!("torus needs R > r > 0, got R={major}, r={minor}")));
        }
        Self::with_family(Family::Torus { major, minor })
    }

    pub fn graph(amplitude: f64) -> Result<Self, CatalogError> {
        if !amplitude.is_finite() {
            return Err(CatalogError::InvalidParameter("graph amplitude".into()));
        }
        Self::with_family(Family::Graph(GraphPatch { amplitude }))
    }

    pub fn flat_patch() -> Self {
        Self::graph(0.0).expect("flat patch is valid")
    }

    pub fn chart(&self) -> Chart {
        match &self.family {
            Family::Sphere { .. } | Family::Ellipsoid { .. } => hyperspherical_chart(),
            Family::Torus { .. } => torus_chart(),
            Family::Graph(_) => graph_chart(),
            Family::Mobius { inner, .. } => inner.chart(),
        }
    }

    /// Euler characteristic; `None` for open patches.
    pub fn euler_char(&self) -> Option<i32> {
        match &self.family {
            Family::Sphere { .. } | Family::Ellipsoid { .. } => Some(2),
            Family::Torus { .. } => Some(0),
            Family::Graph(_) => None,
            Family::Mobius { inner, .. } => inner.euler_char(),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.euler_char().is_some()
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn label(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        match &self.family {
            Family::Sphere { radius } => format!("sphere({radius})"),
            Family::Ellipsoid { axes } => format!("ellipsoid({})", list(axes)),
            Family::Torus { major, minor } => format!("torus({major},{minor})"),
            Family::Graph(g) => format!("graph({})", g.amplitude),
            Family::Mobius { inner, transform } => format!(
                "{}∘{}",
                transform.generators.iter().rev().map(|g| g.to_string()).collect::<Vec<_>>().join("∘"),
                inner.label()
            ),
        }
    }

    /// Jet of the parametrization at `p`.
    pub fn evaluate(&self, p: &ChartPoint, order: usize) -> Result<AmbientJet, CatalogError> {
        if order > MAX_ORDER {
            return Err(CatalogError::UnsupportedOrder(order));
        }
        self.chart().contains(p)?;
        self.evaluate_unchecked(p, order)
    }

    fn evaluate_unchecked(&self, p: &ChartPoint, order: usize) -> Result<AmbientJet, CatalogError> {
        let u: [Jet; 4] = std::array::from_fn(|i| Jet::variable(4, order, i, p.u[i]));
        Ok(match &self.family {
            Family::Sphere { radius } => hyperspherical(&u, [*radius; 5]),
            Family::Ellipsoid { axes } => hyperspherical(&u, *axes),
            Family::Torus { major, minor } => {
                let (c1, s1) = (u[1].cos(), u[1].sin());
                let (c2, s2) = (u[2].cos(), u[2].sin());
                let (c3, s3) = (u[3].cos(), u[3].sin());
                let s12 = &s1 * &s2;
                let omega = [c1, &s1 * &c2, &s12 * &c3, &s12 * &s3];
                let radial = u[0].cos().scale(*minor).add_scalar(*major);
                AmbientJet {
                    x: [
                        &radial * &omega[0],
                        &radial * &omega[1],
                        &radial * &omega[2],
                        &radial * &omega[3],
                        u[0].sin().scale(*minor),
                    ],
                }
            }
            Family::Graph(g) => {
                let mut r2 = Jet::zero(4, order);
                for ui in &u {
                    r2.add_mul(ui, ui);
                }
                let poly = &(&(&u[0].scale(0.5) - &(&u[1] * &u[2]).scale(1.0 / 3.0)) + &(&u[3] * &u[3]).scale(0.25))
                    + &(&(&u[0] * &u[1]) * &u[3]).scale(0.2);
                let f = (&poly.add_scalar(1.0) * &r2.scale(-0.5).exp()).scale(g.amplitude);
                let [a, b, c, d] = u;
                AmbientJet { x: [a, b, c, d, f] }
            }
            Family::Mobius { inner, transform } => {
                let mut x = inner.evaluate_unchecked(p, order)?.x;
                for g in &transform.generators {
                    x = g.apply(&x)?;
                }
                AmbientJet { x }
            }
        })
    }

    pub fn position(&self, p: &ChartPoint) -> Result<[f64; 5], CatalogError> {
        Ok(self.evaluate(p, 0)?.value())
    }

    /// Mid-cell sample grid of the chart, `m` points per axis.
    pub fn sample_points(&self, m: usize) -> Vec<ChartPoint> {
        let ch = self.chart();
        let axis =
            |i: usize| -> Vec<f64> { (0..m).map(|k| ch.lo[i] + (k as f64 + 0.5) * (ch.hi[i] - ch.lo[i]) / m as f64).collect() };
        let ax: [Vec<f64>; 4] = std::array::from_fn(axis);
        let mut pts = Vec::with_capacity(m.pow(4));
        for &a in &ax[0] {
            for &b in &ax[1] {
                for &c in &ax[2] {
                    for &d in &ax[3] {
                        pts.push(ChartPoint { u: [a, b, c, d] });
                    }
                }
            }
        }
        pts
    }

    fn outward_sign(&self) -> Result<f64, CatalogError> {
        let ch = self.chart();
        let (p, reference) = if self.is_closed() {
            let pts = self.sample_points(6);
            let xs: Vec<[f64; 5]> =
                pts.iter().map(|p| self.evaluate_unchecked(p, 0).map(|j| j.value())).collect::<Result<_, _>>()?;
            let mut centroid = [0.0; 5];
            for x in &xs {
                for a in 0..5 {
                    centroid[a] += x[a] / xs.len() as f64;
                }
            }
            let far = (0..xs.len())
                .max_by(|&i, &j| dist2(&xs[i], &centroid).total_cmp(&dist2(&xs[j], &centroid)))
                .unwrap_or(0);
            let dir: [f64; 5] = std::array::from_fn(|a| xs[far][a] - centroid[a]);
            (pts[far], dir)
        } else {
            (ch.center(), [0.0, 0.0, 0.0, 0.0, 1.0])
        };
        let j = self.evaluate_unchecked(&p, 1)?;
        let d: [[f64; 5]; 4] = std::array::from_fn(|i| std::array::from_fn(|a| j.x[a].coeffs()[1 + i]));
        let nrm = crate::shape::cross4(&d);
        let s: f64 = (0..5).map(|a| nrm[a] * reference[a]).sum();
        Ok(if s < 0.0 { -1.0 } else { 1.0 })
    }

    /// Diameter estimate from a sample grid, used for the inversion margin.
    fn sampled_extent(&self, m: usize) -> Result<(Vec<(ChartPoint, [f64; 5])>, f64), CatalogError> {
        let pts = self.sample_points(m);
        let mut out = Vec::with_capacity(pts.len());
        let mut lo = [f64::INFINITY; 5];
        let mut hi = [f64::NEG_INFINITY; 5];
        for p in pts {
            let x = self.evaluate_unchecked(&p, 0)?.value();
            for a in 0..5 {
                lo[a] = lo[a].min(x[a]);
                hi[a] = hi[a].max(x[a]);
            }
            out.push((p, x));
        }
        let diam = (0..5).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt();
        Ok((out, diam))
    }
}

fn dist2(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    (0..5).map(|k| (a[k] - b[k]).powi(2)).sum()
}

fn hyperspherical(u: &[Jet; 4], a: [f64; 5]) -> AmbientJet {
    let (c1, s1) = (u[0].cos(), u[0].sin());
    let (c2, s2) = (u[1].cos(), u[1].sin());
    let (c3, s3) = (u[2].cos(), u[2].sin());
    let (c4, s4) = (u[3].cos(), u[3].sin());
    let s12 = &s1 * &s2;
    let s123 = &s12 * &s3;
    AmbientJet {
        x: [
            c1.scale(a[0]),
            (&s1 * &c2).scale(a[1]),
            (&s12 * &c3).scale(a[2]),
            (&s123 * &c4).scale(a[3]),
            (&s123 * &s4).scale(a[4]),
        ],
    }
}

/// Sample grid size for admissibility checks of inversions.
pub const ADMISSIBILITY_GRID: usize = 16;
/// δ_min as a fraction of the surface diameter.
pub const DELTA_MIN_FRACTION: f64 = 1e-3;
/// Sampling can miss the closest point; demand this multiple of δ_min.
const ADMISSIBILITY_MARGIN: f64 = 2.0;

/// Distance from each inversion center to the surface it inverts, with δ_min.
pub fn inversion_clearances(t: &MobiusTransform, spec: &SurfaceSpec) -> Result<Vec<(f64, f64)>, CatalogError> {
    let (mut samples, _) = spec.sampled_extent(ADMISSIBILITY_GRID)?;
    let mut out = Vec::new();
    let mut applied: Vec<Generator> = Vec::new();
    for g in &t.generators {
        if let Generator::Inversion(c) = g {
            let diam = extent(&samples);
            let delta_min = DELTA_MIN_FRACTION * diam;
            let (p, dmin) = samples
                .iter()
                .map(|(p, x)| (*p, dist2(x, c).sqrt()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap_or((ChartPoint::new([0.0; 4]), f64::INFINITY));
            let (p, dmin) = closest_point(spec, &applied, c, p, dmin)?;
            if dmin < ADMISSIBILITY_MARGIN * delta_min {
                return Err(CatalogError::Inadmissible { center: *c, point: p.u, distance: dmin, delta_min });
            }
            out.push((dmin, delta_min));
        }
        for s in samples.iter_mut() {
            s.1 = g.apply_point(s.1);
        }
        applied.push(g.clone());
    }
    Ok(out)
}

/// Pattern search on the chart from the closest sample, so that centres
/// lying between sample points are still caught.
fn closest_point(
    spec: &SurfaceSpec,
    applied: &[Generator],
    c: &[f64; 5],
    start: ChartPoint,
    d0: f64,
) -> Result<(ChartPoint, f64), CatalogError> {
    let ch = spec.chart();
    let dist = |u: [f64; 4]| -> Result<f64, CatalogError> {
        let mut x = spec.evaluate_unchecked(&ChartPoint::new(u), 0)?.value();
        for g in applied {
            x = g.apply_point(x);
        }
        Ok(dist2(&x, c).sqrt())
    };
    let width: [f64; 4] = std::array::from_fn(|i| ch.hi[i] - ch.lo[i]);
    let mut step = 1.0 / ADMISSIBILITY_GRID as f64;
    let (mut u, mut best) = (start.u, d0);
    while step > 1e-9 {
        let mut moved = false;
        for i in 0..4 {
            for sign in [-1.0, 1.0] {
                let mut v = u;
                v[i] = (v[i] + sign * step * width[i]).clamp(ch.lo[i], ch.hi[i]);
                let d = dist(v)?;
                if d < best {
                    (u, best, moved) = (v, d, true);
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok((ChartPoint::new(u), best))
}

fn extent(samples: &[(ChartPoint, [f64; 5])]) -> f64 {
    let mut lo = [f64::INFINITY; 5];
    let mut hi = [f64::NEG_INFINITY; 5];
    for (_, x) in samples {
        for a in 0..5 {
            lo[a] = lo[a].min(x[a]);
            hi[a] = hi[a].max(x[a]);
        }
    }
    (0..5).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt()
}

/// Wrap `spec` so that evaluation composes the generators of `t` in order.
pub fn mobius_apply(t: &MobiusTransform, spec: &SurfaceSpec) -> Result<SurfaceSpec, CatalogError> {
    if t.generators.is_empty() {
        return Ok(spec.clone());
    }
    for g in &t.generators {
        g.validate()?;
    }
    inversion_clearances(t, spec)?;
    let (inner, transform) = match &spec.family {
        Family::Mobius { inner, transform } => (inner.clone(), transform.then(t)),
        _ => (Box::new(spec.clone()), t.clone()),
    };
    SurfaceSpec::with_family(Family::Mobius { inner, transform })
}

/// One-dimensional rule on the interval of an axis.
pub fn axis_rule(kind: AxisKind, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    match kind {
        AxisKind::Periodic => {
            let h = (hi - lo) / n as f64;
            (0..n).map(|k| (lo + k as f64 * h, h)).collect()
        }
        AxisKind::Polar | AxisKind::Interval => {
            let gl = gauss_quad::GaussLegendre::new(n.max(2)).expect("Gauss–Legendre degree ≥ 2");
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            let mut r: Vec<(f64, f64)> = gl.as_node_weight_pairs().iter().map(|&(x, w)| (mid + half * x, half * w)).collect();
            r.sort_by(|a, b| a.0.total_cmp(&b.0));
            r
        }
    }
}

/// Tensor-product quadrature on a chart, kept factored per axis.
#[derive(Clone, Debug)]
pub struct ProductRule {
    pub axes: [Vec<(f64, f64)>; 4],
}

impl ProductRule {
    pub fn for_chart(chart: &Chart, n: usize) -> Result<Self, CatalogError> {
        if n < 4 {
            return Err(CatalogError::GridTooSmall(n));
        }
        Ok(ProductRule { axes: std::array::from_fn(|i| axis_rule(chart.kinds[i], chart.lo[i], chart.hi[i], n)) })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `k`-th node (row-major in the axes) and its weight.
    pub fn node(&self, k: usize) -> (ChartPoint, f64) {
        let mut rem = k;
        let mut u = [0.0; 4];
        let mut w = 1.0;
        for i in (0..4).rev() {
            let m = self.axes[i].len();
            let (x, wi) = self.axes[i][rem % m];
            rem /= m;
            u[i] = x;
            w *= wi;
        }
        (ChartPoint { u }, w)
    }
}

/// Quadrature nodes and weights on the chart box; the area element √det g
/// is not included.
pub fn chart_sample_plan(spec: &SurfaceSpec, n: usize) -> Result<Vec<(ChartPoint, f64)>, CatalogError> {
    let rule = ProductRule::for_chart(&spec.chart(), n)?;
    Ok((0..rule.len()).map(|k| rule.node(k)).collect())
}

fn parse_list(s: &str) -> Result<Vec<f64>, CatalogError> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| CatalogError::Parse(s.to_string()))).collect()
}

/// Parse `sphere:ρ`, `ellipsoid:a1,…,a5`, `torus:R,r`, `graph:A` or `flat`.
pub fn parse_surface(s: &str) -> Result<SurfaceSpec, CatalogError> {
    let (name, args) = s.split_once(':').unwrap_or((s, ""));
    let v = if args.is_empty() { Vec::new() } else { parse_list(args)? };
    match (name.trim(), v.as_slice()) {
        ("sphere", [r]) => SurfaceSpec::sphere(*r),
        ("sphere", []) => SurfaceSpec::sphere(1.0),
        ("ellipsoid", [a, b, c, d, e]) => SurfaceSpec::ellipsoid([*a, *b, *c, *d, *e]),
        ("torus", [r1, r2]) => SurfaceSpec::torus(*r1, *r2),
        ("graph", [a]) => SurfaceSpec::graph(*a),
        ("flat", []) => Ok(SurfaceSpec::flat_patch()),
        _ => Err(CatalogError::Parse(s.to_string())),
    }
}

/// Parse `inv:c1,…,c5`, `dil:s`, `tr:v1,…,v5` or `rot:i,j,angle` (a plane rotation).
pub fn parse_generator(s: &str) -> Result<Generator, CatalogError> {
    let (name, args) = s.split_once(':').ok_or_else(|| CatalogError::Parse(s.to_string()))?;
    let v = parse_list(args)?;
    let g = match (name.trim(), v.as_slice()) {
        ("inv", [a, b, c, d, e]) => Generator::Inversion([*a, *b, *c, *d, *e]),
        ("tr", [a, b, c, d, e]) => Generator::Translation([*a, *b, *c, *d, *e]),
        ("dil", [s]) => Generator::Dilation(*s),
        ("rot", [i, j, angle]) if *i >= 0.0 && *j >= 0.0 && (*i as usize) < 5 && (*j as usize) < 5 && i != j => {
            plane_rotation(*i as usize, *j as usize, *angle)
        }
        _ => return Err(CatalogError::Parse(s.to_string())),
    };
    g.validate()?;
    Ok(g)
}

pub fn plane_rotation(i: usize, j: usize, angle: f64) -> Generator {
    let mut r = [[0.0; 5]; 5];
    for (k, row) in r.iter_mut().enumerate() {
        row[k] = 1.0;
    }
    let (s, c) = angle.sin_cos();
    r[i][i] = c;
    r[j][j] = c;
    r[i][j] = -s;
    r[j][i] = s;
    Generator::Rotation(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(u: [f64; 4]) -> ChartPoint {
        ChartPoint::new(u)
    }

    fn norm(x: &[f64; 5]) -> f64 {
        x.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    #[test]
    fn sphere_points_have_unit_norm() {
        let s = SurfaceSpec::sphere(1.0).unwrap();
        for p in s.sample_points(4) {
            assert!((norm(&s.position(&p).unwrap()) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn torus_at_quarter_turn() {
        let t = SurfaceSpec::torus(2.0, 1.0).unwrap();
        let x = t.position(&pt([PI / 2.0, PI / 2.0, PI / 2.0, 0.0])).unwrap();
        assert!((norm(&x) - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn round_ellipsoid_is_the_sphere() {
        let e = SurfaceSpec::ellipsoid([1.0; 5]).unwrap();
        let s = SurfaceSpec::sphere(1.0).unwrap();
        let p = pt([0.4, 1.1, 2.0, 5.0]);
        assert!(e.evaluate(&p, 4).unwrap().max_abs_diff(&s.evaluate(&p, 4).unwrap()) < 1e-14);
    }

    #[test]
    fn equatorial_sphere_frame_is_orthonormal() {
        let s = SurfaceSpec::sphere(1.0).unwrap();
        let j = s.evaluate(&pt([PI / 2.0; 4]), 1).unwrap();
        for i in 0..4 {
            for k in 0..4 {
                let d: f64 = (0..5).map(|a| j.x[a].coeffs()[1 + i] * j.x[a].coeffs()[1 + k]).sum();
                assert!((d - if i == k { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn flat_patch_has_no_curvature_terms() {
        let f = SurfaceSpec::flat_patch();
        let j = f.evaluate(&pt([0.2, -0.3, 0.5, 0.1]), 2).unwrap();
        for a in 0..5 {
            assert!(j.x[a].coeffs()[5..].iter().all(|c| *c == 0.0));
        }
    }

    #[test]
    fn rejects_invalid_parameters_and_points() {
        assert!(SurfaceSpec::torus(1.0, 2.0).is_err());
        assert!(SurfaceSpec::sphere(-1.0).is_err());
        assert!(SurfaceSpec::ellipsoid([1.0, 0.0, 1.0, 1.0, 1.0]).is_err());
        let s = SurfaceSpec::sphere(1.0).unwrap();
        assert!(matches!(s.evaluate(&pt([0.0, 1.0, 1.0, 1.0]), 1), Err(CatalogError::OutsideDomain { index: 0, .. })));
        assert!(matches!(s.evaluate(&pt([1.0; 4]), 7), Err(CatalogError::UnsupportedOrder(7))));
        assert!(Generator::Dilation(-1.0).validate().is_err());
        let mut r = [[0.0; 5]; 5];
        r[0][0] = 2.0;
        assert!(matches!(Generator::Rotation(r).validate(), Err(CatalogError::NotOrthogonal(_))));
    }

    #[test]
    fn torus_finite_difference_oracle() {
        let t = SurfaceSpec::torus(2.0, 1.0).unwrap();
        let p = pt([PI / 2.0, PI / 2.0, PI / 2.0, 0.0]);
        let j = t.evaluate(&p, 3).unwrap();
        let f = |u: [f64; 4]| t.position(&pt(u)).unwrap();
        // Four-point central differences for first derivatives, two steps, Richardson.
        let d1 = |i: usize, h: f64| -> [f64; 5] {
            let sh = |s: f64| {
                let mut u = p.u;
                u[i] += s;
                f(u)
            };
            let (a, b, c, d) = (sh(2.0 * h), sh(h), sh(-h), sh(-2.0 * h));
            std::array::from_fn(|k| (-a[k] + 8.0 * b[k] - 8.0 * c[k] + d[k]) / (12.0 * h))
        };
        for i in 0..4 {
            let (x, y) = (d1(i, 1e-2), d1(i, 5e-3));
            let mut alpha = [0u8; 4];
            alpha[i] = 1;
            let exact = j.derivative(&alpha);
            for k in 0..5 {
                let fd = (16.0 * y[k] - x[k]) / 15.0;
                assert!((fd - exact[k]).abs() < 1e-8, "d{i} comp {k}: {fd} vs {}", exact[k]);
            }
        }
        // Mixed third derivative ∂_u∂_ψ∂_φ by nested central differences.
        let third = |h: f64| -> [f64; 5] {
            let mut acc = [0.0; 5];
            for (s0, s1, s2) in itertools_signs() {
                let mut u = p.u;
                u[0] += s0 * h;
                u[1] += s1 * h;
                u[3] += s2 * h;
                let x = f(u);
                for k in 0..5 {
                    acc[k] += s0 * s1 * s2 * x[k];
                }
            }
            acc.map(|v| v / (8.0 * h * h * h))
        };
        let (a, b) = (third(1e-2), third(5e-3));
        let exact = j.derivative(&[1, 1, 0, 1]);
        for k in 0..5 {
            assert!(((4.0 * b[k] - a[k]) / 3.0 - exact[k]).abs() < 1e-8);
        }
    }

    fn itertools_signs() -> Vec<(f64, f64, f64)> {
        let s = [1.0, -1.0];
        let mut v = Vec::new();
        for a in s {
            for b in s {
                for c in s {
                    v.push((a, b, c));
                }
            }
        }
        v
    }

    #[test]
    fn mobius_identity_and_dilation() {
        let s = SurfaceSpec::sphere(1.0).unwrap();
        assert_eq!(mobius_apply(&MobiusTransform::identity(), &s).unwrap(), s);
        let t = MobiusTransform::new(vec![Generator::Dilation(2.5)]).unwrap();
        let d = mobius_apply(&t, &s).unwrap();
        let s2 = SurfaceSpec::sphere(2.5).unwrap();
        let p = pt([0.7, 1.9, 0.4, 3.3]);
        assert!(d.evaluate(&p, 3).unwrap().max_abs_diff(&s2.evaluate(&p, 3).unwrap()) < 1e-14);
    }

    #[test]
    fn inversion_of_torus_is_admissible() {
        let t = SurfaceSpec::torus(2.0, 1.0).unwrap();
        let inv = MobiusTransform::new(vec![Generator::Inversion([0.0, 0.0, 0.0, 0.0, 6.0])]).unwrap();
        let cl = inversion_clearances(&inv, &t).unwrap();
        assert!(cl[0].0 >= 6.0 - 5f64.sqrt() - 1e-9);
        assert!(cl[0].0 > cl[0].1);
        let on_surface = t.position(&t.sample_points(ADMISSIBILITY_GRID)[1234]).unwrap();
        let bad = MobiusTransform::new(vec![Generator::Inversion(on_surface)]).unwrap();
        assert!(matches!(mobius_apply(&bad, &t), Err(CatalogError::Inadmissible { .. })));
    }

    #[test]
    fn inversion_centres_between_samples_are_rejected() {
        let s = SurfaceSpec::sphere(1.0).unwrap();
        for c in [[0.0, 0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 0.6, 0.8], [0.0, 0.0, 0.0, 0.0, -1.0005]] {
            let t = MobiusTransform::new(vec![Generator::Inversion(c)]).unwrap();
            assert!(matches!(mobius_apply(&t, &s), Err(CatalogError::Inadmissible { .. })), "{c:?}");
        }
        // The second centre is checked against the dilated surface.
        let t = MobiusTransform::new(vec![Generator::Dilation(2.0), Generator::Inversion([0.0, 0.0, 0.0, 0.0, 2.0])]).unwrap();
        assert!(mobius_apply(&t, &s).is_err());
        let ok = MobiusTransform::new(vec![Generator::Inversion([0.0, 0.0, 0.0, 0.0, 1.1])]).unwrap();
        assert!(mobius_apply(&ok, &s).is_ok());
    }

    #[test]
    fn mobius_composition_is_associative() {
        let e = SurfaceSpec::ellipsoid([1.0, 1.3, 0.8, 1.1, 0.9]).unwrap();
        let t1 = MobiusTransform::new(vec![Generator::Inversion([0.0, 0.0, 0.0, 0.0, 6.0]), plane_rotation(0, 2, 0.3)]).unwrap();
        let t2 = MobiusTransform::new(vec![Generator::Dilation(1.7), Generator::Translation([0.1, 0.0, -0.2, 0.0, 0.3])]).unwrap();
        let a = mobius_apply(&t2, &mobius_apply(&t1, &e).unwrap()).unwrap();
        let b = mobius_apply(&t1.then(&t2), &e).unwrap();
        for p in e.sample_points(3) {
            let (x, y) = (a.evaluate(&p, 2).unwrap(), b.evaluate(&p, 2).unwrap());
            assert!(x.max_abs_diff(&y) < 1e-12);
        }
    }

    #[test]
    fn outer_jet_composition_matches_direct_pushforward() {
        let t = SurfaceSpec::torus(2.0, 1.0).unwrap();
        let mut c = [0.0; 5];
        let p = pt([0.9, 1.2, 0.7, 2.1]);
        let x0 = t.position(&p).unwrap();
        // Center at distance 2 from the base value.
        c[4] = x0[4] + 2.0;
        c[..4].copy_from_slice(&x0[..4]);
        let m = MobiusTransform::new(vec![Generator::Inversion(c)]).unwrap();
        let inner = t.evaluate(&p, 4).unwrap();
        let outer = m.outer_jet(inner.value(), 4).unwrap();
        let composed = crate::jets::jet_compose(&outer, &inner).unwrap();
        let direct = mobius_apply(&m, &t).unwrap().evaluate(&p, 4).unwrap();
        assert!(composed.max_abs_diff(&direct) < 1e-10);
        // Independent closed form for the value: c + (x − c)/|x − c|².
        let v = m.apply_point(x0);
        for a in 0..5 {
            assert!((composed.x[a].value() - v[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn quadrature_rules() {
        let t = SurfaceSpec::torus(2.0, 1.0).unwrap();
        let plan = chart_sample_plan(&t, 8).unwrap();
        let total: f64 = plan.iter().map(|(_, w)| w).sum();
        assert!((total - t.chart().volume()).abs() < 1e-12 * total);
        let r = axis_rule(AxisKind::Polar, 0.0, PI, 12);
        let i2: f64 = r.iter().map(|(x, w)| w * x.sin().powi(2)).sum();
        let i1: f64 = r.iter().map(|(x, w)| w * x.sin()).sum();
        assert!((i2 * i1 - PI).abs() < 1e-10);
        assert!(r.iter().all(|(x, _)| *x > 0.0 && *x < PI));
        assert!(matches!(chart_sample_plan(&t, 3), Err(CatalogError::GridTooSmall(3))));
    }

    #[test]
    fn parses_descriptions() {
        assert_eq!(parse_surface("sphere:2").unwrap(), SurfaceSpec::sphere(2.0).unwrap());
        assert_eq!(parse_surface("torus:2,1").unwrap(), SurfaceSpec::torus(2.0, 1.0).unwrap());
        assert!(parse_surface("cube:1").is_err());
        assert_eq!(parse_generator("dil:1.7").unwrap(), Generator::Dilation(1.7));
        assert!(parse_generator("rot:0,0,1").is_err());
    }
}
