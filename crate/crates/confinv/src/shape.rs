//! First and second fundamental forms, covariant derivatives and
//! Gauss-equation curvature at a chart point.

use crate::jets::{AmbientJet, JetError};
use crate::tensor::{contract, Field, JetGeometry};
use nalgebra::Matrix4;
use thiserror::Error;

pub type Mat4 = [[f64; 4]; 4];
pub type Ten3 = [[[f64; 4]; 4]; 4];
pub type Ten4 = [[[[f64; 4]; 4]; 4]; 4];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("not an immersion at this point (det g = {0:e})")]
    NotImmersion(f64),
    #[error("jet of order {got} given, {needed} required")]
    InsufficientOrder { needed: usize, got: usize },
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// Generalised cross product of four vectors in ℝ⁵: the vector `N` with
/// `det[v₀; v₁; v₂; v₃; N] = |N|²` and `|N| = √det(v·vᵀ)`.
pub fn cross4(v: &[[f64; 5]; 4]) -> [f64; 5] {
    std::array::from_fn(|a| {
        let cols: Vec<usize> = (0..5).filter(|&c| c != a).collect();
        let m = Matrix4::from_fn(|i, c| v[i][cols[c]]);
        let s = if a % 2 == 0 { 1.0 } else { -1.0 };
        s * m.determinant()
    })
}

fn to_na(m: &Mat4) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| m[i][j])
}

fn from_na(m: &Matrix4<f64>) -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..4).map(|k| a[i][k] * b[k][j]).sum()))
}

fn trace(a: &Mat4) -> f64 {
    (0..4).map(|i| a[i][i]).sum()
}

fn dot5(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    (0..5).map(|k| a[k] * b[k]).sum()
}

fn unit(i: usize) -> [u8; 4] {
    let mut a = [0u8; 4];
    a[i] += 1;
    a
}

fn multi(ix: &[usize]) -> [u8; 4] {
    let mut a = [0u8; 4];
    for &i in ix {
        a[i] += 1;
    }
    a
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameData {
    pub dphi: [[f64; 5]; 4],
    pub g: Mat4,
    pub g_inv: Mat4,
    pub sqrt_det_g: f64,
    pub n: [f64; 5],
}

impl FrameData {
    /// Raise the first index of a covariant 2-tensor: `(g⁻¹ a)^i_j`.
    pub fn raise(&self, a: &Mat4) -> Mat4 {
        mat_mul(&self.g_inv, a)
    }

    pub fn upper(&self, a: &Mat4) -> Mat4 {
        mat_mul(&mat_mul(&self.g_inv, a), &self.g_inv)
    }

    /// Full contraction `a_{ij} b_{kl} g^{ik} g^{jl}`.
    pub fn inner2(&self, a: &Mat4, b: &Mat4) -> f64 {
        let au = self.upper(a);
        (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| au[i][j] * b[i][j]).sum()
    }

    /// Tangent vector `v^i ∂_iΦ` in ℝ⁵.
    pub fn push(&self, v: &[f64; 4]) -> [f64; 5] {
        std::array::from_fn(|a| (0..4).map(|i| v[i] * self.dphi[i][a]).sum())
    }
}

/// Frame at the jet's base point; the chart normal is multiplied by `orientation`.
pub fn frame_at(j: &AmbientJet, orientation: f64) -> Result<FrameData, ShapeError> {
    if j.order() < 1 {
        return Err(ShapeError::InsufficientOrder { needed: 1, got: j.order() });
    }
    let dphi: [[f64; 5]; 4] = std::array::from_fn(|i| j.derivative(&unit(i)));
    let g: Mat4 = std::array::from_fn(|i| std::array::from_fn(|k| dot5(&dphi[i], &dphi[k])));
    let gm = to_na(&g);
    let det = gm.determinant();
    let scale = trace(&g).powi(4).max(f64::MIN_POSITIVE);
    if !(det > 1e-60 * scale) || !det.is_finite() {
        return Err(ShapeError::NotImmersion(det));
    }
    let g_inv = from_na(&gm.try_inverse().ok_or(ShapeError::NotImmersion(det))?);
    let sqrt_det_g = det.sqrt();
    let c = cross4(&dphi);
    let n = c.map(|x| orientation * x / sqrt_det_g);
    Ok(FrameData { dphi, g, g_inv, sqrt_det_g, n })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeTensors {
    pub h: Mat4,
    pub mean: f64,
    pub h0: Mat4,
    /// `Γ^k_{ij}` as `gamma[k][i][j]`.
    pub gamma: Ten3,
    /// `∇_c h_{ab}` as `grad_h[c][a][b]`.
    pub grad_h: Ten3,
    pub grad_mean: [f64; 4],
    pub lap_mean: Option<f64>,
    pub lap_h: Option<Mat4>,
    /// `X^j = ∇^j(H n) + 2H h₀^{jk} ∂_kΦ`.
    pub x_field: [[f64; 5]; 4],
}

/// Value-level fundamental forms and `∇h` from a jet of order ≥ 3.
pub fn shape_order3(j: &AmbientJet, f: &FrameData) -> Result<ShapeTensors, ShapeError> {
    if j.order() < 3 {
        return Err(ShapeError::InsufficientOrder { needed: 3, got: j.order() });
    }
    let mut phi2 = [[[0.0; 5]; 4]; 4];
    for i in 0..4 {
        for k in i..4 {
            let v = j.derivative(&multi(&[i, k]));
            phi2[i][k] = v;
            phi2[k][i] = v;
        }
    }
    let mut phi3 = [[[[0.0; 5]; 4]; 4]; 4];
    for a in 0..4 {
        for b in a..4 {
            for c in b..4 {
                let v = j.derivative(&multi(&[a, b, c]));
                for (x, y, z) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
                    phi3[x][y][z] = v;
                }
            }
        }
    }
    let h: Mat4 = std::array::from_fn(|a| std::array::from_fn(|b| dot5(&f.n, &phi2[a][b])));
    let mut first = [[[0.0; 4]; 4]; 4];
    for l in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                first[l][a][b] = dot5(&f.dphi[l], &phi2[a][b]);
            }
        }
    }
    let mut gamma = [[[0.0; 4]; 4]; 4];
    for k in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                gamma[k][a][b] = (0..4).map(|l| f.g_inv[k][l] * first[l][a][b]).sum();
            }
        }
    }
    let mut grad_h = [[[0.0; 4]; 4]; 4];
    for c in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                let mut v = dot5(&f.n, &phi3[a][b][c]);
                for l in 0..4 {
                    v -= gamma[l][a][b] * h[l][c] + gamma[l][c][a] * h[l][b] + gamma[l][c][b] * h[a][l];
                }
                grad_h[c][a][b] = v;
            }
        }
    }
    Ok(assemble(f, h, gamma, grad_h, None, None))
}

fn assemble(f: &FrameData, h: Mat4, gamma: Ten3, grad_h: Ten3, lap_mean: Option<f64>, lap_h: Option<Mat4>) -> ShapeTensors {
    let mean = 0.25 * f.inner2(&f.g, &h);
    let h0: Mat4 = std::array::from_fn(|a| std::array::from_fn(|b| h[a][b] - mean * f.g[a][b]));
    let grad_mean: [f64; 4] = std::array::from_fn(|c| {
        0.25 * (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| f.g_inv[a][b] * grad_h[c][a][b]).sum::<f64>()
    });
    let up_grad: [f64; 4] = std::array::from_fn(|j| (0..4).map(|k| f.g_inv[j][k] * grad_mean[k]).sum());
    let hu = f.upper(&h);
    let x_field: [[f64; 5]; 4] = std::array::from_fn(|jj| {
        let v: [f64; 4] = std::array::from_fn(|l| mean * (hu[jj][l] - 2.0 * mean * f.g_inv[jj][l]));
        let t = f.push(&v);
        std::array::from_fn(|a| up_grad[jj] * f.n[a] + t[a])
    });
    ShapeTensors { h, mean, h0, gamma, grad_h, grad_mean, lap_mean, lap_h, x_field }
}

/// Full shape data including `ΔH` and `Δh`, from a jet of order ≥ 4.
pub fn shape_at(j: &AmbientJet, orientation: f64) -> Result<(FrameData, ShapeTensors), ShapeError> {
    if j.order() < 4 {
        return Err(ShapeError::InsufficientOrder { needed: 4, got: j.order() });
    }
    let f = frame_at(j, orientation)?;
    let s = shape_order3(j, &f)?;
    let geo = JetGeometry::new(&j.truncate(4), orientation)?;
    let lap_mean = geo.laplacian(&Field::scalar(geo.mean.clone())).c[0].value();
    let lh = geo.laplacian(&geo.h);
    let lap_h: Mat4 = std::array::from_fn(|a| std::array::from_fn(|b| lh.at(&[a, b]).value()));
    Ok((f.clone(), assemble(&f, s.h, s.gamma, s.grad_h, Some(lap_mean), Some(lap_h))))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureData {
    pub riemann: Ten4,
    pub ricci: Mat4,
    pub scalar: f64,
    pub schouten: Mat4,
    pub weyl: Ten4,
    /// `E^{ij}`, indices raised.
    pub einstein: Mat4,
}

/// Kulkarni–Nomizu product `(a ⊙ b)_{ijkl}`.
fn kulkarni_nomizu(a: &Mat4, b: &Mat4) -> Ten4 {
    let mut r = [[[[0.0; 4]; 4]; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    r[i][j][k][l] = a[i][k] * b[j][l] + a[j][l] * b[i][k] - a[i][l] * b[j][k] - a[j][k] * b[i][l];
                }
            }
        }
    }
    r
}

pub fn curvature_at(s: &ShapeTensors, f: &FrameData) -> CurvatureData {
    let riemann = {
        let mut r = kulkarni_nomizu(&s.h, &s.h);
        r.iter_mut().flatten().flatten().flatten().for_each(|x| *x *= 0.5);
        r
    };
    let ricci: Mat4 = std::array::from_fn(|j| {
        std::array::from_fn(|l| {
            (0..4).flat_map(|i| (0..4).map(move |k| (i, k))).map(|(i, k)| f.g_inv[i][k] * riemann[i][j][k][l]).sum()
        })
    });
    let scalar = f.inner2(&f.g, &ricci);
    let schouten: Mat4 = std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (ricci[i][j] - scalar / 6.0 * f.g[i][j])));
    let kn = kulkarni_nomizu(&schouten, &f.g);
    let mut weyl = riemann;
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    weyl[i][j][k][l] -= kn[i][j][k][l];
                }
            }
        }
    }
    let e_lower: Mat4 = std::array::from_fn(|i| std::array::from_fn(|j| ricci[i][j] - 0.5 * scalar * f.g[i][j]));
    let einstein = f.upper(&e_lower);
    CurvatureData { riemann, ricci, scalar, schouten, weyl, einstein }
}

/// Raise every index of a covariant 4-tensor.
fn raise4(t: &Ten4, gi: &Mat4) -> Ten4 {
    let mut cur = *t;
    for slot in 0..4 {
        let mut next = [[[[0.0; 4]; 4]; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let mut idx = [i, j, k, l];
                        let free = idx[slot];
                        let mut s = 0.0;
                        for m in 0..4 {
                            idx[slot] = m;
                            s += gi[free][m] * cur[idx[0]][idx[1]][idx[2]][idx[3]];
                        }
                        next[i][j][k][l] = s;
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

pub fn norm_sq4(t: &Ten4, gi: &Mat4) -> f64 {
    let up = raise4(t, gi);
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    s += up[i][j][k][l] * t[i][j][k][l];
                }
            }
        }
    }
    s
}

pub fn norm_sq3(t: &Ten3, gi: &Mat4) -> f64 {
    let mut s = 0.0;
    for c in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                let mut up = 0.0;
                for x in 0..4 {
                    for y in 0..4 {
                        for z in 0..4 {
                            up += gi[c][x] * gi[a][y] * gi[b][z] * t[x][y][z];
                        }
                    }
                }
                s += up * t[c][a][b];
            }
        }
    }
    s
}

/// The pointwise scalar densities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantVector {
    pub grad_h_sq: f64,
    pub grad_mean_sq: f64,
    pub tr_h4: f64,
    pub h_norm4: f64,
    pub mean_tr_h3: f64,
    pub mean2_h2: f64,
    pub mean4: f64,
    pub det_h: f64,
    pub h0_norm4: f64,
    pub tr_h0_4: f64,
    pub weyl_sq: f64,
    pub ric_sq: f64,
    pub scalar_r: f64,
    /// `6 det h − ¼|W|² − ⅙ΔR`; needs `ΔR`, so absent below order 4.
    pub q: Option<f64>,
}

pub const INVARIANT_NAMES: [&str; 14] = [
    "|∇h|²", "|∇H|²", "Tr h⁴", "|h|⁴", "H Tr h³", "H²|h|²", "H⁴", "det h", "|h₀|⁴", "Tr h₀⁴", "|W|²", "Ric²", "R", "Q",
];

impl InvariantVector {
    pub fn as_array(&self) -> [f64; 14] {
        [
            self.grad_h_sq,
            self.grad_mean_sq,
            self.tr_h4,
            self.h_norm4,
            self.mean_tr_h3,
            self.mean2_h2,
            self.mean4,
            self.det_h,
            self.h0_norm4,
            self.tr_h0_4,
            self.weyl_sq,
            self.ric_sq,
            self.scalar_r,
            self.q.unwrap_or(f64::NAN),
        ]
    }

    /// The seven densities of the general family, in coefficient order.
    pub fn seven(&self) -> [f64; 7] {
        [self.grad_h_sq, self.grad_mean_sq, self.tr_h4, self.h_norm4, self.mean_tr_h3, self.mean2_h2, self.mean4]
    }
}

/// `ΔR` from `R = 16H² − |h|²` and the Laplacians of `H` and `h`.
pub fn lap_scalar_r(s: &ShapeTensors, f: &FrameData) -> Option<f64> {
    let lh = s.lap_h.as_ref()?;
    let lm = s.lap_mean?;
    let gm2: f64 = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| f.g_inv[a][b] * s.grad_mean[a] * s.grad_mean[b]).sum();
    let gh2 = norm_sq3(&s.grad_h, &f.g_inv);
    Some(32.0 * (gm2 + s.mean * lm) - 2.0 * (gh2 + f.inner2(&s.h, lh)))
}

pub fn invariants_at(s: &ShapeTensors, c: &CurvatureData, f: &FrameData) -> InvariantVector {
    let sh = f.raise(&s.h);
    let sh2 = mat_mul(&sh, &sh);
    let sh3 = mat_mul(&sh2, &sh);
    let sh4 = mat_mul(&sh3, &sh);
    let h2 = trace(&sh2);
    let m = s.mean;
    let s0 = f.raise(&s.h0);
    let s02 = mat_mul(&s0, &s0);
    let h02 = trace(&s02);
    let grad_mean_sq: f64 =
        (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| f.g_inv[a][b] * s.grad_mean[a] * s.grad_mean[b]).sum();
    let weyl_sq = norm_sq4(&c.weyl, &f.g_inv);
    let det_h = to_na(&sh).determinant();
    let q = lap_scalar_r(s, f).map(|lr| 6.0 * det_h - 0.25 * weyl_sq - lr / 6.0);
    InvariantVector {
        grad_h_sq: norm_sq3(&s.grad_h, &f.g_inv),
        grad_mean_sq,
        tr_h4: trace(&sh4),
        h_norm4: h2 * h2,
        mean_tr_h3: m * trace(&sh3),
        mean2_h2: m * m * h2,
        mean4: m.powi(4),
        det_h,
        h0_norm4: h02 * h02,
        tr_h0_4: trace(&mat_mul(&s02, &s02)),
        weyl_sq,
        ric_sq: f.inner2(&c.ricci, &c.ricci),
        scalar_r: c.scalar,
        q,
    }
}

/// Densities from an order-3 jet (no `Q`), plus `√det g`.
pub fn densities_at(j: &AmbientJet, orientation: f64) -> Result<(InvariantVector, f64), ShapeError> {
    let f = frame_at(j, orientation)?;
    let s = shape_order3(j, &f)?;
    let c = curvature_at(&s, &f);
    Ok((invariants_at(&s, &c, &f), f.sqrt_det_g))
}

/// Same data with the normal reversed, which maps `h ↦ −h`.
pub fn flip_orientation(s: &ShapeTensors) -> ShapeTensors {
    let neg2 = |m: &Mat4| m.map(|r| r.map(|x| -x));
    ShapeTensors {
        h: neg2(&s.h),
        mean: -s.mean,
        h0: neg2(&s.h0),
        gamma: s.gamma,
        grad_h: s.grad_h.map(|m| m.map(|r| r.map(|x| -x))),
        grad_mean: s.grad_mean.map(|x| -x),
        lap_mean: s.lap_mean.map(|x| -x),
        lap_h: s.lap_h.as_ref().map(neg2),
        x_field: s.x_field.map(|v| v.map(|x| -x)),
    }
}

/// Pointwise divergence-level quantities from a jet of order ≥ 4.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderData {
    pub lap_r: f64,
    pub lap_mean: f64,
    pub lap_h_sq: f64,
    pub lap_mean_sq: f64,
    /// `h^{ij} Δh_{ij}`.
    pub h_lap_h: f64,
    /// `h^{ij} ∇_{ij} H`.
    pub h_hess_mean: f64,
    /// `∇_{ij}(h^{ij}H − 4H²g^{ij})`.
    pub div2_hh: f64,
    /// `∇_{cd}(h^{cd}H)`.
    pub div2_h_mean: f64,
    /// Mean curvature flux: `(ΔH + |h|²H − 8H³) n` and `∇_j(∇^jH⃗ − 2(H²g^{jk} − Hh^{jk})∂_kΦ)`.
    pub flux_lhs: [f64; 5],
    pub flux_rhs: [f64; 5],
    /// Einstein tensor: `E^{ij}h_{ij} n` and `∇_j(E^{ij}∂_iΦ)`.
    pub einstein_lhs: [f64; 5],
    pub einstein_rhs: [f64; 5],
    /// `∇_j E^{ij}` (lowered).
    pub einstein_div: [f64; 4],
    /// Local curvature scale `max(1, |h|⁴)` used to normalise residuals.
    pub scale: f64,
}

pub fn second_order_at(j: &AmbientJet, orientation: f64) -> Result<SecondOrderData, ShapeError> {
    if j.order() < 4 {
        return Err(ShapeError::InsufficientOrder { needed: 4, got: j.order() });
    }
    let geo = JetGeometry::new(&j.truncate(4), orientation)?;
    let hm = Field::scalar(geo.mean.clone());
    let h_sq = contract("ab,cd,ac,bd->", &[&geo.h, &geo.h, &geo.ginv, &geo.ginv]);
    let r = Field::scalar(&geo.mean * &geo.mean * 16.0 - &h_sq.c[0]);
    let val = |f: &Field| f.c[0].value();
    let lap_r = val(&geo.laplacian(&r));
    let lap_mean = val(&geo.laplacian(&hm));
    let lap_h_sq = val(&geo.laplacian(&h_sq));
    let mean_sq = Field::scalar(&geo.mean * &geo.mean);
    let lap_mean_sq = val(&geo.laplacian(&mean_sq));
    let h_up = contract("ac,bd,cd->ab", &[&geo.ginv, &geo.ginv, &geo.h]);
    let h_lap_h = val(&contract("ab,ab->", &[&h_up, &geo.laplacian(&geo.h)]));
    let hess = geo.nabla(&geo.nabla(&hm));
    let h_hess_mean = val(&contract("ab,ab->", &[&h_up, &hess]));
    // Covariant tensor h_{ij}H − 4H²g_{ij}; raising commutes with ∇.
    let t1 = geo.h.mul_scalar(&geo.mean);
    let t2 = t1.sub(&geo.g.mul_scalar(&(&geo.mean * &geo.mean * 4.0)));
    let dd = |t: &Field| val(&contract("ia,jb,ijab->", &[&geo.ginv, &geo.ginv, &geo.nabla(&geo.nabla(t))]));
    let div2_hh = dd(&t2);
    let div2_h_mean = dd(&t1);
    let v = |x: &crate::jets::Jet| x.value();
    let h2v = v(&h_sq.c[0]);
    let mv = v(&geo.mean);
    let nval: [f64; 5] = std::array::from_fn(|a| v(&geo.n[a]));
    let flux_lhs = nval.map(|x| (lap_mean + h2v * mv - 8.0 * mv.powi(3)) * x);
    // Y_j = ∂_j(H n) − 2(H² ∂_jΦ − H h_j^k ∂_kΦ), per ambient component.
    let h_mixed = contract("jl,lk->jk", &[&geo.h, &geo.ginv]);
    let y: [Field; 5] = std::array::from_fn(|a| {
        let hn = Field::scalar(&geo.mean * &geo.n[a]);
        let d_hn = geo.nabla(&hn);
        let tan = contract("jk,k->j", &[&h_mixed, &geo.dphi[a]]).mul_scalar(&geo.mean);
        let rad = geo.dphi[a].mul_scalar(&(&geo.mean * &geo.mean));
        let mut out = d_hn;
        out.axpy(-2.0, &rad);
        out.axpy(2.0, &tan);
        out
    });
    let flux_rhs = geo.div_vector(&y).map(|x| x.value());
    let ric = contract("ik,ijkl->jl", &[&geo.ginv, &riemann_field(&geo)]);
    let rs = contract("jl,jl->", &[&geo.ginv, &ric]);
    let e_low = ric.sub(&geo.g.mul_scalar(&rs.c[0].scale(0.5)));
    let e_h = val(&contract("ia,jb,ab,ij->", &[&geo.ginv, &geo.ginv, &e_low, &geo.h]));
    let einstein_lhs = nval.map(|x| e_h * x);
    let e_mixed = contract("jl,li->ji", &[&e_low, &geo.ginv]);
    let z: [Field; 5] = std::array::from_fn(|a| contract("ji,i->j", &[&e_mixed, &geo.dphi[a]]));
    let einstein_rhs = geo.div_vector(&z).map(|x| x.value());
    let de = contract("jk,kji->i", &[&geo.ginv, &geo.nabla(&e_low)]);
    let einstein_div: [f64; 4] = std::array::from_fn(|i| de.at(&[i]).value());
    Ok(SecondOrderData {
        lap_r,
        lap_mean,
        lap_h_sq,
        lap_mean_sq,
        h_lap_h,
        h_hess_mean,
        div2_hh,
        div2_h_mean,
        flux_lhs,
        flux_rhs,
        einstein_lhs,
        einstein_rhs,
        einstein_div,
        scale: h2v.powi(2).max(1.0),
    })
}

/// Gauss-equation Riemann tensor as a jet field.
pub fn riemann_field(geo: &JetGeometry) -> Field {
    let hh = contract("ik,jl->ijkl", &[&geo.h, &geo.h]);
    hh.sub(&hh.permute(&[0, 1, 3, 2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ChartPoint, SurfaceSpec};
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    fn pseudo_points(spec: &SurfaceSpec, count: usize, seed: u64) -> Vec<ChartPoint> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let chart = spec.chart();
        (0..count).map(|_| chart.sample(&mut rng, 0.1)).collect()
    }

    fn full(spec: &SurfaceSpec, p: &ChartPoint) -> (FrameData, ShapeTensors, CurvatureData, InvariantVector) {
        let j = spec.evaluate(p, 4).unwrap();
        let (f, s) = shape_at(&j, spec.orientation()).unwrap();
        let c = curvature_at(&s, &f);
        let iv = invariants_at(&s, &c, &f);
        (f, s, c, iv)
    }

    #[test]
    fn flat_patch_frame() {
        let flat = SurfaceSpec::flat_patch();
        let (f, s, _, _) = full(&flat, &ChartPoint::new([0.1, -0.2, 0.3, 0.4]));
        for i in 0..4 {
            for k in 0..4 {
                assert_eq!(f.g[i][k], if i == k { 1.0 } else { 0.0 });
                assert_eq!(s.h[i][k], 0.0);
            }
        }
        assert_eq!(f.n, [0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.lap_mean, Some(0.0));
    }

    #[test]
    fn unit_sphere_shape() {
        let sp = SurfaceSpec::sphere(1.0).unwrap();
        for p in pseudo_points(&sp, 5, 1) {
            let (f, s, c, iv) = full(&sp, &p);
            let x = sp.position(&p).unwrap();
            for a in 0..5 {
                assert!((f.n[a] - x[a]).abs() < 1e-13, "outward normal");
            }
            for a in 0..4 {
                for b in 0..4 {
                    assert!((s.h[a][b] + f.g[a][b]).abs() < 1e-12);
                    for cc in 0..4 {
                        assert!(s.grad_h[cc][a][b].abs() < 1e-10);
                    }
                }
            }
            assert!((s.mean + 1.0).abs() < 1e-13);
            assert!(norm_sq4(&c.weyl, &f.g_inv) < 1e-20);
            let want = [0.0, 0.0, 4.0, 16.0, 4.0, 4.0, 1.0, 1.0, 0.0, 0.0, 0.0];
            let got = iv.as_array();
            for k in 0..11 {
                assert!((got[k] - want[k]).abs() < 1e-10, "{}: {}", INVARIANT_NAMES[k], got[k]);
            }
            assert!((iv.q.unwrap() - 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn torus_quarter_point() {
        let t = SurfaceSpec::torus(2.0, 1.0).unwrap();
        let p = ChartPoint::new([PI / 2.0, PI / 2.0, PI / 2.0, 0.0]);
        let (f, s, c, iv) = full(&t, &p);
        let h2 = f.inner2(&s.h, &s.h);
        assert!((h2 - 1.0).abs() < 1e-12);
        assert!((s.mean.abs() - 0.25).abs() < 1e-13);
        assert!(iv.det_h.abs() < 1e-13);
        assert!(c.scalar.abs() < 1e-12);
        // n = ±(cos u ω, sin u) with ω = (0, 0, 1, 0) at this point.
        let expect = [0.0, 0.0, 0.0, 0.0, 1.0];
        let d: f64 = (0..5).map(|a| f.n[a] * expect[a]).sum();
        assert!((d.abs() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn torus_is_conformally_flat() {
        let t = SurfaceSpec::torus(2.0, 1.0).unwrap();
        for p in pseudo_points(&t, 100, 7) {
            let j = t.evaluate(&p, 3).unwrap();
            let (iv, _) = densities_at(&j, t.orientation()).unwrap();
            assert!(iv.weyl_sq < 1e-9, "{}", iv.weyl_sq);
        }
    }

    #[test]
    fn ellipsoid_weyl_and_traceless_identities() {
        let e = SurfaceSpec::ellipsoid([1.0, 1.3, 0.8, 1.1, 0.9]).unwrap();
        for p in pseudo_points(&e, 20, 3) {
            let (f, s, c, iv) = full(&e, &p);
            assert!(iv.weyl_sq > 1e-6);
            let rhs = 7.0 / 3.0 * iv.h0_norm4 - 4.0 * iv.tr_h0_4;
            assert!(rel(iv.weyl_sq, rhs) < 1e-9);
            let h2 = f.inner2(&s.h, &s.h);
            let m = s.mean;
            assert!(rel(iv.h0_norm4, iv.h_norm4 - 8.0 * iv.mean2_h2 + 16.0 * iv.mean4) < 1e-10);
            assert!(rel(c.scalar, 16.0 * m * m - h2) < 1e-10);
            assert!(f.inner2(&f.g, &s.h0).abs() < 1e-12);
            // Weyl totally trace-free.
            for j in 0..4 {
                for l in 0..4 {
                    let tr: f64 = (0..4).flat_map(|i| (0..4).map(move |k| (i, k))).map(|(i, k)| f.g_inv[i][k] * c.weyl[i][j][k][l]).sum();
                    assert!(tr.abs() < 1e-9);
                }
            }
            // Codazzi symmetry and the trace relation.
            for a in 0..4 {
                for b in 0..4 {
                    for cc in 0..4 {
                        assert!((s.grad_h[cc][a][b] - s.grad_h[a][cc][b]).abs() < 1e-9);
                    }
                }
                let tr: f64 = (0..4).flat_map(|x| (0..4).map(move |y| (x, y))).map(|(x, y)| f.g_inv[x][y] * s.grad_h[x][y][a]).sum();
                assert!((tr - 4.0 * s.grad_mean[a]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn orientation_flip_is_invisible() {
        let e = SurfaceSpec::ellipsoid([1.0, 1.3, 0.8, 1.1, 0.9]).unwrap();
        for p in pseudo_points(&e, 5, 11) {
            let (f, s, c, iv) = full(&e, &p);
            let sf = flip_orientation(&s);
            let cf = curvature_at(&sf, &f);
            let ivf = invariants_at(&sf, &cf, &f);
            let (a, b) = (iv.as_array(), ivf.as_array());
            for k in 0..14 {
                assert!(rel(a[k], b[k]) < 1e-12, "{}", INVARIANT_NAMES[k]);
            }
            let _ = c;
            // Recompute from scratch with the opposite sign as well.
            let j = e.evaluate(&p, 4).unwrap();
            let (f2, s2) = shape_at(&j, -e.orientation()).unwrap();
            let iv2 = invariants_at(&s2, &curvature_at(&s2, &f2), &f2);
            for (x, y) in iv.as_array().iter().zip(iv2.as_array()) {
                assert!(rel(*x, y) < 1e-12);
            }
        }
    }

    #[test]
    fn jet_pipeline_agrees_with_value_path() {
        let e = SurfaceSpec::ellipsoid([1.0, 1.3, 0.8, 1.1, 0.9]).unwrap();
        let p = ChartPoint::new([0.9, 1.7, 2.2, 4.0]);
        let j = e.evaluate(&p, 4).unwrap();
        let geo = JetGeometry::new(&j, e.orientation()).unwrap();
        let f = frame_at(&j, e.orientation()).unwrap();
        let s = shape_order3(&j, &f).unwrap();
        let gh = geo.nabla(&geo.h);
        for c in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    assert!((gh.at(&[c, a, b]).value() - s.grad_h[c][a][b]).abs() < 1e-11);
                }
            }
        }
        for a in 0..5 {
            assert!((geo.n[a].value() - f.n[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn divergence_identities_hold() {
        let e = SurfaceSpec::ellipsoid([1.0, 1.3, 0.8, 1.1, 0.9]).unwrap();
        for p in pseudo_points(&e, 4, 5) {
            let j = e.evaluate(&p, 4).unwrap();
            let d = second_order_at(&j, e.orientation()).unwrap();
            for a in 0..5 {
                assert!((d.flux_lhs[a] - d.flux_rhs[a]).abs() < 1e-7 * d.scale);
                assert!((d.einstein_lhs[a] - d.einstein_rhs[a]).abs() < 1e-7 * d.scale);
            }
            assert!(d.einstein_div.iter().all(|x| x.abs() < 1e-7 * d.scale));
            let (f, s) = shape_at(&j, e.orientation()).unwrap();
            assert!(rel(lap_scalar_r(&s, &f).unwrap(), d.lap_r) < 1e-9);
        }
    }

    #[test]
    fn cross_product_orientation() {
        let v = [[1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0, 0.0]];
        assert_eq!(cross4(&v), [0.0, 0.0, 0.0, 0.0, 1.0]);
        let w = [[1.0, 2.0, 0.0, 0.5, 0.0], [0.0, 1.0, 3.0, 0.0, 1.0], [0.2, 0.0, 1.0, 0.0, 0.0], [0.0, 0.7, 0.0, 1.0, 2.0]];
        let n = cross4(&w);
        for r in &w {
            assert!(dot5(r, &n).abs() < 1e-13);
        }
        let m = nalgebra::Matrix5::from_fn(|i, j| if i < 4 { w[i][j] } else { n[j] });
        assert!((m.determinant() - dot5(&n, &n)).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_and_low_order() {
        let sp = SurfaceSpec::sphere(1.0).unwrap();
        let j = sp.evaluate(&ChartPoint::new([1.0; 4]), 2).unwrap();
        assert!(matches!(shape_at(&j, 1.0), Err(ShapeError::InsufficientOrder { needed: 4, got: 2 })));
        let zero = crate::jets::AmbientJet { x: std::array::from_fn(|_| crate::jets::Jet::zero(4, 3)) };
        assert!(matches!(frame_at(&zero, 1.0), Err(ShapeError::NotImmersion(_))));
    }
}
