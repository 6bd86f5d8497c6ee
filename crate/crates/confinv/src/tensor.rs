//! Jet-valued tensor fields on the 4-dimensional parameter domain, all indices
//! stored lowered, with contraction and Levi-Civita covariant derivatives.

use crate::jets::{AmbientJet, Jet, JetError};

pub const DIM: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub rank: usize,
    pub c: Vec<Jet>,
}

fn flat(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * DIM + i)
}

impl Field {
    pub fn zeros(rank: usize, order: usize) -> Field {
        Field { rank, c: vec![Jet::zero(DIM, order); DIM.pow(rank as u32)] }
    }

    pub fn scalar(j: Jet) -> Field {
        Field { rank: 0, c: vec![j] }
    }

    pub fn from_fn(rank: usize, mut f: impl FnMut(&[usize]) -> Jet) -> Field {
        let n = DIM.pow(rank as u32);
        let mut idx = vec![0usize; rank];
        let mut c = Vec::with_capacity(n);
        for k in 0..n {
            let mut r = k;
            for slot in (0..rank).rev() {
                idx[slot] = r % DIM;
                r /= DIM;
            }
            c.push(f(&idx));
        }
        Field { rank, c }
    }

    pub fn at(&self, idx: &[usize]) -> &Jet {
        &self.c[flat(idx)]
    }

    pub fn order(&self) -> usize {
        self.c.iter().map(Jet::order).min().unwrap_or(0)
    }

    pub fn values(&self) -> Vec<f64> {
        self.c.iter().map(Jet::value).collect()
    }

    pub fn scale(&self, s: f64) -> Field {
        Field { rank: self.rank, c: self.c.iter().map(|j| j.scale(s)).collect() }
    }

    pub fn axpy(&mut self, s: f64, other: &Field) {
        assert_eq!(self.rank, other.rank);
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            a.axpy(s, b);
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        let mut r = self.clone();
        r.axpy(1.0, other);
        r
    }

    pub fn sub(&self, other: &Field) -> Field {
        let mut r = self.clone();
        r.axpy(-1.0, other);
        r
    }

    pub fn mul_scalar(&self, s: &Jet) -> Field {
        Field { rank: self.rank, c: self.c.iter().map(|j| j * s).collect() }
    }

    /// Reorder slots: `out[i_{perm[0]}, …] = self[i_0, …]` read as
    /// `out[idx] = self[idx[perm[0]], idx[perm[1]], …]`.
    pub fn permute(&self, perm: &[usize]) -> Field {
        assert_eq!(perm.len(), self.rank);
        let mut src = vec![0usize; self.rank];
        Field::from_fn(self.rank, |idx| {
            for (s, &p) in src.iter_mut().zip(perm) {
                *s = idx[p];
            }
            self.at(&src).clone()
        })
    }

    pub fn truncate(&self, order: usize) -> Field {
        Field { rank: self.rank, c: self.c.iter().map(|j| j.truncate(order)).collect() }
    }

    pub fn max_abs_value(&self) -> f64 {
        self.c.iter().map(|j| j.value().abs()).fold(0.0, f64::max)
    }
}

/// Index contraction in the style `"ab,bc->ac"` over dimension 4.
pub fn contract(spec: &str, inputs: &[&Field]) -> Field {
    let (lhs, out) = spec.split_once("->").expect("contraction spec needs ->");
    let parts: Vec<&[u8]> = lhs.split(',').map(|s| s.trim().as_bytes()).collect();
    assert_eq!(parts.len(), inputs.len(), "contraction {spec}: operand count");
    for (p, f) in parts.iter().zip(inputs) {
        assert_eq!(p.len(), f.rank, "contraction {spec}: rank mismatch");
    }
    let out = out.trim().as_bytes();
    let mut letters: Vec<u8> = out.to_vec();
    for p in &parts {
        for &c in p.iter() {
            if !letters.contains(&c) {
                letters.push(c);
            }
        }
    }
    let pos = |c: u8| letters.iter().position(|&l| l == c).unwrap();
    let slot_maps: Vec<Vec<usize>> = parts.iter().map(|p| p.iter().map(|&c| pos(c)).collect()).collect();
    let out_map: Vec<usize> = out.iter().map(|&c| pos(c)).collect();
    let order = inputs.iter().map(|f| f.order()).min().unwrap_or(0);
    let mut result = Field::zeros(out.len(), order);
    let nl = letters.len();
    let mut assign = vec![0usize; nl];
    let total = DIM.pow(nl as u32);
    let mut tmp = Jet::zero(DIM, order);
    for k in 0..total {
        let mut r = k;
        for slot in (0..nl).rev() {
            assign[slot] = r % DIM;
            r /= DIM;
        }
        let idx = |m: &Vec<usize>| m.iter().fold(0, |acc, &s| acc * DIM + assign[s]);
        let o = idx(&out_map);
        match inputs.len() {
            1 => result.c[o].axpy(1.0, &inputs[0].c[idx(&slot_maps[0])]),
            2 => {
                let (a, b) = (&inputs[0].c[idx(&slot_maps[0])], &inputs[1].c[idx(&slot_maps[1])]);
                result.c[o].add_mul(a, b);
            }
            _ => {
                tmp = inputs[0].c[idx(&slot_maps[0])].clone();
                for (f, m) in inputs.iter().zip(&slot_maps).skip(1).take(inputs.len() - 2) {
                    tmp = &tmp * &f.c[idx(m)];
                }
                let last = inputs.len() - 1;
                result.c[o].add_mul(&tmp, &inputs[last].c[idx(&slot_maps[last])]);
            }
        }
    }
    let _ = tmp;
    result
}

/// Inverse and determinant of a symmetric positive-definite jet matrix by
/// Gauss–Jordan elimination without pivoting.
pub fn invert(g: &Field) -> Result<(Field, Jet), JetError> {
    assert_eq!(g.rank, 2);
    let order = g.order();
    let mut a: Vec<Vec<Jet>> = (0..DIM).map(|i| (0..DIM).map(|j| g.at(&[i, j]).clone()).collect()).collect();
    let mut inv: Vec<Vec<Jet>> =
        (0..DIM).map(|i| (0..DIM).map(|j| Jet::constant(DIM, order, if i == j { 1.0 } else { 0.0 })).collect()).collect();
    let mut det = Jet::constant(DIM, order, 1.0);
    for col in 0..DIM {
        let piv = a[col][col].clone();
        det = &det * &piv;
        let r = piv.recip()?;
        for j in 0..DIM {
            a[col][j] = &a[col][j] * &r;
            inv[col][j] = &inv[col][j] * &r;
        }
        for row in 0..DIM {
            if row == col {
                continue;
            }
            let f = a[row][col].clone();
            for j in 0..DIM {
                let (x, y) = (a[col][j].clone(), inv[col][j].clone());
                a[row][j].axpy(-1.0, &(&f * &x));
                inv[row][j].axpy(-1.0, &(&f * &y));
            }
        }
    }
    Ok((Field::from_fn(2, |ix| inv[ix[0]][ix[1]].clone()), det))
}

fn det4(m: &[[&Jet; 4]; 4]) -> Jet {
    let order = m.iter().flatten().map(|j| j.order()).min().unwrap_or(0);
    let mut acc = Jet::zero(DIM, order);
    for (p, sign) in PERMS4.iter() {
        let t = &(m[0][p[0]] * m[1][p[1]]) * &(m[2][p[2]] * m[3][p[3]]);
        acc.axpy(*sign, &t);
    }
    acc
}

pub(crate) const PERMS4: [([usize; 4], f64); 24] = {
    let mut out = [([0usize; 4], 0.0f64); 24];
    let mut k = 0;
    let mut a = 0;
    while a < 4 {
        let mut b = 0;
        while b < 4 {
            let mut c = 0;
            while c < 4 {
                if a != b && a != c && b != c && a + b + c <= 6 && 6 - a - b - c < 4 {
                    let d = 6 - a - b - c;
                    let p = [a, b, c, d];
                    let mut inv = 0;
                    let mut i = 0;
                    while i < 4 {
                        let mut j = i + 1;
                        while j < 4 {
                            if p[i] > p[j] {
                                inv += 1;
                            }
                            j += 1;
                        }
                        i += 1;
                    }
                    out[k] = (p, if inv % 2 == 0 { 1.0 } else { -1.0 });
                    k += 1;
                }
                c += 1;
            }
            b += 1;
        }
        a += 1;
    }
    out
};

/// Geometry of an immersion carried as jets at one chart point.
///
/// With Φ known to order `k`, first-order quantities (g, n, √g) carry order
/// `k − 1` and second-order ones (h, Γ, H) order `k − 2`.
#[derive(Clone, Debug)]
pub struct JetGeometry {
    pub phi_order: usize,
    /// `dphi[a]` is the covector `∂_iΦ^a`.
    pub dphi: [Field; 5],
    pub g: Field,
    pub ginv: Field,
    pub sqrt_g: Jet,
    pub n: [Jet; 5],
    pub h: Field,
    /// `Γ^k_{ij}` stored as `[k, i, j]`.
    pub gamma: Field,
    pub mean: Jet,
}

impl JetGeometry {
    pub fn new(j: &AmbientJet, orientation: f64) -> Result<JetGeometry, JetError> {
        let k = j.order();
        if k < 2 {
            return Err(JetError::UnsupportedOrder(k));
        }
        let dphi: [Field; 5] = std::array::from_fn(|a| Field::from_fn(1, |ix| j.x[a].d(ix[0])));
        let g = Field::from_fn(2, |ix| {
            let mut s = Jet::zero(DIM, k - 1);
            for d in &dphi {
                s.add_mul(d.at(&[ix[0]]), d.at(&[ix[1]]));
            }
            s
        });
        let (ginv, det) = invert(&g)?;
        let sqrt_g = det.sqrt()?;
        let inv_sqrt = sqrt_g.recip()?;
        let n: [Jet; 5] = std::array::from_fn(|a| {
            let cols: Vec<usize> = (0..5).filter(|&c| c != a).collect();
            let m: [[&Jet; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|c| dphi[cols[c]].at(&[i])));
            let sign = if a % 2 == 0 { orientation } else { -orientation };
            (&det4(&m) * &inv_sqrt).scale(sign)
        });
        let phi2: Vec<Field> = (0..5).map(|a| Field::from_fn(2, |ix| dphi[a].at(&[ix[0]]).d(ix[1]))).collect();
        let h = Field::from_fn(2, |ix| {
            let mut s = Jet::zero(DIM, k - 2);
            for (a, p) in phi2.iter().enumerate() {
                s.add_mul(&n[a], p.at(ix));
            }
            s
        });
        let first_kind = Field::from_fn(3, |ix| {
            let mut s = Jet::zero(DIM, k - 2);
            for a in 0..5 {
                s.add_mul(dphi[a].at(&[ix[0]]), phi2[a].at(&[ix[1], ix[2]]));
            }
            s
        });
        let gamma = contract("kl,lij->kij", &[&ginv, &first_kind]);
        let mean = contract("ij,ij->", &[&ginv, &h]).c[0].scale(0.25);
        Ok(JetGeometry { phi_order: k, dphi, g, ginv, sqrt_g, n, h, gamma, mean })
    }

    /// Covariant derivative of a covariant tensor; the new index comes first.
    pub fn nabla(&self, t: &Field) -> Field {
        assert!(t.order() >= 1, "covariant derivative needs a jet of order ≥ 1");
        let r = t.rank;
        let order = t.order() - 1;
        let mut out = Field::from_fn(r + 1, |ix| t.at(&ix[1..]).d(ix[0]).truncate(order));
        if r == 0 {
            return out;
        }
        let mut src = vec![0usize; r];
        let n = out.c.len();
        let mut idx = vec![0usize; r + 1];
        for kk in 0..n {
            let mut rem = kk;
            for slot in (0..=r).rev() {
                idx[slot] = rem % DIM;
                rem /= DIM;
            }
            let c = idx[0];
            let mut acc = Jet::zero(DIM, order);
            for slot in 0..r {
                src.copy_from_slice(&idx[1..]);
                for m in 0..DIM {
                    src[slot] = m;
                    acc.add_mul(self.gamma.at(&[m, c, idx[1 + slot]]), t.at(&src));
                }
            }
            out.c[kk].axpy(-1.0, &acc);
        }
        out
    }

    /// `g^{ab} ∇_a ∇_b` of a covariant tensor.
    pub fn laplacian(&self, t: &Field) -> Field {
        let dd = self.nabla(&self.nabla(t));
        let r = t.rank;
        let letters = "efghijklmn";
        let rest = &letters[..r];
        contract(&format!("ab,ab{rest}->{rest}"), &[&self.ginv, &dd])
    }

    /// Raise the `slot`-th index.
    pub fn raise(&self, t: &Field, slot: usize) -> Field {
        let letters: Vec<char> = "abcdefghij".chars().collect();
        let ins: String = (0..t.rank).map(|i| if i == slot { 'z' } else { letters[i] }).collect();
        let out: String = letters[..t.rank].iter().collect();
        let g_spec = format!("{}z", letters[slot]);
        contract(&format!("{g_spec},{ins}->{out}"), &[&self.ginv, t])
    }

    /// Divergence `∇^a Y_a` of an ambient-vector-valued covector field, componentwise.
    pub fn div_vector(&self, y: &[Field; 5]) -> [Jet; 5] {
        std::array::from_fn(|a| contract("ab,ab->", &[&self.ginv, &self.nabla(&y[a])]).c[0].clone())
    }

    /// Mixed-index tangent vectors `∂_iΦ` contracted with a covector field:
    /// returns ambient components of `T^{i} ∂_iΦ` for `T` given lowered.
    pub fn push_tangent(&self, t_lower: &Field) -> [Jet; 5] {
        let up = contract("ij,j->i", &[&self.ginv, t_lower]);
        std::array::from_fn(|a| contract("i,i->", &[&up, &self.dphi[a]]).c[0].clone())
    }
}
