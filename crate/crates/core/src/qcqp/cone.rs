//! Product of a nonnegative orthant and second-order cones: Jordan algebra
//! operations, step lengths and Nesterov–Todd scaling.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Layout of a cone vector: `l` orthant entries followed by the
/// second-order cones of the given dimensions.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Cones {
    pub l: usize,
    pub socs: Vec<usize>,
}

impl Cones {
    pub fn dim(&self) -> usize {
        self.l + self.socs.iter().sum::<usize>()
    }

    pub fn degree(&self) -> usize {
        self.l + self.socs.len()
    }

    /// `(start, dim)` of every second-order cone.
    fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.socs.iter().scan(self.l, |at, &d| {
            let b = (*at, d);
            *at += d;
            Some(b)
        })
    }

    pub fn identity<T: Real>(&self) -> DVector<T> {
        let mut e = DVector::zeros(self.dim());
        e.rows_mut(0, self.l).fill(T::one());
        for (start, _) in self.blocks() {
            e[start] = T::one();
        }
        e
    }

    /// Smallest eigenvalue of `u` in the Jordan-algebra sense.
    pub fn min_eig<T: Real>(&self, u: &DVector<T>) -> T {
        let mut m = u.rows(0, self.l).iter().fold(T::max_value().unwrap(), |a, v| a.min(*v));
        for (start, dim) in self.blocks() {
            m = m.min(u[start] - u.rows(start + 1, dim - 1).norm());
        }
        m
    }

    /// Jordan product `u ∘ v`.
    pub fn prod<T: Real>(&self, u: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.l {
            out[i] = u[i] * v[i];
        }
        for (start, dim) in self.blocks() {
            let uu = u.rows(start, dim);
            let vv = v.rows(start, dim);
            out[start] = uu.dot(&vv);
            for j in 1..dim {
                out[start + j] = uu[0] * vv[j] + vv[0] * uu[j];
            }
        }
        out
    }

    /// Solves `λ ∘ x = r` for `x`.
    pub fn inv_prod<T: Real>(&self, lam: &DVector<T>, r: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.l {
            out[i] = r[i] / lam[i];
        }
        for (start, dim) in self.blocks() {
            let l0 = lam[start];
            let l1 = lam.rows(start + 1, dim - 1);
            let r1 = r.rows(start + 1, dim - 1);
            let det = l0 * l0 - l1.norm_squared();
            let x0 = (l0 * r[start] - l1.dot(&r1)) / det;
            out[start] = x0;
            for j in 1..dim {
                out[start + j] = (r[start + j] - x0 * lam[start + j]) / l0;
            }
        }
        out
    }

    /// Largest `α ≥ 0` with `u + α·du` in the cone (`u` interior); capped
    /// at a large constant when unbounded.
    pub fn max_step<T: Real>(&self, u: &DVector<T>, du: &DVector<T>) -> T {
        let big = T::of(1e30);
        let mut a = big;
        for i in 0..self.l {
            if du[i] < T::zero() {
                a = a.min(-u[i] / du[i]);
            }
        }
        for (start, dim) in self.blocks() {
            a = a.min(soc_step(
                u.rows(start, dim).into_owned(),
                du.rows(start, dim).into_owned(),
                big,
            ));
        }
        a
    }
}

/// First positive root of `(u₀ + αd₀)² − ‖u₁ + αd₁‖²`.
fn soc_step<T: Real>(u: DVector<T>, d: DVector<T>, big: T) -> T {
    let n = u.len();
    let (u1, d1) = (u.rows(1, n - 1), d.rows(1, n - 1));
    let a = d[0] * d[0] - d1.norm_squared();
    let b = u[0] * d[0] - u1.dot(&d1);
    let c = u[0] * u[0] - u1.norm_squared();
    if c <= T::zero() {
        return T::zero();
    }
    let tiny = T::default_epsilon() * (d[0] * d[0] + d1.norm_squared());
    if a.abs() <= tiny {
        return if b < T::zero() { (-c / (b + b)).min(big) } else { big };
    }
    let disc = b * b - a * c;
    if disc < T::zero() {
        return big;
    }
    let root = disc.sqrt();
    let q = if b >= T::zero() { -(b + root) } else { -b + root };
    let mut best = big;
    for r in [q / a, if q != T::zero() { c / q } else { big }] {
        if r > T::zero() {
            best = best.min(r);
        }
    }
    best
}

/// Nesterov–Todd scaling `W` with `W z = W⁻¹ s = λ` (every block of `W` is
/// symmetric).
pub(crate) struct Scaling<'a, T: Real> {
    cones: &'a Cones,
    /// orthant: `√(s/z)`
    d: Vec<T>,
    /// per cone: `(β, w̄)` with `w̄ᵀJw̄ = 1`
    soc: Vec<(T, DVector<T>)>,
    lambda: DVector<T>,
}

impl<'a, T: Real> Scaling<'a, T> {
    /// `None` unless both `s` and `z` are strictly interior.
    pub fn new(cones: &'a Cones, s: &DVector<T>, z: &DVector<T>) -> Option<Self> {
        let zero = T::zero();
        let mut d = Vec::with_capacity(cones.l);
        for i in 0..cones.l {
            if !(s[i] > zero && z[i] > zero) {
                return None;
            }
            d.push((s[i] / z[i]).sqrt());
        }
        let mut soc = Vec::with_capacity(cones.socs.len());
        for (start, dim) in cones.blocks() {
            let ss = s.rows(start, dim);
            let zz = z.rows(start, dim);
            let sj = ss[0] * ss[0] - ss.rows(1, dim - 1).norm_squared();
            let zj = zz[0] * zz[0] - zz.rows(1, dim - 1).norm_squared();
            if !(sj > zero && zj > zero && ss[0] > zero && zz[0] > zero) {
                return None;
            }
            let sb = ss / sj.sqrt();
            let zb = zz / zj.sqrt();
            let gamma = ((T::one() + sb.dot(&zb)) * T::of(0.5)).sqrt();
            let mut w = DVector::zeros(dim);
            w[0] = (sb[0] + zb[0]) / (gamma + gamma);
            for j in 1..dim {
                w[j] = (sb[j] - zb[j]) / (gamma + gamma);
            }
            let beta = (sj / zj).sqrt().sqrt();
            soc.push((beta, w));
        }
        let mut out = Self {
            cones,
            d,
            soc,
            lambda: DVector::zeros(0),
        };
        out.lambda = out.apply_vec(z);
        Some(out)
    }

    pub fn lambda(&self) -> DVector<T> {
        self.lambda.clone()
    }

    fn apply_impl(&self, v: &DVector<T>, inverse: bool) -> DVector<T> {
        let mut out = DVector::zeros(v.len());
        for i in 0..self.cones.l {
            out[i] = if inverse { v[i] / self.d[i] } else { v[i] * self.d[i] };
        }
        for ((start, dim), (beta, w)) in self.cones.blocks().zip(&self.soc) {
            let sign = if inverse { -T::one() } else { T::one() };
            let scale = if inverse { T::one() / *beta } else { *beta };
            let v0 = v[start];
            let v1 = v.rows(start + 1, dim - 1);
            let w1 = w.rows(1, dim - 1);
            let w1v1 = w1.dot(&v1);
            out[start] = scale * (w[0] * v0 + sign * w1v1);
            let coef = w1v1 / (T::one() + w[0]) + sign * v0;
            for j in 1..dim {
                out[start + j] = scale * (v[start + j] + coef * w[j]);
            }
        }
        out
    }

    pub fn apply_vec(&self, v: &DVector<T>) -> DVector<T> {
        self.apply_impl(v, false)
    }

    pub fn apply_inv_vec(&self, v: &DVector<T>) -> DVector<T> {
        self.apply_impl(v, true)
    }

    /// `W⁻¹ G` column by column.
    pub fn apply_inv(&self, g: &DMatrix<T>) -> DMatrix<T> {
        let mut out = DMatrix::zeros(g.nrows(), g.ncols());
        for c in 0..g.ncols() {
            out.set_column(c, &self.apply_inv_vec(&g.column(c).into_owned()));
        }
        out
    }
}
