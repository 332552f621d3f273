//! Scaling-and-squaring Padé matrix exponential.
//!
//! The approximant degree and scaling follow Higham's 2005 algorithm. The
//! same routine runs on plain matrices and on block upper-triangular pairs
//! `[[A, E], [0, A]]`, whose exponential carries the Fréchet derivative of
//! `exp` at `A` in direction `E` in its upper-right block.

use nalgebra::{ComplexField, DMatrix};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Minimal algebra needed by the Padé evaluation.
pub(crate) trait PadeAlgebra: Sized {
    fn identity_like(&self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    /// `self + s * other`
    fn axpy(&self, s: f64, other: &Self) -> Self;
    fn scaled(&self, s: f64) -> Self;
    fn norm1(&self) -> f64;
    /// Solve `self * X = rhs`.
    fn solve(&self, rhs: &Self) -> Option<Self>;
}

fn column_abs_sums<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Vec<f64> {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.clone().modulus()).sum())
        .collect()
}

impl<T: ComplexField<RealField = f64>> PadeAlgebra for DMatrix<T> {
    fn identity_like(&self) -> Self {
        DMatrix::identity(self.nrows(), self.ncols())
    }

    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }

    fn axpy(&self, s: f64, other: &Self) -> Self {
        self + other * T::from_real(s)
    }

    fn scaled(&self, s: f64) -> Self {
        self * T::from_real(s)
    }

    fn norm1(&self) -> f64 {
        column_abs_sums(self).into_iter().fold(0.0, f64::max)
    }

    fn solve(&self, rhs: &Self) -> Option<Self> {
        self.clone().lu().solve(rhs)
    }
}

/// The block matrix `[[a, b], [0, a]]`.
#[derive(Clone, Debug)]
pub(crate) struct BlockPair<T: ComplexField> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
}

impl<T: ComplexField<RealField = f64>> PadeAlgebra for BlockPair<T> {
    fn identity_like(&self) -> Self {
        BlockPair {
            a: self.a.identity_like(),
            b: DMatrix::zeros(self.b.nrows(), self.b.ncols()),
        }
    }

    fn mul(&self, rhs: &Self) -> Self {
        BlockPair {
            a: &self.a * &rhs.a,
            b: &self.a * &rhs.b + &self.b * &rhs.a,
        }
    }

    fn axpy(&self, s: f64, other: &Self) -> Self {
        BlockPair {
            a: self.a.axpy(s, &other.a),
            b: self.b.axpy(s, &other.b),
        }
    }

    fn scaled(&self, s: f64) -> Self {
        BlockPair {
            a: self.a.scaled(s),
            b: self.b.scaled(s),
        }
    }

    fn norm1(&self) -> f64 {
        column_abs_sums(&self.a)
            .into_iter()
            .zip(column_abs_sums(&self.b))
            .map(|(ca, cb)| ca + cb)
            .fold(0.0, f64::max)
    }

    fn solve(&self, rhs: &Self) -> Option<Self> {
        let lu = self.a.clone().lu();
        let xa = lu.solve(&rhs.a)?;
        let xb = lu.solve(&(&rhs.b - &self.b * &xa))?;
        Some(BlockPair { a: xa, b: xb })
    }
}

fn pade_low<T: PadeAlgebra>(a: &T, coeffs: &[f64]) -> (T, T) {
    let ident = a.identity_like();
    let a2 = a.mul(a);
    // powers[k] = A^(2k)
    let mut powers = vec![ident, a2];
    while 2 * (powers.len() - 1) + 1 < coeffs.len() - 1 {
        let next = powers.last().unwrap().mul(&powers[1]);
        powers.push(next);
    }
    let mut u_inner = powers[0].scaled(coeffs[1]);
    let mut v = powers[0].scaled(coeffs[0]);
    for (k, p) in powers.iter().enumerate().skip(1) {
        if 2 * k + 1 < coeffs.len() {
            u_inner = u_inner.axpy(coeffs[2 * k + 1], p);
        }
        if 2 * k < coeffs.len() {
            v = v.axpy(coeffs[2 * k], p);
        }
    }
    (a.mul(&u_inner), v)
}

fn pade_13<T: PadeAlgebra>(a: &T) -> (T, T) {
    let b = &B13;
    let ident = a.identity_like();
    let a2 = a.mul(a);
    let a4 = a2.mul(&a2);
    let a6 = a4.mul(&a2);
    let u_hi = a6.scaled(b[13]).axpy(b[11], &a4).axpy(b[9], &a2);
    let u_inner = a6
        .mul(&u_hi)
        .axpy(b[7], &a6)
        .axpy(b[5], &a4)
        .axpy(b[3], &a2)
        .axpy(b[1], &ident);
    let u = a.mul(&u_inner);
    let v_hi = a6.scaled(b[12]).axpy(b[10], &a4).axpy(b[8], &a2);
    let v = a6
        .mul(&v_hi)
        .axpy(b[6], &a6)
        .axpy(b[4], &a4)
        .axpy(b[2], &a2)
        .axpy(b[0], &ident);
    (u, v)
}

pub(crate) fn expm_generic<T: PadeAlgebra>(a: &T) -> Option<T> {
    let norm = a.norm1();
    if !norm.is_finite() {
        return None;
    }
    for (m, theta) in THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(a, coeffs);
            return v.axpy(-1.0, &u).solve(&v.axpy(1.0, &u));
        }
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = a.scaled(0.5f64.powi(s));
    let (u, v) = pade_13(&scaled);
    let mut r = v.axpy(-1.0, &u).solve(&v.axpy(1.0, &u))?;
    for _ in 0..s {
        r = r.mul(&r);
    }
    Some(r)
}
