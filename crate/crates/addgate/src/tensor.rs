//! Dense row-major linear algebra, elementwise activations, and the seeded
//! generator everything downstream draws randomness from.
//!
//! All float work is `f64` so that precision never confounds a comparison
//! between gate mechanisms.

use crate::error::{Error, Result};

/// Dense vector of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    pub data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// Elementwise map into a new vector.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector::from_vec(self.data.iter().map(|&x| f(x)).collect())
    }

    /// Elementwise combination of two equally long vectors.
    pub fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector::from_vec(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Vector {
        self.map(|x| s * x)
    }

    pub fn add_assign(&mut self, other: &Vector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// self += s * other
    pub fn add_scaled(&mut self, other: &Vector, s: f64) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Dense row-major matrix of 64-bit floats.
///
/// Row-major keeps the matrix-vector loops sequential in memory, which is
/// what the benchmark harness times.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidParameter(
                "matrix rows have unequal lengths".into(),
            ));
        }
        Ok(Matrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// self += a ⊗ b (outer product accumulation, used for weight gradients)
    pub fn add_outer(&mut self, a: &Vector, b: &Vector) {
        debug_assert_eq!(self.rows, a.len());
        debug_assert_eq!(self.cols, b.len());
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let ar = a.data[r];
            for (dst, &bc) in row.iter_mut().zip(&b.data) {
                *dst += ar * bc;
            }
        }
    }
}

/// Standard matrix-vector product.
pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector> {
    if m.cols != v.len() {
        return Err(Error::shape("matvec", format!("cols == {}", m.cols), v.len()));
    }
    let mut out = Vec::with_capacity(m.rows);
    for r in 0..m.rows {
        let row = &m.data[r * m.cols..(r + 1) * m.cols];
        out.push(row.iter().zip(&v.data).map(|(a, b)| a * b).sum());
    }
    Ok(Vector::from_vec(out))
}

/// Transposed product mᵀ·v, used when gradients flow back through a kernel.
pub fn matvec_t(m: &Matrix, v: &Vector) -> Result<Vector> {
    if m.rows != v.len() {
        return Err(Error::shape(
            "matvec_t",
            format!("rows == {}", m.rows),
            v.len(),
        ));
    }
    let mut out = vec![0.0; m.cols];
    for r in 0..m.rows {
        let row = &m.data[r * m.cols..(r + 1) * m.cols];
        let vr = v.data[r];
        for (dst, &a) in out.iter_mut().zip(row) {
            *dst += vr * a;
        }
    }
    Ok(Vector::from_vec(out))
}

/// Elementwise activation functions.
///
/// `Relu` and `Sigmoid` map into [0, ∞) and (0, 1), so either satisfies the
/// non-negativity the addition-based cells demand of their proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Tanh,
    Sigmoid,
    Relu,
    Identity,
}

impl ActivationKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Identity => x,
        }
    }

    /// Derivative at a point, given both the pre-activation and the output.
    ///
    /// ReLU's subgradient at 0 is taken as 0.
    pub fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            ActivationKind::Tanh => 1.0 - post * post,
            ActivationKind::Sigmoid => post * (1.0 - post),
            ActivationKind::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Identity => 1.0,
        }
    }

    /// True for activations whose range is contained in [0, ∞).
    pub fn is_non_negative(self) -> bool {
        matches!(self, ActivationKind::Relu | ActivationKind::Sigmoid)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Relu => "relu",
            ActivationKind::Identity => "identity",
        }
    }
}

/// Numerically stable sigmoid; the sign branch avoids overflow for |x| > 700.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Apply an activation elementwise.
pub fn apply_activation(kind: ActivationKind, v: &Vector) -> Vector {
    v.map(|x| kind.apply(x))
}

/// Split into positive and negative parts: returns (v⁺, v⁻) with
/// v⁺ + v⁻ == v exactly, elementwise.
pub fn relu_pos_neg(v: &Vector) -> (Vector, Vector) {
    let pos = v.map(|x| x.max(0.0));
    let neg = v.map(|x| x.min(0.0));
    (pos, neg)
}

/// Seeded xoshiro256++ generator (SplitMix64 seeding).
///
/// The algorithm is fixed here, on purpose: identical seeds must produce
/// bit-identical streams on every platform and in every future build.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        // SplitMix64 expansion of the seed into the four state words.
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = x;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        Rng {
            s: [next(), next(), next(), next()],
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform sample in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform sample in [lo, hi).
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in [0, bound).
    pub fn uniform_index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        let i = (self.uniform() * bound as f64) as usize;
        i.min(bound - 1)
    }

    /// Derive an independent child stream, e.g. one per parallel worker.
    pub fn split(&mut self) -> Rng {
        Rng::seed_from_u64(self.next_u64())
    }
}

/// n i.i.d. uniform [0, 1) samples, advancing the generator.
pub fn rng_uniform(rng: &mut Rng, n: usize) -> Result<Vector> {
    if n == 0 {
        return Err(Error::Empty("rng_uniform sample count"));
    }
    Ok(Vector::from_vec((0..n).map(|_| rng.uniform()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn matvec_identity() {
        let m = Matrix::identity(2);
        let v = Vector::from_vec(vec![0.3, 0.7]);
        assert_eq!(matvec(&m, &v).unwrap().data, vec![0.3, 0.7]);
    }

    #[test]
    fn matvec_hand_case() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let v = Vector::from_vec(vec![1.0, 1.0]);
        assert_eq!(matvec(&m, &v).unwrap().data, vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_zero_matrix() {
        let m = Matrix::zeros(2, 2);
        let v = Vector::from_vec(vec![5.0, 5.0]);
        assert_eq!(matvec(&m, &v).unwrap().data, vec![0.0, 0.0]);
    }

    #[test]
    fn matvec_dim_mismatch_errors() {
        let m = Matrix::zeros(2, 3);
        let v = Vector::zeros(2);
        assert!(matches!(
            matvec(&m, &v),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn matvec_transpose_agrees_with_explicit_transpose() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let v = Vector::from_vec(vec![1.0, -1.0]);
        // mᵀ v = [1-4, 2-5, 3-6]
        assert_eq!(matvec_t(&m, &v).unwrap().data, vec![-3.0, -3.0, -3.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let v = apply_activation(ActivationKind::Sigmoid, &Vector::from_vec(vec![0.0]));
        assert_eq!(v.data, vec![0.5]);
    }

    #[test]
    fn relu_definition() {
        let v = apply_activation(
            ActivationKind::Relu,
            &Vector::from_vec(vec![-2.0, 0.0, 3.0]),
        );
        assert_eq!(v.data, vec![0.0, 0.0, 3.0]);
    }

    #[test]
    fn tanh_reference_value() {
        // Reference value from an independent math-library evaluation.
        let v = apply_activation(ActivationKind::Tanh, &Vector::from_vec(vec![0.5]));
        assert_close(v.data[0], 0.46211715726000974, 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_for_huge_arguments() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!(sigmoid(-745.0) > 0.0);
    }

    #[test]
    fn pos_neg_split_cases() {
        let (p, n) = relu_pos_neg(&Vector::from_vec(vec![-3.0, 5.0]));
        assert_eq!(p.data, vec![0.0, 5.0]);
        assert_eq!(n.data, vec![-3.0, 0.0]);

        let (p, n) = relu_pos_neg(&Vector::from_vec(vec![0.0]));
        assert_eq!(p.data, vec![0.0]);
        assert_eq!(n.data, vec![0.0]);

        let (p, n) = relu_pos_neg(&Vector::from_vec(vec![2.0, -2.0, 0.0]));
        assert_eq!(p.data, vec![2.0, 0.0, 0.0]);
        assert_eq!(n.data, vec![0.0, -2.0, 0.0]);
    }

    #[test]
    fn rng_is_deterministic() {
        let mut a = Rng::seed_from_u64(42);
        let mut b = Rng::seed_from_u64(42);
        let va = rng_uniform(&mut a, 3).unwrap();
        let vb = rng_uniform(&mut b, 3).unwrap();
        assert_eq!(va.data, vb.data);
    }

    #[test]
    fn rng_zero_count_errors() {
        let mut rng = Rng::seed_from_u64(1);
        assert!(rng_uniform(&mut rng, 0).is_err());
    }

    #[test]
    fn rng_single_sample_in_range() {
        let mut rng = Rng::seed_from_u64(7);
        let v = rng_uniform(&mut rng, 1).unwrap();
        assert!(v.data[0] >= 0.0 && v.data[0] < 1.0);
    }

    #[test]
    fn rng_mean_near_half() {
        // Binomial bound: the mean of 10^4 U[0,1) draws is within 0.02 of 0.5
        // except with negligible probability.
        let mut rng = Rng::seed_from_u64(123);
        let v = rng_uniform(&mut rng, 10_000).unwrap();
        let mean = v.data.iter().sum::<f64>() / v.len() as f64;
        assert_close(mean, 0.5, 0.02);
    }

    #[test]
    fn rng_samples_in_unit_interval() {
        let mut rng = Rng::seed_from_u64(9);
        let v = rng_uniform(&mut rng, 1000).unwrap();
        assert!(v.data.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn uniform_index_covers_range() {
        let mut rng = Rng::seed_from_u64(5);
        let mut seen = [false; 8];
        for _ in 0..1000 {
            seen[rng.uniform_index(8)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
