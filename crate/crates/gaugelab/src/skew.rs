//! Skew-symmetric matrix algebra: exponentials, block standard form, and
//! conjugacy invariants of the resulting rotations.

use nalgebra::{DMatrix, DVector};

use crate::error::{GaugeError, Result};

/// Max absolute asymmetry accepted when building a `SkewMatrix` from raw data.
pub const SKEW_TOL: f64 = 1e-12;
/// Max deviation from orthogonality accepted by [`conjugacy_invariants`].
pub const ORTHO_TOL: f64 = 1e-8;
/// Eigenvalues of -x^2 below this are treated as the zero block.
const ZERO_BLOCK_TOL: f64 = 1e-12;

/// A real skew-symmetric K x K matrix, the raw form of a connection coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    dim: usize,
    m: DMatrix<f64>,
}

impl SkewMatrix {
    /// Validates skew-symmetry within [`SKEW_TOL`] and symmetrizes the residual.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(GaugeError::validation(format!(
                "skew matrix must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        for i in 0..n {
            for j in 0..n {
                if (m[(i, j)] + m[(j, i)]).abs() > SKEW_TOL {
                    return Err(GaugeError::validation(format!(
                        "matrix is not skew-symmetric at ({i},{j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        let skew = 0.5 * (&m - m.transpose());
        Ok(Self { dim: n, m: skew })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            m: DMatrix::zeros(dim, dim),
        }
    }

    /// The elementary rotation generator on axes (i, j): entry (i,j) = -1, (j,i) = +1,
    /// so that `exp(theta * J)` rotates axis i towards axis j by `theta`.
    pub fn rotation_generator(dim: usize, i: usize, j: usize) -> Self {
        assert!(i < dim && j < dim && i != j);
        let mut m = DMatrix::zeros(dim, dim);
        m[(i, j)] = -1.0;
        m[(j, i)] = 1.0;
        Self { dim, m }
    }

    /// Block matrix with 2x2 rotation blocks of the given angles followed by zeros.
    pub fn from_block_angles(dim: usize, angles: &[f64]) -> Self {
        assert!(2 * angles.len() <= dim, "too many blocks for dimension");
        let mut m = DMatrix::zeros(dim, dim);
        for (k, &a) in angles.iter().enumerate() {
            m[(2 * k, 2 * k + 1)] = -a;
            m[(2 * k + 1, 2 * k)] = a;
        }
        Self { dim, m }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            m: &self.m * c,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            m: &self.m + &other.m,
        }
    }

    /// Commutator [self, other], the adjoint action needed for covariant
    /// derivatives of connection coefficients.
    pub fn bracket(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            m: &self.m * &other.m - &other.m * &self.m,
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.m * v
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    /// Largest block angle magnitude; the operator norm of a skew matrix.
    pub fn operator_norm(&self) -> f64 {
        let sf = standard_form(self);
        sf.raw_angles()
            .iter()
            .fold(0.0_f64, |acc, a| acc.max(a.abs()))
    }
}

/// Block-angle normal form of a skew matrix: an orthogonal frame conjugating it
/// into 2x2 rotation blocks followed by a zero block.
///
/// `angles[j]` is the block angle reduced mod 1 into [0, 1); `windings[j]` is
/// the discarded integer part, kept only so the exact reconstruction
/// `frame^T * x * frame = blocks(angles + windings)` remains available.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub dim: usize,
    pub angles: Vec<f64>,
    pub windings: Vec<i64>,
    pub frame: DMatrix<f64>,
}

impl StandardForm {
    /// Angles before the mod-1 normalization.
    pub fn raw_angles(&self) -> Vec<f64> {
        self.angles
            .iter()
            .zip(&self.windings)
            .map(|(a, w)| a + *w as f64)
            .collect()
    }

    /// The block matrix the frame conjugates into (raw angles, exact).
    pub fn block_matrix(&self) -> DMatrix<f64> {
        SkewMatrix::from_block_angles(self.dim, &self.raw_angles())
            .as_matrix()
            .clone()
    }

    /// Residual of the defining identity `frame^T x frame = blocks`.
    pub fn reconstruction_error(&self, x: &SkewMatrix) -> f64 {
        let lhs = self.frame.transpose() * x.as_matrix() * &self.frame;
        (lhs - self.block_matrix()).amax()
    }
}

/// Reduce a skew matrix to its block standard form.
///
/// Works on the symmetric positive semidefinite matrix -x^2 (block eigenvalues
/// a_j^2 with paired eigenvectors); block orientation is fixed so the (1,2)
/// entry of each reduced block is negative.
pub fn standard_form(x: &SkewMatrix) -> StandardForm {
    let k = x.dim();
    let s = -(x.as_matrix() * x.as_matrix());
    let eig = nalgebra::SymmetricEigen::new(s.clone());
    // The solver's eigenvalue array is not reliably aligned with its
    // eigenvector columns; recover each column's eigenvalue as a Rayleigh
    // quotient and order by that.
    let sv = &s * &eig.eigenvectors;
    let lams: Vec<f64> = (0..k)
        .map(|i| eig.eigenvectors.column(i).dot(&sv.column(i)))
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| lams[i].total_cmp(&lams[j]));

    let scale = x.frobenius_norm().max(1.0);
    let block_tol = ZERO_BLOCK_TOL * scale * scale;
    let group_tol = 1e-9 * scale * scale;

    let mut block_cols: Vec<DVector<f64>> = Vec::new();
    let mut kernel_cols: Vec<DVector<f64>> = Vec::new();
    let mut used = vec![false; k];

    for &idx in &order {
        if used[idx] {
            continue;
        }
        let lam = lams[idx].max(0.0);
        if lam <= block_tol {
            used[idx] = true;
            kernel_cols.push(eig.eigenvectors.column(idx).into_owned());
            continue;
        }
        let a = lam.sqrt();
        // Gather the whole eigenspace of this eigenvalue (even-dimensional)
        // and pair it as (v, x v / a); repeated angles get any orthonormal
        // basis of the eigenspace via Gram-Schmidt against earlier pairs.
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for &jdx in &order {
            if !used[jdx] && (lams[jdx].max(0.0) - lam).abs() <= group_tol {
                used[jdx] = true;
                basis.push(eig.eigenvectors.column(jdx).into_owned());
            }
        }
        let first = block_cols.len();
        for b in &basis {
            let mut v = b.clone();
            for p in &block_cols[first..] {
                let c = p.dot(&v);
                v -= p * c;
            }
            let nv = v.norm();
            if nv < 1e-8 {
                continue;
            }
            v /= nv;
            let w = x.apply(&v) / a;
            block_cols.push(v);
            block_cols.push(w);
        }
    }

    let m = block_cols.len() / 2;
    // Block b spans columns (2b, 2b+1); its raw angle is |x v_b|.
    let raw: Vec<f64> = (0..m).map(|b| x.apply(&block_cols[2 * b]).norm()).collect();

    let mut cols = block_cols;
    cols.extend(kernel_cols);
    let frame = DMatrix::from_columns(&cols);

    let mut angles = Vec::with_capacity(m);
    let mut windings = Vec::with_capacity(m);
    for a in raw {
        let w = a.floor();
        angles.push(a - w);
        windings.push(w as i64);
    }
    StandardForm {
        dim: k,
        angles,
        windings,
        frame,
    }
}

/// Exponential of a skew matrix: an element of SO(K).
///
/// Computed blockwise after standard-form reduction, which is exact for this
/// class; [`exp_skew_series`] is the independent scaling-and-squaring check.
pub fn exp_skew(x: &SkewMatrix) -> DMatrix<f64> {
    let sf = standard_form(x);
    let k = x.dim();
    let mut block = DMatrix::<f64>::identity(k, k);
    for (b, a) in sf.raw_angles().iter().enumerate() {
        let (s, c) = a.sin_cos();
        block[(2 * b, 2 * b)] = c;
        block[(2 * b, 2 * b + 1)] = -s;
        block[(2 * b + 1, 2 * b)] = s;
        block[(2 * b + 1, 2 * b + 1)] = c;
    }
    &sf.frame * block * sf.frame.transpose()
}

/// Reference matrix exponential by scaling and squaring with a Taylor core.
pub fn exp_skew_series(x: &SkewMatrix) -> DMatrix<f64> {
    let k = x.dim();
    let norm = x.frobenius_norm();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = x.as_matrix() / 2f64.powi(s as i32);
    let mut term = DMatrix::<f64>::identity(k, k);
    let mut sum = DMatrix::<f64>::identity(k, k);
    for n in 1..=24 {
        term = &term * &scaled / n as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Conjugation-invariant fingerprint of an orthogonal matrix: the sorted
/// multiset of rotation angles in [0, pi], floor(K/2) of them.
///
/// Distances between invariants are measured in full turns (angle / 2 pi), so
/// holonomy exponents and invariant distances share units.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugacyInvariant {
    pub dim: usize,
    pub rotation_angles: Vec<f64>,
}

impl ConjugacyInvariant {
    /// Max angle discrepancy in turn units (full rotation = 1).
    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.rotation_angles
            .iter()
            .zip(&other.rotation_angles)
            .map(|(a, b)| (a - b).abs() / (2.0 * std::f64::consts::PI))
            .fold(0.0_f64, f64::max)
    }
}

/// Rotation angles of an orthogonal matrix via the symmetric part:
/// eigenvalues of (g + g^T)/2 are {cos phi_j twice} plus {+-1 singles};
/// ascending pairs give the angle multiset without complex arithmetic.
pub fn conjugacy_invariants(g: &DMatrix<f64>) -> Result<ConjugacyInvariant> {
    let k = g.nrows();
    if k != g.ncols() || k == 0 {
        return Err(GaugeError::validation("matrix must be square and nonempty"));
    }
    let dev = (g.transpose() * g - DMatrix::<f64>::identity(k, k)).amax();
    if dev > ORTHO_TOL {
        return Err(GaugeError::validation(format!(
            "matrix is not orthogonal: |g^T g - I| = {dev:.3e}"
        )));
    }
    let sym = 0.5 * (g + g.transpose());
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    let mut angles: Vec<f64> = (0..k / 2)
        .map(|p| {
            let c = 0.5 * (vals[2 * p] + vals[2 * p + 1]);
            c.clamp(-1.0, 1.0).acos()
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(ConjugacyInvariant {
        dim: k,
        rotation_angles: angles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn rot2(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    fn random_skew(dim: usize, scale: f64, seed: u64) -> SkewMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                let v: f64 = rng.gen_range(-1.0..1.0) * scale;
                m[(i, j)] = -v;
                m[(j, i)] = v;
            }
        }
        SkewMatrix::from_matrix(m).unwrap()
    }

    fn random_orthogonal(dim: usize, seed: u64) -> DMatrix<f64> {
        exp_skew(&random_skew(dim, 1.5, seed))
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let x = SkewMatrix::zero(3);
        assert_eq!(exp_skew(&x), DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn exp_quarter_turn_matches_closed_form() {
        let j = SkewMatrix::rotation_generator(2, 0, 1);
        let e = exp_skew(&j.scale(std::f64::consts::FRAC_PI_2));
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(e, expect, epsilon = 1e-14);
    }

    #[test]
    fn exp_block_diagonal_is_blockwise() {
        let x = SkewMatrix::from_block_angles(
            4,
            &[std::f64::consts::PI / 3.0, std::f64::consts::PI / 4.0],
        );
        let e = exp_skew(&x);
        let mut expect = DMatrix::<f64>::zeros(4, 4);
        expect
            .view_mut((0, 0), (2, 2))
            .copy_from(&rot2(std::f64::consts::PI / 3.0));
        expect
            .view_mut((2, 2), (2, 2))
            .copy_from(&rot2(std::f64::consts::PI / 4.0));
        assert_abs_diff_eq!(e, expect, epsilon = 1e-13);
    }

    #[test]
    fn exp_result_is_special_orthogonal() {
        for seed in 0..8 {
            let x = random_skew(5, 3.0, seed);
            let e = exp_skew(&x);
            let dev = (e.transpose() * &e - DMatrix::<f64>::identity(5, 5)).amax();
            assert!(dev < 1e-10, "orthogonality drift {dev}");
            assert_abs_diff_eq!(e.determinant(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn non_skew_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(SkewMatrix::from_matrix(m).is_err());
    }

    #[test]
    fn standard_form_of_zero_is_empty() {
        let sf = standard_form(&SkewMatrix::zero(3));
        assert!(sf.angles.is_empty());
        assert_eq!(sf.dim, 3);
    }

    #[test]
    fn standard_form_simple_angle() {
        let j = SkewMatrix::rotation_generator(2, 0, 1);
        let sf = standard_form(&j.scale(0.3));
        assert_eq!(sf.angles.len(), 1);
        assert_abs_diff_eq!(sf.angles[0], 0.3, epsilon = 1e-12);
        assert!(sf.reconstruction_error(&j.scale(0.3)) < 1e-10);
    }

    #[test]
    fn standard_form_normalizes_mod_one() {
        let j = SkewMatrix::rotation_generator(2, 0, 1);
        let x = j.scale(1.3);
        let sf = standard_form(&x);
        assert_abs_diff_eq!(sf.angles[0], 0.3, epsilon = 1e-12);
        assert_eq!(sf.windings[0], 1);
        assert!(sf.reconstruction_error(&x) < 1e-10);
    }

    #[test]
    fn frame_is_orthogonal() {
        for seed in 0..6 {
            let x = random_skew(5, 2.0, 100 + seed);
            let sf = standard_form(&x);
            let dev = (sf.frame.transpose() * &sf.frame - DMatrix::<f64>::identity(5, 5)).amax();
            assert!(dev < 1e-10, "frame orthogonality {dev}");
            assert!(sf.reconstruction_error(&x) < 1e-9);
        }
    }

    #[test]
    fn repeated_angles_accept_any_eigenbasis() {
        // Degenerate multiplicity: both blocks carry the same angle; the
        // recovered multiset and the reconstruction identity must hold for
        // whatever orthonormal basis the eigensolver picked.
        for dim in [4usize, 5] {
            let frame = random_orthogonal(dim, 31 + dim as u64);
            let b = SkewMatrix::from_block_angles(dim, &[0.3, 0.3]);
            let x =
                SkewMatrix::from_matrix(frame.clone() * b.as_matrix() * frame.transpose()).unwrap();
            let sf = standard_form(&x);
            assert_eq!(sf.angles.len(), 2);
            for a in &sf.angles {
                assert_abs_diff_eq!(*a, 0.3, epsilon = 1e-9);
            }
            let dev =
                (sf.frame.transpose() * &sf.frame - DMatrix::<f64>::identity(dim, dim)).amax();
            assert!(dev < 1e-9, "frame orthogonality {dev}");
            assert!(sf.reconstruction_error(&x) < 1e-8);
        }
    }

    #[test]
    fn conjugacy_invariants_identity() {
        let inv = conjugacy_invariants(&DMatrix::<f64>::identity(3, 3)).unwrap();
        assert_eq!(inv.rotation_angles.len(), 1);
        assert_abs_diff_eq!(inv.rotation_angles[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn conjugacy_invariants_plane_rotation() {
        let mut g = DMatrix::<f64>::identity(3, 3);
        g.view_mut((0, 0), (2, 2))
            .copy_from(&rot2(std::f64::consts::FRAC_PI_2));
        let inv = conjugacy_invariants(&g).unwrap();
        assert_abs_diff_eq!(
            inv.rotation_angles[0],
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn conjugacy_invariants_reject_non_orthogonal() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(conjugacy_invariants(&m).is_err());
    }

    #[test]
    fn invariants_stable_under_conjugation() {
        for seed in 0..10 {
            let g = random_orthogonal(4, seed);
            let h = random_orthogonal(4, 1000 + seed);
            let conj = &h * &g * h.transpose();
            let a = conjugacy_invariants(&g).unwrap();
            let b = conjugacy_invariants(&conj).unwrap();
            assert!(a.distance(&b) < 1e-8, "distance {}", a.distance(&b));
        }
    }

    #[test]
    fn holonomy_invariant_depends_only_on_fractional_angles() {
        use std::f64::consts::TAU;
        for &a in &[0.15, 0.4, 0.85] {
            let x0 = SkewMatrix::from_block_angles(4, &[a, 0.3]).scale(-TAU);
            let x1 = SkewMatrix::from_block_angles(4, &[a + 1.0, 0.3 + 2.0]).scale(-TAU);
            let i0 = conjugacy_invariants(&exp_skew(&x0)).unwrap();
            let i1 = conjugacy_invariants(&exp_skew(&x1)).unwrap();
            assert!(i0.distance(&i1) < 1e-10);
        }
    }

    #[test]
    fn series_exponential_agrees_with_blockwise() {
        for seed in 0..6 {
            let x = random_skew(6, 4.0, 40 + seed);
            let d = (exp_skew(&x) - exp_skew_series(&x)).amax();
            assert!(d < 1e-11, "blockwise vs series {d}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn exp_times_exp_of_negation_is_identity(seed in 0u64..500, dim in 2usize..7) {
            let x = random_skew(dim, 10.0 / (dim as f64), seed);
            let e = exp_skew(&x) * exp_skew(&x.scale(-1.0));
            let dev = (e - DMatrix::<f64>::identity(dim, dim)).amax();
            prop_assert!(dev < 1e-10, "deviation {dev}");
        }

        #[test]
        fn standard_form_recovers_angles_under_conjugation(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut want = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
            let frame = random_orthogonal(5, seed.wrapping_add(7777));
            let b = SkewMatrix::from_block_angles(5, &want);
            let x = SkewMatrix::from_matrix(frame.clone() * b.as_matrix() * frame.transpose())
                .unwrap();
            let sf = standard_form(&x);
            let mut got = sf.angles.clone();
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            prop_assert_eq!(got.len(), 2);
            for (g, w) in got.iter().zip(want.iter()) {
                prop_assert!((g - w).abs() < 1e-9, "angle {g} vs {w}");
            }
        }
    }
}
