//! Elementary symmetric polynomials, their positivity cones, and the
//! one-parameter family of normalized curvature functionals built on them.
//!
//! Two evaluation routes are provided and kept deliberately independent:
//! spectra (plain eigenvalue lists) are handled through the one-pass
//! Horner-style recurrence, and symmetric matrices are handled through the
//! Newton-tensor trace recursion. Neither route diagonalizes anything; cone
//! membership of a matrix is decided by the signs of its first k invariants,
//! which is equivalent to eigenvalue positivity but numerically far better
//! behaved near the cone boundary.
//!
//! All cone tests are strict (`> 0`). Margin policy (how far inside the cone
//! an iterate must stay) belongs to callers such as the solver line search.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Range of the positive-orthant half of the cone sampler. Bounded away from
/// zero so that scale-relative tolerances stay meaningful.
const POSITIVE_DRAW_RANGE: (f64, f64) = (0.01, 2.01);

/// Per-sample cap on rejection draws before sampling reports failure.
const REJECTION_BUDGET_PER_SAMPLE: usize = 10_000;

/// A list of n >= 2 finite reals, treated as the eigenvalues of some
/// symmetric endomorphism. Ordering carries no meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Parameter(format!(
                "spectrum needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("spectrum entries must be finite".into()));
        }
        Ok(Spectrum(values))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Dense symmetric n x n matrix. Both triangles are stored and kept equal
/// exactly: every mutation writes the mirrored entry, so `get(i, j) ==
/// get(j, i)` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zero(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SymMatrix::zero(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = SymMatrix::zero(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    /// Builds from row data, requiring exact symmetry of the input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("matrix rows must form a square".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Dimension(format!(
                        "entry ({i},{j}) = {} differs from ({j},{i}) = {}",
                        rows[i][j], rows[j][i]
                    )));
                }
            }
        }
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(SymMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    /// self + c * other
    pub fn add_scaled(&self, other: &SymMatrix, c: f64) -> SymMatrix {
        debug_assert_eq!(self.n, other.n);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + c * b)
            .collect();
        SymMatrix { n: self.n, data }
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Dense product, symmetrized. The true product of two commuting
    /// symmetric matrices is symmetric; rounding breaks that by ulps, so the
    /// average with the transpose is stored.
    fn mul_sym(&self, other: &SymMatrix) -> SymMatrix {
        let n = self.n;
        let mut raw = vec![0.0; n * n];
        for i in 0..n {
            for l in 0..n {
                let a = self.data[i * n + l];
                if a != 0.0 {
                    for j in 0..n {
                        raw[i * n + j] += a * other.data[l * n + j];
                    }
                }
            }
        }
        let mut m = SymMatrix::zero(n);
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * (raw[i * n + j] + raw[j * n + i]);
                m.set(i, j, v);
            }
        }
        m
    }
}

/// Strict cone test outcome. `margins[m-1]` is sigma_{m} of the tested point
/// (after deformation, when the test was made through a `FunctionalSpec`),
/// for m = 1..=k; membership requires every margin to be strictly positive.
#[derive(Debug, Clone)]
pub struct ConeMembership {
    pub inside: bool,
    pub margins: Vec<f64>,
}

impl ConeMembership {
    fn from_sigmas(sigmas: &[f64], k: usize) -> Self {
        let margins: Vec<f64> = sigmas[1..=k].to_vec();
        ConeMembership {
            inside: margins.iter().all(|&m| m > 0.0),
            margins,
        }
    }

    /// Smallest margin; non-positive exactly when outside.
    pub fn worst(&self) -> f64 {
        self.margins.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Exact binomial coefficient as a float (n stays single digit here, so the
/// integer arithmetic never overflows or rounds).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut acc: u128 = 1;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as f64
}

/// All elementary symmetric values e_0..e_n of `values` by the one-pass
/// recurrence e_m += x * e_{m-1} (descending m). Cost O(n^2); no subsets are
/// enumerated.
pub fn elem_sym_all(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (i, &x) in values.iter().enumerate() {
        for m in (1..=(i + 1)).rev() {
            e[m] += x * e[m - 1];
        }
    }
    e
}

/// e_0..e_{n-1} of `values` with entry `omit` removed, by rerunning the
/// recurrence on the remaining entries. Deliberately not synthetic division
/// by (x - values[omit]), which cancels badly for large omitted entries.
pub fn elem_sym_deleted(values: &[f64], omit: usize) -> Vec<f64> {
    let n = values.len();
    let mut e = vec![0.0; n];
    e[0] = 1.0;
    let mut seen = 0usize;
    for (i, &x) in values.iter().enumerate() {
        if i == omit {
            continue;
        }
        seen += 1;
        for m in (1..=seen).rev() {
            e[m] += x * e[m - 1];
        }
    }
    e
}

/// Membership of `lam` in the open cone cut out by sigma_1 > 0, ..,
/// sigma_k > 0. Margins are the raw sigma values, undeformed.
pub fn in_positive_cone(lam: &Spectrum, k: usize) -> Result<ConeMembership> {
    if k == 0 || k > lam.n() {
        return Err(Error::Parameter(format!(
            "cone order k = {k} out of range 1..={}",
            lam.n()
        )));
    }
    let sig = elem_sym_all(lam.values());
    Ok(ConeMembership::from_sigmas(&sig, k))
}

/// The interpolation t*lam + (1-t)*sigma_1(lam)*e, which carries the cone
/// family from the half-space sigma_1 > 0 (t = 0) to the undeformed cone
/// (t = 1). Linear in lam, so it commutes with scaling.
pub fn deformed_spectrum(t: f64, values: &[f64]) -> Vec<f64> {
    let s1: f64 = values.iter().sum();
    values.iter().map(|&v| t * v + (1.0 - t) * s1).collect()
}

/// Homogeneity normalization of the deformed functional: the deformation of
/// the all-ones spectrum is (t + n(1-t)) * e.
fn deformation_factor(n: usize, t: f64) -> f64 {
    t + (n as f64) * (1.0 - t)
}

/// Parameters of one member of the functional family: dimension n, cone
/// order k, deformation parameter t in [0, 1]. At t = 1 the functional is
/// the normalized k-th root binom(n,k)^{-1/k} sigma_k^{1/k}; at t = 0 it
/// degenerates to sigma_1 / n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalSpec {
    n: usize,
    k: usize,
    t: f64,
}

/// Value and entrywise derivative of the functional on a symmetric matrix,
/// together with the deformed-cone margins at the evaluation point.
#[derive(Debug, Clone)]
pub struct MatrixFunctional {
    pub value: f64,
    /// d(value)/dW_{ij} with W_{ij} and W_{ji} treated as independent
    /// entries, so a symmetric-pair perturbation moves the value by twice
    /// the off-diagonal entry.
    pub derivative: SymMatrix,
    pub margins: Vec<f64>,
}

impl FunctionalSpec {
    pub fn new(n: usize, k: usize, t: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("dimension n = {n} must be >= 2")));
        }
        if k == 0 || k > n {
            return Err(Error::Parameter(format!("cone order k = {k} out of range 1..={n}")));
        }
        if !(0.0..=1.0).contains(&t) || !t.is_finite() {
            return Err(Error::Parameter(format!("deformation t = {t} out of range [0, 1]")));
        }
        Ok(FunctionalSpec { n, k, t })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.n {
            return Err(Error::Dimension(format!(
                "spectrum dimension {n} does not match functional dimension {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Deformed-cone membership of a spectrum.
    pub fn membership(&self, lam: &Spectrum) -> Result<ConeMembership> {
        self.check_dim(lam.n())?;
        Ok(self.membership_values(lam.values()))
    }

    fn membership_values(&self, values: &[f64]) -> ConeMembership {
        let mu = deformed_spectrum(self.t, values);
        let sig = elem_sym_all(&mu);
        ConeMembership::from_sigmas(&sig, self.k)
    }

    /// Deformed-cone membership of a symmetric matrix, decided through the
    /// matrix invariants of the deformed matrix.
    pub fn matrix_membership(&self, w: &SymMatrix) -> Result<ConeMembership> {
        self.check_dim(w.n())?;
        let m = self.deform_matrix(w);
        let (sigmas, _) = newton_chain(&m, self.k);
        Ok(ConeMembership::from_sigmas(&sigmas, self.k))
    }

    fn deform_matrix(&self, w: &SymMatrix) -> SymMatrix {
        let mut m = w.scale(self.t);
        let shift = (1.0 - self.t) * w.trace();
        for i in 0..w.n() {
            let v = m.get(i, i) + shift;
            m.set(i, i, v);
        }
        m
    }

    pub fn value(&self, lam: &Spectrum) -> Result<f64> {
        Ok(self.value_and_gradient(lam)?.0)
    }

    pub fn gradient(&self, lam: &Spectrum) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(lam)?.1)
    }

    /// Value and gradient in one pass. Errors with the sigma margins if the
    /// deformed spectrum is not strictly inside the cone; the k-th root is
    /// never taken at sigma_k <= 0.
    pub fn value_and_gradient(&self, lam: &Spectrum) -> Result<(f64, Vec<f64>)> {
        self.check_dim(lam.n())?;
        let (n, k, t) = (self.n, self.k, self.t);
        let mu = deformed_spectrum(t, lam.values());
        let sig = elem_sym_all(&mu);
        let membership = ConeMembership::from_sigmas(&sig, k);
        if !membership.inside {
            return Err(Error::ConeViolation {
                margins: membership.margins,
            });
        }
        let c = binomial(n, k);
        let base = (sig[k] / c).powf(1.0 / k as f64);
        let phi = deformation_factor(n, t);
        let value = base / phi;

        // Gradient of the undeformed functional at mu, then the chain rule
        // through the linear deformation: each lambda_i feeds every mu_j
        // with weight (1 - t) plus itself with weight t.
        let mut grad_mu = vec![0.0; n];
        let mut grad_sum = 0.0;
        for i in 0..n {
            let deleted = elem_sym_deleted(&mu, i);
            let gi = base * deleted[k - 1] / (k as f64 * sig[k]);
            grad_mu[i] = gi;
            grad_sum += gi;
        }
        let grad = grad_mu
            .iter()
            .map(|&gi| (t * gi + (1.0 - t) * grad_sum) / phi)
            .collect();
        Ok((value, grad))
    }

    /// Matrix-route value and entrywise derivative, via Newton tensors of
    /// the deformed matrix. Agrees with the spectrum route on diagonal
    /// matrices and is orthogonally covariant.
    pub fn matrix(&self, w: &SymMatrix) -> Result<MatrixFunctional> {
        self.check_dim(w.n())?;
        let (n, k, t) = (self.n, self.k, self.t);
        let m = self.deform_matrix(w);
        let (sigmas, tensors) = newton_chain(&m, k);
        let membership = ConeMembership::from_sigmas(&sigmas, k);
        if !membership.inside {
            return Err(Error::ConeViolation {
                margins: membership.margins,
            });
        }
        let c = binomial(n, k);
        let base = (sigmas[k] / c).powf(1.0 / k as f64);
        let phi = deformation_factor(n, t);

        // dF/dM = base / (k sigma_k) * T_{k-1}(M), then the deformation
        // chain rule dM/dW adds (1-t) * trace part on the diagonal.
        let scale = base / (k as f64 * sigmas[k]);
        let t_prev = &tensors[k - 1];
        let trace_term = (1.0 - t) * scale * t_prev.trace();
        let mut derivative = t_prev.scale(t * scale);
        for i in 0..n {
            let v = derivative.get(i, i) + trace_term;
            derivative.set(i, i, v);
        }
        derivative = derivative.scale(1.0 / phi);
        Ok(MatrixFunctional {
            value: base / phi,
            derivative,
            margins: membership.margins,
        })
    }

    /// Deterministic sample of `count` spectra strictly inside the deformed
    /// cone. Even draws come from the positive orthant (uniform entries in
    /// [0.01, 2.01), always inside every deformed cone); odd draws are
    /// Gaussians with mean e and unit variance, rejected until they land
    /// inside. The mix keeps both well-interior and near-boundary points in
    /// every batch.
    pub fn sample_cone(&self, count: usize, seed: u64) -> Result<Vec<Spectrum>> {
        self.sample_cone_with_budget(count, seed, REJECTION_BUDGET_PER_SAMPLE)
    }

    fn sample_cone_with_budget(
        &self,
        count: usize,
        seed: u64,
        budget_per_sample: usize,
    ) -> Result<Vec<Spectrum>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut rejection_attempts = 0usize;
        let mut rejection_accepted = 0usize;
        for j in 0..count {
            if j % 2 == 0 {
                let v: Vec<f64> = (0..self.n)
                    .map(|_| rng.random_range(POSITIVE_DRAW_RANGE.0..POSITIVE_DRAW_RANGE.1))
                    .collect();
                debug_assert!(self.membership_values(&v).inside);
                out.push(Spectrum(v));
            } else {
                let mut accepted = false;
                for _ in 0..budget_per_sample {
                    rejection_attempts += 1;
                    let v: Vec<f64> = (0..self.n)
                        .map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    if self.membership_values(&v).inside {
                        rejection_accepted += 1;
                        out.push(Spectrum(v));
                        accepted = true;
                        break;
                    }
                }
                if !accepted {
                    return Err(Error::SamplingBudget {
                        requested: count,
                        accepted: out.len(),
                        attempts: rejection_attempts,
                        rate: rejection_accepted as f64 / rejection_attempts as f64,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Newton tensors T_0..T_m of `p` together with sigma_0..sigma_m(p), by the
/// trace recursion sigma_j = trace(T_{j-1} P) / j, T_j = sigma_j I - T_{j-1} P.
/// This is the Faddeev-LeVerrier sweep; T_{k-1} is simultaneously the
/// entrywise derivative of sigma_k.
pub fn newton_chain(p: &SymMatrix, m: usize) -> (Vec<f64>, Vec<SymMatrix>) {
    let n = p.n();
    debug_assert!(m <= n);
    let mut sigmas = vec![1.0];
    let mut tensors = vec![SymMatrix::identity(n)];
    for j in 1..=m {
        let prod = tensors[j - 1].mul_sym(p);
        let sigma_j = prod.trace() / j as f64;
        sigmas.push(sigma_j);
        let mut t_j = prod.scale(-1.0);
        for i in 0..n {
            let v = t_j.get(i, i) + sigma_j;
            t_j.set(i, i, v);
        }
        tensors.push(t_j);
    }
    (sigmas, tensors)
}

/// m-th Newton tensor of `p`.
pub fn newton_tensor(p: &SymMatrix, m: usize) -> Result<SymMatrix> {
    if m > p.n() {
        return Err(Error::Parameter(format!(
            "Newton tensor order {m} exceeds dimension {}",
            p.n()
        )));
    }
    let (_, mut tensors) = newton_chain(p, m);
    Ok(tensors.pop().expect("chain returns m+1 tensors"))
}

/// sigma_k of a symmetric matrix (the k-th characteristic invariant),
/// without diagonalizing.
pub fn sigma_of_matrix(w: &SymMatrix, k: usize) -> Result<f64> {
    if k > w.n() {
        return Err(Error::Parameter(format!(
            "invariant order {k} exceeds dimension {}",
            w.n()
        )));
    }
    let (sigmas, _) = newton_chain(w, k);
    Ok(sigmas[k])
}
