//! Closed forms for jointly Gaussian returns under the budget constraint
//! `Σ h_i = 1`.
//!
//! With `R = ΔS − ΔH ~ N(μ, Σ)` per asset, the hedged position `h'R` is
//! `N(h'μ, h'Σh)`. On the budget hyperplane this equals `h'ΔS − ΔH`, which is
//! why every solver here fixes the budget.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::HedgeSolution;
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const MIN_EIGENVALUE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMarket {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
}

impl GaussianMarket {
    pub fn new(mu: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::InvalidParameter("Gaussian market needs at least one asset".into()));
        }
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: sigma.nrows() });
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("mean and covariance must be finite".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::SingularCovariance);
                }
            }
        }
        let min_eig = SymmetricEigen::new(sigma.clone()).eigenvalues.min();
        if min_eig <= MIN_EIGENVALUE {
            return Err(Error::SingularCovariance);
        }
        Ok(Self { mu: DVector::from_vec(mu), sigma })
    }

    /// [`GaussianMarket::new`] with the covariance given row by row.
    pub fn from_rows(mu: Vec<f64>, sigma: &[Vec<f64>]) -> Result<Self> {
        let n = mu.len();
        if sigma.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: sigma.len() });
        }
        if let Some(row) = sigma.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: row.len() });
        }
        Self::new(mu, DMatrix::from_fn(n, n, |i, j| sigma[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Mean and standard deviation of `h'R`.
    pub fn moments(&self, h: &[f64]) -> Result<(f64, f64)> {
        if h.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: h.len() });
        }
        let h = DVector::from_column_slice(h);
        let m = h.dot(&self.mu);
        let var = h.dot(&(&self.sigma * &h)).max(0.0);
        Ok((m, var.sqrt()))
    }
}

/// The two preferences whose Gaussian optimum is the mean-variance solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianObjective {
    /// `ρ = −E`, `u(x) = 1 − e^{−ax}`: value `exp(a(−m + a s²/2)) − 1`.
    NegExpExponential,
    /// `ρ` entropic with parameter `a`, identity utility: value `−m + a s²/2`.
    EntropicIdentity,
}

impl GaussianObjective {
    fn value(self, a: f64, m: f64, s2: f64) -> f64 {
        let meanvar = -m + 0.5 * a * s2;
        match self {
            GaussianObjective::NegExpExponential => (a * meanvar).exp_m1(),
            GaussianObjective::EntropicIdentity => meanvar,
        }
    }
}

/// Minimizer of `−h'μ + (a/2) h'Σh` subject to `Σ h_i = 1`:
/// `h = (λ Σ⁻¹1 + Σ⁻¹μ) / a` with `λ = (a − 1'Σ⁻¹μ) / 1'Σ⁻¹1`.
pub fn solve_gaussian_meanvar(
    g: &GaussianMarket,
    a: f64,
    objective: GaussianObjective,
) -> Result<HedgeSolution> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!("risk aversion must be positive, got {a}")));
    }
    let n = g.dim();
    let chol = Cholesky::new(g.sigma.clone()).ok_or(Error::SingularCovariance)?;
    let ones = DVector::from_element(n, 1.0);
    let inv_one = chol.solve(&ones);
    let inv_mu = chol.solve(&g.mu);
    let lambda = (a - inv_mu.sum()) / inv_one.sum();
    let mut h: Vec<f64> = ((lambda * &inv_one + &inv_mu) / a).iter().copied().collect();
    let shift = (h.iter().sum::<f64>() - 1.0) / n as f64;
    h.iter_mut().for_each(|x| *x -= shift);

    let (m, s) = g.moments(&h)?;
    let hv = DVector::from_column_slice(&h);
    let kkt = a * (&g.sigma * &hv) - &g.mu - DVector::from_element(n, lambda);
    Ok(HedgeSolution {
        value: objective.value(a, m, s * s),
        h,
        multiplier: Some(lambda),
        witness: None,
        residual: kkt.norm(),
    })
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// `Φ⁻¹(α)` polished with Newton steps on `Φ(z) = α`.
fn normal_quantile(normal: &Normal, alpha: f64) -> f64 {
    let mut z = normal.inverse_cdf(alpha);
    for _ in 0..3 {
        z -= (normal.cdf(z) - alpha) / normal.pdf(z);
    }
    z
}

fn check_es_args(a: f64, alpha: f64) -> Result<()> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!("utility parameter must be positive, got {a}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::LevelOutOfRange(alpha));
    }
    Ok(())
}

/// `ES_α(1 − e^{−aY})` for `Y = h'R ~ N(m, s²)`:
/// `(1/α) exp(−am + a²s²/2) Φ(Φ⁻¹(α) + as) − 1`.
pub fn gaussian_es_exp_objective(h: &[f64], g: &GaussianMarket, a: f64, alpha: f64) -> Result<f64> {
    check_es_args(a, alpha)?;
    let (m, s) = g.moments(h)?;
    let normal = standard_normal();
    let z = normal_quantile(&normal, alpha);
    Ok((-a * m + 0.5 * a * a * s * s).exp() * normal.cdf(z + a * s) / alpha - 1.0)
}

/// Gradient in `h` of [`gaussian_es_exp_objective`].
pub fn gaussian_es_exp_gradient(h: &[f64], g: &GaussianMarket, a: f64, alpha: f64) -> Result<Vec<f64>> {
    check_es_args(a, alpha)?;
    let (m, s) = g.moments(h)?;
    let normal = standard_normal();
    let z = normal_quantile(&normal, alpha);
    let e = (-a * m + 0.5 * a * a * s * s).exp();
    let sh = &g.sigma * DVector::from_column_slice(h);
    let big_phi = normal.cdf(z + a * s);
    // s = 0 only at h = 0, which the budget excludes.
    let density_term = if s > 0.0 { e * normal.pdf(z + a * s) * a / s } else { 0.0 };
    Ok((0..g.dim())
        .map(|i| (e * big_phi * (-a * g.mu[i] + a * a * sh[i]) + density_term * sh[i]) / alpha)
        .collect())
}

/// Minimizes [`gaussian_es_exp_objective`] over `Σ h_i = 1` by damped Newton
/// steps in hyperplane coordinates, with a Hessian from central differences
/// of the analytic gradient.
pub fn solve_gaussian_es(g: &GaussianMarket, a: f64, alpha: f64) -> Result<HedgeSolution> {
    check_es_args(a, alpha)?;
    let n = g.dim();
    let basis = hyperplane_basis(n);
    let p = basis.ncols();
    let mut h = vec![1.0 / n as f64; n];
    let f = |h: &[f64]| gaussian_es_exp_objective(h, g, a, alpha);
    let grad = |h: &[f64]| gaussian_es_exp_gradient(h, g, a, alpha);
    let project = |v: &[f64]| basis.transpose() * DVector::from_column_slice(v);

    if p > 0 {
        let mut value = f(&h)?;
        for _ in 0..200 {
            let rg = project(&grad(&h)?);
            if rg.norm() <= 1e-13 * (1.0 + value.abs()) {
                break;
            }
            let step = 1e-5;
            let mut hess = DMatrix::zeros(p, p);
            for j in 0..p {
                let dir = basis.column(j);
                let plus: Vec<f64> = h.iter().zip(dir.iter()).map(|(x, d)| x + step * d).collect();
                let minus: Vec<f64> = h.iter().zip(dir.iter()).map(|(x, d)| x - step * d).collect();
                let col = (project(&grad(&plus)?) - project(&grad(&minus)?)) / (2.0 * step);
                hess.set_column(j, &col);
            }
            let hess = 0.5 * (&hess + hess.transpose());
            let dy = match Cholesky::new(hess) {
                Some(c) => -c.solve(&rg),
                None => -rg.clone(),
            };
            let dh = &basis * &dy;
            let slope = rg.dot(&dy);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = h.iter().zip(dh.iter()).map(|(x, d)| x + t * d).collect();
                let v = f(&trial)?;
                if v <= value + 1e-4 * t * slope {
                    h = trial;
                    value = v;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }

    let gradient = grad(&h)?;
    let lambda = gradient.iter().sum::<f64>() / n as f64;
    let residual = gradient.iter().map(|x| (x - lambda).powi(2)).sum::<f64>().sqrt();
    Ok(HedgeSolution {
        value: f(&h)?,
        h,
        multiplier: Some(lambda),
        witness: None,
        residual,
    })
}

/// Orthonormal basis of `{d : Σ d_i = 0}` (Helmert contrasts), `n × (n−1)`.
pub(crate) fn hyperplane_basis(n: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(n, n.saturating_sub(1));
    for j in 1..n {
        let norm = ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            z[(i, j - 1)] = 1.0 / norm;
        }
        z[(j, j - 1)] = -(j as f64) / norm;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let s = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;
        0.5 * (&s + s.transpose())
    }

    #[test]
    fn identity_covariance_example() {
        let g = GaussianMarket::new(vec![0.1, 0.3], DMatrix::identity(2, 2)).unwrap();
        let sol = solve_gaussian_meanvar(&g, 1.0, GaussianObjective::EntropicIdentity).unwrap();
        assert!((sol.multiplier.unwrap() - 0.3).abs() < 1e-15);
        assert!((sol.h[0] - 0.4).abs() < 1e-15 && (sol.h[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn symmetric_market_gives_equal_weights() {
        for n in 1..6 {
            let g = GaussianMarket::new(vec![0.0; n], DMatrix::identity(n, n)).unwrap();
            let sol = solve_gaussian_meanvar(&g, 2.7, GaussianObjective::NegExpExponential).unwrap();
            assert!(sol.h.iter().all(|&x| (x - 1.0 / n as f64).abs() < 1e-15));
        }
    }

    #[test]
    fn kkt_residual_and_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let n = rng.random_range(1..7);
            let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
            let g = GaussianMarket::new(mu, random_spd(n, &mut rng)).unwrap();
            let sol = solve_gaussian_meanvar(&g, 2.0, GaussianObjective::EntropicIdentity).unwrap();
            assert!(sol.residual <= 1e-9, "{}", sol.residual);
            assert!((sol.h.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn both_objectives_share_the_minimizer() {
        let g = GaussianMarket::new(vec![0.2, -0.1, 0.05], DMatrix::from_row_slice(3, 3, &[
            1.0, 0.2, 0.1, 0.2, 0.5, -0.1, 0.1, -0.1, 0.8,
        ]))
        .unwrap();
        let a = solve_gaussian_meanvar(&g, 1.3, GaussianObjective::NegExpExponential).unwrap();
        let b = solve_gaussian_meanvar(&g, 1.3, GaussianObjective::EntropicIdentity).unwrap();
        assert_eq!(a.h, b.h);
        assert!(((b.value * 1.3).exp_m1() - a.value).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_covariance() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert_eq!(GaussianMarket::new(vec![0.0, 0.0], asym), Err(Error::SingularCovariance));
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(GaussianMarket::new(vec![0.0, 0.0], singular), Err(Error::SingularCovariance));
    }

    #[test]
    fn es_objective_degenerate_and_small_a_limits() {
        // Σ → 0: deterministic position, ES of the constant u(m) is −u(m).
        let tiny = DMatrix::identity(1, 1) * 1e-9;
        let g = GaussianMarket::new(vec![0.3], tiny).unwrap();
        let v = gaussian_es_exp_objective(&[1.0], &g, 2.0, 0.1).unwrap();
        assert!((v - ((-0.6f64).exp() - 1.0)).abs() < 1e-3);

        // value / a → Gaussian ES of N(0, 1) at 5%, ≈ 2.0627.
        let g = GaussianMarket::new(vec![0.0], DMatrix::identity(1, 1)).unwrap();
        let a = 1e-6;
        let v = gaussian_es_exp_objective(&[1.0], &g, a, 0.05).unwrap() / a;
        let normal = standard_normal();
        let exact = normal.pdf(normal_quantile(&normal, 0.05)) / 0.05;
        assert!((v - exact).abs() < 1e-5, "{v} vs {exact}");
        assert!((exact - 2.0627).abs() < 1e-4);
    }

    #[test]
    fn es_objective_matches_quadrature() {
        // Oracle: (1/α)∫_{−∞}^{z_α} e^{−a(m+sz)} φ(z) dz − 1, Simpson's rule
        // on [z_α − 12, z_α].
        let g = GaussianMarket::new(vec![0.1, -0.05], DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]))
            .unwrap();
        let h = [0.7, 0.3];
        let (m, s) = g.moments(&h).unwrap();
        let normal = standard_normal();
        for (a, alpha) in [(1.0, 0.05), (3.0, 0.2), (0.5, 0.5)] {
            let top = normal_quantile(&normal, alpha);
            let steps = 20_000;
            let dz = 12.0 / steps as f64;
            let f = |z: f64| (-a * (m + s * z)).exp() * normal.pdf(z);
            let integral: f64 = (0..=steps)
                .map(|i| {
                    let weight = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    weight * f(top - 12.0 + i as f64 * dz)
                })
                .sum::<f64>()
                * dz
                / 3.0;
            let oracle = integral / alpha - 1.0;
            let v = gaussian_es_exp_objective(&h, &g, a, alpha).unwrap();
            assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
        }
    }

    #[test]
    fn es_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(1..5);
            let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
            let g = GaussianMarket::new(mu, random_spd(n, &mut rng) * 0.2).unwrap();
            let h: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, alpha) = (rng.random_range(0.2..2.0), rng.random_range(0.02..0.5));
            let grad = gaussian_es_exp_gradient(&h, &g, a, alpha).unwrap();
            for i in 0..n {
                let mut hp = h.clone();
                let mut hm = h.clone();
                hp[i] += 1e-5;
                hm[i] -= 1e-5;
                let fd = (gaussian_es_exp_objective(&hp, &g, a, alpha).unwrap()
                    - gaussian_es_exp_objective(&hm, &g, a, alpha).unwrap())
                    / 2e-5;
                assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + grad[i].abs()), "{fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn es_solver_reaches_stationarity() {
        let g = GaussianMarket::new(vec![0.05, 0.02, -0.01], DMatrix::from_row_slice(3, 3, &[
            0.04, 0.01, 0.0, 0.01, 0.02, 0.005, 0.0, 0.005, 0.03,
        ]))
        .unwrap();
        let sol = solve_gaussian_es(&g, 2.0, 0.05).unwrap();
        assert!(sol.residual <= 1e-8, "{}", sol.residual);
        assert!((sol.h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // No budget-preserving nudge improves the value.
        for d in [[0.01, -0.01, 0.0], [0.0, 0.01, -0.01], [-0.01, 0.0, 0.01]] {
            let trial: Vec<f64> = sol.h.iter().zip(d).map(|(h, d)| h + d).collect();
            assert!(gaussian_es_exp_objective(&trial, &g, 2.0, 0.05).unwrap() > sol.value);
        }
    }

    #[test]
    fn helmert_basis_is_orthonormal_and_balanced() {
        let z = hyperplane_basis(5);
        let gram = z.transpose() * &z;
        assert!((gram - DMatrix::identity(4, 4)).norm() < 1e-14);
        for j in 0..4 {
            assert!(z.column(j).sum().abs() < 1e-15);
        }
    }
}
