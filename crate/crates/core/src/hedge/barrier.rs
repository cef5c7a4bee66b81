//! Log-barrier path following for `min_h ρ_u(h'ΔS − ΔH)`.
//!
//! The loss `ℓ_i = −u(X_i)` of each scenario is the maximum of at most two
//! convex pieces in `h` (one for affine and exponential utilities, two for
//! the shortfall kink). With an epigraph variable `r_i ≥ pieces` the
//! objective becomes
//!
//! ```text
//! −E:        Σ w_i r_i
//! ES_α:      c + (1/α) Σ w_i r_i,             r_i ≥ ℓ_i − c,  r_i ≥ 0
//! entropic:  c + (1/A) Σ w_i (e^{A(r_i − c)} − 1)
//! ```
//!
//! The last line is the variational form of `(1/A) log E[e^{Aℓ}]`. Each
//! `r_i` enters one scalar barrier subproblem, which is solved exactly, so
//! Newton steps act on the global variables `g = (h, c)` only, with the
//! Schur complement of the `r` block assembled in a cancellation-free
//! pairwise form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::gaussian::hyperplane_basis;
use super::SolverOptions;
use crate::error::{Error, Result};
use crate::market::{ConstraintSet, Market};
use crate::preference::penalty::root_increasing;
use crate::preference::{ComposedPreference, Utility};
use crate::risk::RiskMeasure;

const BARRIER_GROWTH: f64 = 10.0;
const GAP_TOL: f64 = 1e-11;
const NEWTON_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 200;
const SNAP_TOL: f64 = 1e-9;
/// Relative eigenvalue below which a Newton direction counts as flat.
const EIGEN_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
enum Shape {
    /// `c0 + coef·X`.
    Linear { c0: f64, coef: f64 },
    /// `e^{−aX} − 1`.
    Exp { a: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    shape: Shape,
    /// Whether the auxiliary `c` is subtracted.
    minus_c: bool,
}

impl Piece {
    /// Value, first and second derivative in `X`.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        match self.shape {
            Shape::Linear { c0, coef } => (c0 + coef * x, coef, 0.0),
            Shape::Exp { a } => {
                let e = (-a * x).exp();
                (e - 1.0, -a * e, a * a * e)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Outer {
    NegExp,
    Es { alpha: f64 },
    Entropic { a: f64 },
}

enum Bounds {
    Free,
    Nonnegative,
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

struct Problem<'a> {
    market: &'a Market,
    /// `ΔH_i`.
    offset: Vec<f64>,
    pieces: Vec<Piece>,
    /// Leading pieces that describe the loss; the rest are ES floors.
    loss_pieces: usize,
    outer: Outer,
    bounds: Bounds,
    n: usize,
    m: usize,
    basis: DMatrix<f64>,
}

struct Eval {
    barrier: f64,
    objective: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

pub(super) fn solve(
    pref: &ComposedPreference,
    market: &Market,
    set: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let problem = Problem::new(pref, market, set);
    problem.run(set, opts)
}

impl<'a> Problem<'a> {
    fn new(pref: &ComposedPreference, market: &'a Market, set: &ConstraintSet) -> Self {
        let n = market.num_assets();
        let outer = match pref.rho() {
            RiskMeasure::NegExpectation => Outer::NegExp,
            RiskMeasure::ExpectedShortfall { alpha } => Outer::Es { alpha },
            RiskMeasure::Entropic { a } => Outer::Entropic { a },
            RiskMeasure::ValueAtRisk { .. } => unreachable!("rejected by the preference"),
        };
        let minus_c = matches!(outer, Outer::Es { .. });
        let mut pieces: Vec<Piece> = match pref.utility() {
            Utility::Affine { a, b } => vec![Piece { shape: Shape::Linear { c0: -a, coef: -b }, minus_c }],
            Utility::Exponential { a } => vec![Piece { shape: Shape::Exp { a }, minus_c }],
            Utility::Shortfall => vec![
                Piece { shape: Shape::Linear { c0: 0.0, coef: -1.0 }, minus_c },
                Piece { shape: Shape::Linear { c0: 0.0, coef: 0.0 }, minus_c },
            ],
        };
        let loss_pieces = pieces.len();
        if minus_c {
            pieces.push(Piece { shape: Shape::Linear { c0: 0.0, coef: 0.0 }, minus_c: false });
        }
        let has_c = !matches!(outer, Outer::NegExp);
        let m = n + usize::from(has_c);

        let (bounds, h_basis) = match set {
            ConstraintSet::Unconstrained => (Bounds::Free, DMatrix::identity(n, n)),
            ConstraintSet::BudgetHyperplane => (Bounds::Free, hyperplane_basis(n)),
            ConstraintSet::LongOnlySimplex => (Bounds::Nonnegative, hyperplane_basis(n)),
            ConstraintSet::Box { lo, hi } => {
                let free: Vec<usize> = (0..n).filter(|&i| lo[i] < hi[i]).collect();
                let mut z = DMatrix::zeros(n, free.len());
                for (col, &i) in free.iter().enumerate() {
                    z[(i, col)] = 1.0;
                }
                (Bounds::Box { lo: lo.clone(), hi: hi.clone() }, z)
            }
        };
        let p = h_basis.ncols() + usize::from(has_c);
        let mut basis = DMatrix::zeros(m, p);
        basis.view_mut((0, 0), (n, h_basis.ncols())).copy_from(&h_basis);
        if has_c {
            basis[(n, p - 1)] = 1.0;
        }

        Self {
            market,
            offset: market.claim_increment().into_values(),
            pieces,
            loss_pieces,
            outer,
            bounds,
            n,
            m,
            basis,
        }
    }

    fn num_barrier_terms(&self) -> usize {
        let bound_terms = match &self.bounds {
            Bounds::Free => 0,
            Bounds::Nonnegative => self.n,
            Bounds::Box { lo, hi } => 2 * lo.iter().zip(hi).filter(|(l, h)| l < h).count(),
        };
        self.market.num_scenarios() * self.pieces.len() + bound_terms
    }

    fn position(&self, h: &[f64], i: usize) -> f64 {
        let row = self.market.delta_s().row(i);
        row.iter().zip(h).map(|(s, h)| s * h).sum::<f64>() - self.offset[i]
    }

    /// `ℓ(X) = −u(X)`, the maximum over the utility pieces.
    fn loss(&self, x: f64) -> f64 {
        self.pieces[..self.loss_pieces]
            .iter()
            .map(|p| p.eval(x).0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn start(&self, set: &ConstraintSet) -> DVector<f64> {
        let h = set.center(self.n);
        let losses: Vec<f64> = (0..self.market.num_scenarios()).map(|i| self.loss(self.position(&h, i))).collect();
        let w = self.market.space().weights();
        let mut g = DVector::zeros(self.m);
        g.rows_mut(0, self.n).copy_from_slice(&h);
        match self.outer {
            Outer::NegExp => {}
            Outer::Es { .. } => g[self.n] = losses.iter().zip(w).map(|(l, w)| l * w).sum(),
            Outer::Entropic { a } => {
                let shift = losses.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(a * l));
                let sum: f64 = losses.iter().zip(w).map(|(l, w)| w * (a * l - shift).exp()).sum();
                g[self.n] = (shift + sum.ln()) / a;
            }
        }
        g
    }

    /// `ψ'(r)` and `ψ''(r)` of the per-scenario objective term.
    fn outer_slope(&self, r: f64, c: f64) -> (f64, f64) {
        match self.outer {
            Outer::NegExp => (1.0, 0.0),
            Outer::Es { alpha } => (1.0 / alpha, 0.0),
            Outer::Entropic { a } => {
                let e = (a * (r - c)).exp();
                (e, a * e)
            }
        }
    }

    /// Minimizes `τ w ψ(r) − Σ log(r − φ_j)` over `r`; returns `r − max φ`.
    fn inner_offset(&self, tau_w: f64, phi_max: f64, deltas: &[f64], c: f64) -> f64 {
        // Root in v = ln t of Σ 1/(t + δ_j) − τ w ψ'(φ_max + t), decreasing in v.
        let residual = |v: f64| {
            let t = v.exp();
            let barrier: f64 = deltas.iter().map(|d| 1.0 / (t + d)).sum();
            tau_w * self.outer_slope(phi_max + t, c).0 - barrier
        };
        let derivative = |v: f64| {
            let t = v.exp();
            let barrier: f64 = deltas.iter().map(|d| t / ((t + d) * (t + d))).sum();
            tau_w * self.outer_slope(phi_max + t, c).1 * t + barrier
        };
        // The slope underflows when the entropic offset c is far above φ.
        let v0 = -(tau_w * self.outer_slope(phi_max, c).0).ln();
        let v0 = if v0.is_finite() { v0.clamp(-700.0, 700.0) } else { 0.0 };
        let (mut lo, mut hi) = (v0, v0);
        let mut step = 1.0;
        while residual(lo) > 0.0 {
            lo -= step;
            step *= 2.0;
        }
        step = 1.0;
        while residual(hi) < 0.0 {
            hi += step;
            step *= 2.0;
        }
        if lo == hi {
            return lo.exp();
        }
        root_increasing(residual, derivative, lo, hi).exp()
    }

    /// Reduced barrier at `g`, or `None` outside the bound constraints.
    fn eval(&self, tau: f64, g: &DVector<f64>, derivatives: bool) -> Option<Eval> {
        let (n, m) = (self.n, self.m);
        let h: Vec<f64> = g.rows(0, n).iter().copied().collect();
        let c = if m > n { g[n] } else { 0.0 };
        let w = self.market.space().weights();
        let mut grad = DVector::zeros(if derivatives { m } else { 0 });
        let mut hess = DMatrix::zeros(if derivatives { m } else { 0 }, if derivatives { m } else { 0 });
        let mut barrier = 0.0;

        match &self.bounds {
            Bounds::Free => {}
            Bounds::Nonnegative => {
                for (i, &x) in h.iter().enumerate() {
                    if x <= 0.0 {
                        return None;
                    }
                    barrier -= x.ln();
                    if derivatives {
                        grad[i] -= 1.0 / x;
                        hess[(i, i)] += 1.0 / (x * x);
                    }
                }
            }
            Bounds::Box { lo, hi } => {
                for (i, &x) in h.iter().enumerate() {
                    if lo[i] == hi[i] {
                        continue;
                    }
                    let (a, b) = (x - lo[i], hi[i] - x);
                    if a <= 0.0 || b <= 0.0 {
                        return None;
                    }
                    barrier -= a.ln() + b.ln();
                    if derivatives {
                        grad[i] += -1.0 / a + 1.0 / b;
                        hess[(i, i)] += 1.0 / (a * a) + 1.0 / (b * b);
                    }
                }
            }
        }

        let mut objective = match self.outer {
            Outer::NegExp => 0.0,
            Outer::Es { .. } => c,
            Outer::Entropic { .. } => c,
        };
        if m > n {
            barrier += tau * c;
            if derivatives {
                grad[n] += tau;
            }
        }

        let np = self.pieces.len();
        let mut phi = vec![0.0; np];
        let mut deltas = vec![0.0; np];
        let mut dphi = vec![0.0; np];
        let mut d2phi = vec![0.0; np];
        let mut vecs: Vec<DVector<f64>> = vec![DVector::zeros(m); np + 1];
        let mut weights_pi = vec![0.0; np + 1];

        for (i, &wi) in w.iter().enumerate() {
            let x = self.position(&h, i);
            for (j, piece) in self.pieces.iter().enumerate() {
                let (v, d1, d2) = piece.eval(x);
                phi[j] = if piece.minus_c { v - c } else { v };
                dphi[j] = d1;
                d2phi[j] = d2;
            }
            if phi.iter().any(|p| !p.is_finite()) {
                return None;
            }
            let phi_max = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (d, p) in deltas.iter_mut().zip(&phi) {
                *d = phi_max - p;
            }
            let t = self.inner_offset(tau * wi, phi_max, &deltas, c);
            let r = phi_max + t;
            let (slope, curvature) = self.outer_slope(r, c);
            let psi = match self.outer {
                Outer::NegExp => r,
                Outer::Es { alpha } => r / alpha,
                Outer::Entropic { a } => (slope - 1.0) / a,
            };
            objective += wi * psi;
            barrier += tau * wi * psi;
            for d in &deltas {
                barrier -= (t + d).ln();
            }
            if !derivatives {
                continue;
            }

            let row = self.market.delta_s().row(i);
            let mut dsum = 0.0;
            for j in 0..np {
                let s = t + deltas[j];
                let v = &mut vecs[j];
                for (k, sk) in row.iter().enumerate() {
                    v[k] = dphi[j] * sk;
                }
                if m > n {
                    v[n] = if self.pieces[j].minus_c { -1.0 } else { 0.0 };
                }
                weights_pi[j] = 1.0 / (s * s);
                dsum += weights_pi[j];
                for k in 0..m {
                    grad[k] += v[k] / s;
                }
                if d2phi[j] != 0.0 {
                    let scale = d2phi[j] / s;
                    for a in 0..n {
                        for b in 0..n {
                            hess[(a, b)] += scale * row[a] * row[b];
                        }
                    }
                }
            }
            let mut count = np;
            if let Outer::Entropic { .. } = self.outer {
                grad[n] -= tau * wi * slope;
                let v = &mut vecs[np];
                v.fill(0.0);
                v[n] = 1.0;
                weights_pi[np] = tau * wi * curvature;
                dsum += weights_pi[np];
                count += 1;
            }
            for j in 0..count {
                for l in (j + 1)..count {
                    let coef = weights_pi[j] * weights_pi[l] / dsum;
                    if coef == 0.0 {
                        continue;
                    }
                    let diff = &vecs[j] - &vecs[l];
                    hess.ger(coef, &diff, &diff, 1.0);
                }
            }
        }

        Some(Eval { barrier, objective, grad, hess })
    }

    fn newton_direction(&self, e: &Eval) -> (DVector<f64>, f64) {
        let zt = self.basis.transpose();
        let reduced_grad = &zt * &e.grad;
        let mut reduced_hess = &zt * &e.hess * &self.basis;
        let p = reduced_hess.nrows();
        if p == 0 {
            return (DVector::zeros(self.m), 0.0);
        }
        // Redundant assets make the Hessian singular along directions the
        // objective ignores; the minimum-norm step leaves them alone.
        reduced_hess.fill_lower_triangle_with_upper_triangle();
        let eigen = SymmetricEigen::new(reduced_hess);
        let cutoff = EIGEN_CUTOFF * eigen.eigenvalues.amax();
        let coords = eigen.eigenvectors.transpose() * &reduced_grad;
        let scaled = DVector::from_fn(p, |i, _| {
            let lambda = eigen.eigenvalues[i];
            if lambda > cutoff {
                -coords[i] / lambda
            } else {
                0.0
            }
        });
        let dy = &eigen.eigenvectors * scaled;
        let decrement = -reduced_grad.dot(&dy);
        (&self.basis * dy, decrement)
    }

    /// Largest step below 1 keeping `h` strictly inside the bounds.
    fn max_step(&self, g: &DVector<f64>, dg: &DVector<f64>) -> f64 {
        let mut t: f64 = 1.0;
        let mut limit = |room: f64, rate: f64| {
            if rate < 0.0 {
                t = t.min(0.99 * room / -rate);
            }
        };
        match &self.bounds {
            Bounds::Free => {}
            Bounds::Nonnegative => {
                for i in 0..self.n {
                    limit(g[i], dg[i]);
                }
            }
            Bounds::Box { lo, hi } => {
                for i in 0..self.n {
                    if lo[i] < hi[i] {
                        limit(g[i] - lo[i], dg[i]);
                        limit(hi[i] - g[i], -dg[i]);
                    }
                }
            }
        }
        t
    }

    fn run(&self, set: &ConstraintSet, opts: &SolverOptions) -> Result<Vec<f64>> {
        let mut g = self.start(set);
        let terms = self.num_barrier_terms() as f64;
        let mut tau = 1.0;
        loop {
            let mut objective = f64::NAN;
            for _ in 0..MAX_NEWTON {
                let e = self
                    .eval(tau, &g, true)
                    .ok_or_else(|| Error::Numerical("barrier iterate left the domain".into()))?;
                objective = e.objective;
                if objective < opts.lower_guard {
                    return Err(Error::Unbounded { value: objective });
                }
                let (dg, decrement) = self.newton_direction(&e);
                if decrement / 2.0 <= NEWTON_TOL || !decrement.is_finite() {
                    break;
                }
                let mut t = self.max_step(&g, &dg);
                let mut accepted = false;
                for _ in 0..80 {
                    let trial = &g + t * &dg;
                    // Near the central point the change is below rounding
                    // of the barrier value, so take the step unchecked.
                    if decrement < 0.1 && t == 1.0 {
                        if self.eval(tau, &trial, false).is_some() {
                            g = trial;
                            accepted = true;
                            break;
                        }
                    } else if let Some(next) = self.eval(tau, &trial, false) {
                        if next.barrier <= e.barrier - 1e-4 * t * decrement {
                            g = trial;
                            accepted = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            if terms / tau <= GAP_TOL * objective.abs().max(1.0) {
                break;
            }
            tau *= BARRIER_GROWTH;
        }

        let mut h: Vec<f64> = g.rows(0, self.n).iter().copied().collect();
        match set {
            ConstraintSet::LongOnlySimplex => {
                h.iter_mut().filter(|x| **x < SNAP_TOL).for_each(|x| *x = 0.0);
                let total: f64 = h.iter().sum();
                h.iter_mut().for_each(|x| *x /= total);
            }
            ConstraintSet::Box { lo, hi } => {
                for i in 0..self.n {
                    if h[i] - lo[i] < SNAP_TOL * (1.0 + lo[i].abs()) {
                        h[i] = lo[i];
                    } else if hi[i] - h[i] < SNAP_TOL * (1.0 + hi[i].abs()) {
                        h[i] = hi[i];
                    }
                }
            }
            ConstraintSet::BudgetHyperplane => {
                let shift = (h.iter().sum::<f64>() - 1.0) / self.n as f64;
                h.iter_mut().for_each(|x| *x -= shift);
            }
            ConstraintSet::Unconstrained => {}
        }
        Ok(h)
    }
}
