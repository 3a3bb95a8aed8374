use faer::Mat;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{sample_iw_dawid_factor, ScaleMatrix};
use crate::linalg;
use crate::model::{ChainState, Dataset, Hyperparams};
use crate::rng::{Block, Streams};

/// Prior inclusion rates are clamped to `[c, 1 − c]` when forming prior odds.
pub const THETA_PI_CLAMP: f64 = 1e-12;

/// Columns per task in the `Z` update. Fixed so that results do not depend
/// on the thread count.
const Z_CHUNK: usize = 32;

/// Conditional slab posterior `(ν̃, m̃)` at one site, where
/// `c = Σᵢ xᵢⱼ z̃ᵢⱼ(s)` and `xsq = Σᵢ xᵢⱼ²`.
#[inline]
pub fn slab_posterior(c: f64, xsq: f64, sigma_ss: f64, mu0: f64, s20: f64) -> (f64, f64) {
    let nu = 1.0 / (xsq / sigma_ss + 1.0 / s20);
    let m = c / sigma_ss + mu0 / s20;
    (nu, m)
}

/// Log of the site-wise Bayes factor `θ` of exclusion against inclusion.
#[inline]
pub fn log_theta(c: f64, xsq: f64, sigma_ss: f64, mu0: f64, s20: f64, pi: f64) -> f64 {
    let pi = pi.clamp(THETA_PI_CLAMP, 1.0 - THETA_PI_CLAMP);
    let (nu, m) = slab_posterior(c, xsq, sigma_ss, mu0, s20);
    (1.0 - pi).ln() - pi.ln() + 0.5 * s20.ln() + 0.5 * mu0 * mu0 / s20 - 0.5 * nu.ln()
        - 0.5 * m * m * nu
}

/// `P(τ = 1) = 1 / (1 + θ)` from `log θ`, without overflow.
#[inline]
pub fn inclusion_probability(log_theta: f64) -> f64 {
    if log_theta > 0.0 {
        let e = (-log_theta).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + log_theta.exp())
    }
}

/// A chain state together with the data and the caches the updates share.
///
/// `resid` always holds `Z − [1, X]·β`, and `sigma_chol` the lower Cholesky
/// factor of the current `Σ`.
pub struct Gibbs<'a> {
    pub data: &'a Dataset,
    pub hyper: &'a Hyperparams,
    pub psi: &'a ScaleMatrix,
    pub state: ChainState,
    pub streams: Streams,
    design: Mat<f64>,
    xsq: Vec<f64>,
    resid: Mat<f64>,
    sigma_chol: Mat<f64>,
}

impl<'a> Gibbs<'a> {
    pub fn new(
        data: &'a Dataset,
        hyper: &'a Hyperparams,
        psi: &'a ScaleMatrix,
        state: ChainState,
        streams: Streams,
    ) -> Result<Self> {
        let design = data.design();
        let xsq = (0..design.ncols())
            .map(|j| design.col_as_slice(j).iter().map(|v| v * v).sum())
            .collect();
        let sigma_chol = linalg::cholesky(state.sigma.as_ref())?;
        let mut g = Self {
            data,
            hyper,
            psi,
            state,
            streams,
            design,
            xsq,
            resid: Mat::zeros(0, 0),
            sigma_chol,
        };
        g.refresh_resid();
        Ok(g)
    }

    /// Recomputes `Z − [1, X]·β` from scratch.
    pub fn refresh_resid(&mut self) {
        let fitted = linalg::mul(self.design.as_ref(), self.state.beta.as_ref());
        self.resid = &self.state.z - &fitted;
    }

    /// Replaces `Σ` and its cached factor.
    pub fn set_sigma(&mut self, sigma: Mat<f64>) -> Result<()> {
        self.sigma_chol = linalg::cholesky(sigma.as_ref())?;
        self.state.sigma = sigma;
        Ok(())
    }

    pub fn into_state(self) -> ChainState {
        self.state
    }

    /// One full sweep. `update_sigma = false` holds `Σ` fixed.
    pub fn sweep(&mut self, iter: u64, update_sigma: bool) -> Result<()> {
        self.update_z(iter)?;
        self.update_sigma2_eps(iter)?;
        for j in 0..=self.data.q() {
            if j > 0 {
                self.update_tau_pi(j, iter);
            }
            self.update_beta(j, iter);
        }
        if update_sigma {
            self.update_sigma(iter)?;
        }
        debug_assert!(self.state.sparsity_violation(self.hyper.d).is_none());
        Ok(())
    }

    /// Draws every `Zᵢ` from its conditional `N(V(σ⁻²Yᵢ + Σ⁻¹μᵢ), V)` with
    /// `V = (Σ⁻¹ + σ⁻²I)⁻¹`, by conditioning a joint prior draw on the data:
    /// `Zᵢ = zᵢ* + Σ(Σ + σ²I)⁻¹(Yᵢ − zᵢ* − eᵢ)` with `zᵢ* ~ N(μᵢ, Σ)` and
    /// `eᵢ ~ N(0, σ²I)`. `Σ + σ²I` is factorized once for all subjects.
    pub fn update_z(&mut self, iter: u64) -> Result<()> {
        let (n, p) = (self.data.n(), self.data.p());
        let s2 = self.state.sigma2_eps;
        let sd = s2.sqrt();
        let mut shifted = self.state.sigma.clone();
        for s in 0..p {
            shifted[(s, s)] += s2;
        }
        let k = linalg::cholesky(shifted.as_ref())?;
        let mu = linalg::mul(self.design.as_ref(), self.state.beta.as_ref());

        let streams = self.streams;
        let sigma = &self.state.sigma;
        let lsig = &self.sigma_chol;
        let y = &self.data.y;
        let chunks: Vec<Mat<f64>> = (0..n.div_ceil(Z_CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * Z_CHUNK;
                let w = (lo + Z_CHUNK).min(n) - lo;
                let mut eps = Mat::<f64>::zeros(p, w);
                let mut resid = Mat::<f64>::zeros(p, w);
                for k in 0..w {
                    let mut rng = streams.rng(iter, Block::Z, (lo + k) as u64);
                    for s in 0..p {
                        eps[(s, k)] = rng.sample(StandardNormal);
                    }
                    for s in 0..p {
                        resid[(s, k)] = sd * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                // z* = μ + L_Σ ε
                let mut zstar = linalg::mul_lower(lsig.as_ref(), eps.as_ref());
                for k in 0..w {
                    for s in 0..p {
                        zstar[(s, k)] += mu[(lo + k, s)];
                        resid[(s, k)] = y[(lo + k, s)] - zstar[(s, k)] - resid[(s, k)];
                    }
                }
                linalg::solve_lower_in_place(k.as_ref(), &mut resid);
                linalg::solve_lower_transpose_in_place(k.as_ref(), &mut resid);
                zstar += linalg::mul(sigma.as_ref(), resid.as_ref());
                zstar
            })
            .collect();
        for (c, w) in chunks.into_iter().enumerate() {
            let lo = c * Z_CHUNK;
            for k in 0..w.ncols() {
                for s in 0..p {
                    self.state.z[(lo + k, s)] = w[(s, k)];
                }
            }
        }
        self.resid = &self.state.z - &mu;
        Ok(())
    }

    /// `σ²_ε ~ InvGamma(a_ε + np/2, b_ε + ½ Σᵢ ‖Yᵢ − Zᵢ‖²)`.
    pub fn update_sigma2_eps(&mut self, iter: u64) -> Result<()> {
        let (n, p) = (self.data.n(), self.data.p());
        let mut ss = 0.0;
        for s in 0..p {
            for i in 0..n {
                ss += (self.data.y[(i, s)] - self.state.z[(i, s)]).powi(2);
            }
        }
        let shape = self.hyper.a_eps + 0.5 * (n * p) as f64;
        let rate = self.hyper.b_eps + 0.5 * ss;
        let gamma = Gamma::new(shape, 1.0 / rate)
            .map_err(|e| Error::Domain(format!("noise variance posterior: {e}")))?;
        let mut rng = self.streams.rng(iter, Block::Sigma2Eps, 0);
        let draw = 1.0 / gamma.sample(&mut rng);
        if !(draw > 0.0 && draw.is_finite()) {
            return Err(Error::Degenerate(format!("noise variance draw {draw} is not positive")));
        }
        self.state.sigma2_eps = draw;
        Ok(())
    }

    /// `Σᵢ xᵢⱼ z̃ᵢⱼ(s)` at every site, with `z̃` the residual that leaves out
    /// covariate `j`.
    fn partial_cross(&self, j: usize) -> Vec<f64> {
        let x = self.design.col_as_slice(j);
        let xsq = self.xsq[j];
        (0..self.data.p())
            .map(|s| {
                let r = self.resid.col_as_slice(s);
                let dot: f64 = x.iter().zip(r).map(|(a, b)| a * b).sum();
                dot + xsq * self.state.beta[(j, s)]
            })
            .collect()
    }

    /// `log θⱼ(s)` for covariate `j ≥ 1` at site `s` against the current state.
    pub fn log_theta_at(&self, j: usize, s: usize) -> f64 {
        let c = self.partial_cross(j)[s];
        self.log_theta_from(j, s, c)
    }

    fn log_theta_from(&self, j: usize, s: usize, c: f64) -> f64 {
        log_theta(
            c,
            self.xsq[j],
            self.state.sigma[(s, s)],
            self.hyper.mu0[(j, s)],
            self.hyper.sigma2_0[(j, s)],
            self.state.pi[j - 1],
        )
    }

    /// Redraws `τⱼ(·)` site by site from `Bernoulli(1/(1+θ))`, then
    /// `πⱼ ~ Beta(a_π + Στ, b_π + p − Στ)`. Covariates are numbered from 1.
    pub fn update_tau_pi(&mut self, j: usize, iter: u64) {
        assert!(j >= 1, "the intercept has no indicators");
        let p = self.data.p();
        let cross = self.partial_cross(j);
        let streams = self.streams;
        let draws: Vec<bool> = (0..p)
            .into_par_iter()
            .map(|s| {
                let prob = inclusion_probability(self.log_theta_from(j, s, cross[s]));
                let mut rng = streams.rng(iter, Block::Tau(j), s as u64);
                rng.random::<f64>() < prob
            })
            .collect();
        let count = draws.iter().filter(|&&t| t).count();
        self.state.tau.row_mut(j - 1).copy_from_slice(&draws);
        let beta = Beta::new(self.hyper.a_pi + count as f64, self.hyper.b_pi + (p - count) as f64)
            .expect("Beta parameters are positive");
        let mut rng = self.streams.rng(iter, Block::Pi(j), 0);
        self.state.pi[j - 1] = beta.sample(&mut rng);
    }

    /// Redraws `βⱼ(·)`: exactly zero where `τⱼ(s)·I(πⱼ ≥ d) = 0`, otherwise
    /// `N(ν̃m̃, ν̃)`. The intercept (`j = 0`) is always drawn.
    pub fn update_beta(&mut self, j: usize, iter: u64) {
        let p = self.data.p();
        let cross = self.partial_cross(j);
        let global_on = j == 0 || self.state.pi[j - 1] >= self.hyper.d;
        let streams = self.streams;
        let new: Vec<f64> = (0..p)
            .into_par_iter()
            .map(|s| {
                if !(global_on && (j == 0 || self.state.tau.get(j - 1, s))) {
                    return 0.0;
                }
                let (nu, m) = slab_posterior(
                    cross[s],
                    self.xsq[j],
                    self.state.sigma[(s, s)],
                    self.hyper.mu0[(j, s)],
                    self.hyper.sigma2_0[(j, s)],
                );
                let mut rng = streams.rng(iter, Block::Beta(j), s as u64);
                nu * m + nu.sqrt() * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let n = self.data.n();
        for s in 0..p {
            let delta = new[s] - self.state.beta[(j, s)];
            if delta != 0.0 {
                for i in 0..n {
                    self.resid[(i, s)] -= self.design[(i, j)] * delta;
                }
            }
            self.state.beta[(j, s)] = new[s];
        }
    }

    /// `Σ ~ IW_Dawid(n + δ, Σᵢ(Zᵢ − μᵢ)(Zᵢ − μᵢ)ᵀ + Ψ)`.
    pub fn update_sigma(&mut self, iter: u64) -> Result<()> {
        let n = self.data.n();
        let mut scale = linalg::gram(self.resid.as_ref());
        scale += self.psi.psi();
        let scale = ScaleMatrix::new(scale)?;
        let mut rng = self.streams.rng(iter, Block::Sigma, 0);
        let (sigma, chol) =
            sample_iw_dawid_factor((n as u32 + self.hyper.delta) as f64, &scale, &mut rng)?;
        self.state.sigma = sigma;
        self.sigma_chol = chol;
        Ok(())
    }
}
