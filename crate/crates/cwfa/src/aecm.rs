//! Two-cycle AECM fitting.
//!
//! Each outer iteration updates mixture weights, component means, regression
//! coefficients, and response variances from the posterior memberships
//! (cycle 1), then re-estimates the factor loadings and uniquenesses from the
//! latent-factor moments through an inner alternating iteration that honors
//! the equality constraints of the model code (cycle 2). Stopping uses the
//! Aitken estimate of the asymptotic log-likelihood.

use nalgebra::{DMatrix, DVector};

use crate::constraint::ConstraintCode;
use crate::error::{CwfaError, Result};
use crate::init::eigen_init;
use crate::linalg::{solve_against_theta, symmetrize, woodbury_inverse_logdet};
use crate::model::{
    loglik_from_log_matrix, log_weighted_density_matrix, map_labels, pin_labeled_rows,
    responsibilities_from_log, ComponentParams, CwfaParams, Dataset, Responsibilities,
    count_free_parameters,
};

/// Fitting options. Defaults follow the conventions used throughout: Aitken
/// tolerance 0.05, inner loop to 1e-6 max-norm change within 50 sweeps,
/// variance floors at 1e-8, and 10 k-means restarts.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub epsilon: f64,
    pub max_outer_iters: usize,
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    pub min_sigma2: f64,
    pub min_psi: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_outer_iters: 1000,
            inner_tol: 1e-6,
            max_inner_iters: 50,
            min_sigma2: 1e-8,
            min_psi: 1e-8,
            seed: 0,
            restarts: 10,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.min_sigma2 > 0.0 && self.min_psi > 0.0) {
            return Err(CwfaError::InvalidInput(
                "epsilon and variance floors must be positive".into(),
            ));
        }
        if self.max_outer_iters < 1 || self.max_inner_iters < 1 || self.restarts < 1 {
            return Err(CwfaError::InvalidInput("iteration caps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Latent-factor moments of one outer iteration: regression matrices
/// `gamma_g`, second moments `Theta_g`, weighted scatters `S_g`, and expected
/// component sizes `n_g`.
#[derive(Debug, Clone)]
pub struct LatentMoments {
    pub gamma: Vec<DMatrix<f64>>,
    pub theta: Vec<DMatrix<f64>>,
    pub scatter: Vec<DMatrix<f64>>,
    pub counts: DVector<f64>,
}

/// A converged (or capped) fit with diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: CwfaParams,
    pub responsibilities: Responsibilities,
    pub map_labels: Vec<usize>,
    pub loglik_trace: Vec<f64>,
    pub final_loglik: f64,
    pub eta: usize,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Weight/mean/regression/noise updates of the first cycle.
#[derive(Debug, Clone)]
pub struct Cycle1Params {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub intercepts: Vec<f64>,
    pub slopes: Vec<DVector<f64>>,
    pub noise_vars: Vec<f64>,
}

/// Maximize the first-cycle complete-data log-likelihood given memberships:
/// weighted means, weighted least-squares regression per component, and the
/// mean squared residual (pooled across components when the code constrains
/// the Y variance).
pub fn cycle1_update(
    data: &Dataset,
    resp: &Responsibilities,
    code: ConstraintCode,
    config: &FitConfig,
) -> Result<Cycle1Params> {
    let n = data.n();
    let p = data.p();
    let g_count = resp.n_components();
    let z = resp.matrix();

    let mut weights = Vec::with_capacity(g_count);
    let mut means = Vec::with_capacity(g_count);
    let mut intercepts = Vec::with_capacity(g_count);
    let mut slopes = Vec::with_capacity(g_count);
    let mut noise_vars = Vec::with_capacity(g_count);
    let mut counts = Vec::with_capacity(g_count);

    for g in 0..g_count {
        let ng: f64 = (0..n).map(|i| z[(i, g)]).sum();
        if ng < 2.0 {
            return Err(CwfaError::DegenerateComponent {
                component: g,
                iteration: 0,
            });
        }
        counts.push(ng);
        weights.push(ng / n as f64);

        let mut mu = DVector::zeros(p);
        let mut ybar = 0.0;
        for i in 0..n {
            let w = z[(i, g)];
            for j in 0..p {
                mu[j] += w * data.x()[(i, j)];
            }
            ybar += w * data.y()[i];
        }
        mu /= ng;
        ybar /= ng;

        // Weighted second moments about the weighted means.
        let mut second = DMatrix::zeros(p, p);
        let mut cross = DVector::zeros(p);
        let mut diff = DVector::zeros(p);
        for i in 0..n {
            let w = z[(i, g)];
            if w == 0.0 {
                continue;
            }
            for j in 0..p {
                diff[j] = data.x()[(i, j)] - mu[j];
            }
            let dy = data.y()[i] - ybar;
            for j in 0..p {
                let wdj = w * diff[j];
                cross[j] += wdj * dy;
                for k in j..p {
                    second[(j, k)] += wdj * diff[k];
                }
            }
        }
        for j in 0..p {
            for k in j..p {
                let v = second[(j, k)] / ng;
                second[(j, k)] = v;
                second[(k, j)] = v;
            }
            cross[j] /= ng;
        }

        let chol = second
            .cholesky()
            .ok_or(CwfaError::SingularRegression { component: g })?;
        let slope = chol.solve(&cross);
        let intercept = ybar - slope.dot(&mu);

        let mut sse = 0.0;
        for i in 0..n {
            let w = z[(i, g)];
            if w == 0.0 {
                continue;
            }
            let mut fitted = intercept;
            for j in 0..p {
                fitted += slope[j] * data.x()[(i, j)];
            }
            let r = data.y()[i] - fitted;
            sse += w * r * r;
        }
        noise_vars.push((sse / ng).max(config.min_sigma2));

        means.push(mu);
        intercepts.push(intercept);
        slopes.push(slope);
    }

    if code.sigma_equal {
        let pooled: f64 = noise_vars
            .iter()
            .zip(&counts)
            .map(|(&s2, &ng)| s2 * ng)
            .sum::<f64>()
            / n as f64;
        let pooled = pooled.max(config.min_sigma2);
        for s2 in &mut noise_vars {
            *s2 = pooled;
        }
    }

    Ok(Cycle1Params {
        weights,
        means,
        intercepts,
        slopes,
        noise_vars,
    })
}

/// Weighted scatter matrices `S_g` about the supplied means, and the expected
/// component sizes.
pub fn compute_scatter(
    data: &Dataset,
    resp: &Responsibilities,
    means: &[DVector<f64>],
) -> Result<(Vec<DMatrix<f64>>, DVector<f64>)> {
    let n = data.n();
    let p = data.p();
    let g_count = resp.n_components();
    let z = resp.matrix();
    let mut scatters = Vec::with_capacity(g_count);
    let mut counts = DVector::zeros(g_count);
    for g in 0..g_count {
        let ng: f64 = (0..n).map(|i| z[(i, g)]).sum();
        if !(ng > 0.0) {
            return Err(CwfaError::DegenerateComponent {
                component: g,
                iteration: 0,
            });
        }
        counts[g] = ng;
        let mut s = DMatrix::zeros(p, p);
        let mut diff = DVector::zeros(p);
        for i in 0..n {
            let w = z[(i, g)];
            if w == 0.0 {
                continue;
            }
            for j in 0..p {
                diff[j] = data.x()[(i, j)] - means[g][j];
            }
            for j in 0..p {
                let wdj = w * diff[j];
                for k in j..p {
                    s[(j, k)] += wdj * diff[k];
                }
            }
        }
        for j in 0..p {
            for k in j..p {
                let v = s[(j, k)] / ng;
                s[(j, k)] = v;
                s[(k, j)] = v;
            }
        }
        scatters.push(s);
    }
    Ok((scatters, counts))
}

/// Regression matrix `gamma = Lambda' (Lambda Lambda' + Psi)^-1` and latent
/// second moment `Theta = I_q - gamma Lambda + gamma S gamma'` (symmetrized).
pub fn compute_gamma_theta(
    loadings: &DMatrix<f64>,
    uniquenesses: &DVector<f64>,
    scatter: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (sigma_inv, _) = woodbury_inverse_logdet(loadings, uniquenesses)?;
    let gamma = loadings.transpose() * sigma_inv;
    let q = loadings.ncols();
    let theta = DMatrix::identity(q, q) - &gamma * loadings + &gamma * scatter * gamma.transpose();
    Ok((gamma, symmetrize(&theta)))
}

/// Loadings and uniquenesses after the constrained inner iteration, plus a
/// flag recording whether the inner loop met its tolerance.
#[derive(Debug, Clone)]
pub struct Cycle2Outcome {
    pub lambdas: Vec<DMatrix<f64>>,
    pub psis: Vec<DVector<f64>>,
    pub converged: bool,
}

/// Inner alternating iteration for loadings and uniquenesses under the last
/// three letters of the code. Alternates the CM updates with refreshes of
/// `(gamma, Theta)` until the max-norm change drops below `inner_tol` or the
/// sweep cap is hit (capped runs return the last iterate, flagged).
pub fn cycle2_update(
    code: ConstraintCode,
    moments: &LatentMoments,
    lambdas: &[DMatrix<f64>],
    psis: &[DVector<f64>],
    config: &FitConfig,
) -> Result<Cycle2Outcome> {
    let g_count = moments.scatter.len();
    let p = lambdas[0].nrows();
    let n: f64 = moments.counts.sum();
    let proportions: Vec<f64> = (0..g_count).map(|g| moments.counts[g] / n).collect();

    let mut lambdas: Vec<DMatrix<f64>> = lambdas.to_vec();
    let mut psis: Vec<DVector<f64>> = psis.to_vec();
    let mut gammas = moments.gamma.clone();
    let mut thetas = moments.theta.clone();

    let mut converged = false;
    for _ in 0..config.max_inner_iters {
        // S_g gamma_g', shared across the Lambda and Psi updates.
        let cross: Vec<DMatrix<f64>> = (0..g_count)
            .map(|g| &moments.scatter[g] * gammas[g].transpose())
            .collect();

        let new_lambdas: Vec<DMatrix<f64>> = if !code.lambda_equal {
            (0..g_count)
                .map(|g| solve_against_theta(&thetas[g], &cross[g]))
                .collect::<Result<_>>()?
        } else if !code.psi_equal {
            // Shared loadings with component-specific noise: row-by-row solve
            // weighted by n_g / psi_g(i).
            let q = lambdas[0].ncols();
            let mut shared = DMatrix::zeros(p, q);
            for i in 0..p {
                let mut a = DMatrix::zeros(q, q);
                let mut r = DMatrix::zeros(1, q);
                for g in 0..g_count {
                    let w = moments.counts[g] / psis[g][i];
                    a += &thetas[g] * w;
                    for j in 0..q {
                        r[(0, j)] += w * cross[g][(i, j)];
                    }
                }
                let row = solve_against_theta(&a, &r)?;
                for j in 0..q {
                    shared[(i, j)] = row[(0, j)];
                }
            }
            vec![shared; g_count]
        } else {
            // Fully shared covariance: pooled scatter and pooled Theta.
            let pooled_cross = weighted_sum(&cross, &proportions);
            let pooled_theta = weighted_sum(&thetas, &proportions);
            let shared = solve_against_theta(&pooled_theta, &pooled_cross)?;
            vec![shared; g_count]
        };

        let new_psis = update_psis(
            code,
            moments,
            &proportions,
            &new_lambdas,
            &gammas,
            &thetas,
            &cross,
            config.min_psi,
        );

        let mut change = 0.0f64;
        for g in 0..g_count {
            change = change.max((&new_lambdas[g] - &lambdas[g]).amax());
            change = change.max((&new_psis[g] - &psis[g]).amax());
        }
        lambdas = new_lambdas;
        psis = new_psis;
        for g in 0..g_count {
            let (gamma, theta) = compute_gamma_theta(&lambdas[g], &psis[g], &moments.scatter[g])?;
            gammas[g] = gamma;
            thetas[g] = theta;
        }
        if change < config.inner_tol {
            converged = true;
            break;
        }
    }

    Ok(Cycle2Outcome {
        lambdas,
        psis,
        converged,
    })
}

fn weighted_sum(mats: &[DMatrix<f64>], weights: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
    for (m, &w) in mats.iter().zip(weights) {
        out += m * w;
    }
    out
}

/// Diagonal of `S - Lambda (gamma S)` restricted to requested entries.
fn residual_diag(s: &DMatrix<f64>, lambda: &DMatrix<f64>, gamma_s: &DMatrix<f64>) -> DVector<f64> {
    let p = s.nrows();
    let q = lambda.ncols();
    DVector::from_fn(p, |i, _| {
        let mut v = s[(i, i)];
        for j in 0..q {
            v -= lambda[(i, j)] * gamma_s[(j, i)];
        }
        v
    })
}

/// Diagonal of `S - 2 Lambda (gamma S) + Lambda Theta Lambda'`, the
/// stationarity form needed when the loadings are shared and therefore do not
/// satisfy the per-component fixed-point identity.
fn stationary_diag(
    s: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    gamma_s: &DMatrix<f64>,
    theta: &DMatrix<f64>,
) -> DVector<f64> {
    let p = s.nrows();
    let q = lambda.ncols();
    DVector::from_fn(p, |i, _| {
        let mut v = s[(i, i)];
        for j in 0..q {
            v -= 2.0 * lambda[(i, j)] * gamma_s[(j, i)];
        }
        for a in 0..q {
            for b in 0..q {
                v += lambda[(i, a)] * theta[(a, b)] * lambda[(i, b)];
            }
        }
        v
    })
}

#[allow(clippy::too_many_arguments)]
fn update_psis(
    code: ConstraintCode,
    moments: &LatentMoments,
    proportions: &[f64],
    lambdas: &[DMatrix<f64>],
    gammas: &[DMatrix<f64>],
    thetas: &[DMatrix<f64>],
    cross: &[DMatrix<f64>],
    min_psi: f64,
) -> Vec<DVector<f64>> {
    let g_count = moments.scatter.len();
    let p = moments.scatter[0].nrows();
    let floor = |v: DVector<f64>| v.map(|x| x.max(min_psi));
    let iso = |v: &DVector<f64>| DVector::from_element(p, v.sum() / p as f64);

    if code.lambda_equal && code.psi_equal {
        // Pooled scatter against the shared loadings.
        let pooled_s = weighted_sum(&moments.scatter, proportions);
        let gamma_s = &gammas[0] * &pooled_s;
        let diag = residual_diag(&pooled_s, &lambdas[0], &gamma_s);
        let shared = floor(if code.psi_isotropic { iso(&diag) } else { diag });
        return vec![shared; g_count];
    }

    let diags: Vec<DVector<f64>> = (0..g_count)
        .map(|g| {
            // cross[g] = S_g gamma_g'; its transpose is gamma_g S_g.
            let gamma_s = cross[g].transpose();
            if code.lambda_equal {
                stationary_diag(&moments.scatter[g], &lambdas[g], &gamma_s, &thetas[g])
            } else {
                residual_diag(&moments.scatter[g], &lambdas[g], &gamma_s)
            }
        })
        .collect();

    if code.psi_equal {
        let pooled = weighted_sum_vec(&diags, proportions);
        let shared = floor(if code.psi_isotropic { iso(&pooled) } else { pooled });
        vec![shared; g_count]
    } else {
        diags
            .into_iter()
            .map(|d| floor(if code.psi_isotropic { iso(&d) } else { d }))
            .collect()
    }
}

fn weighted_sum_vec(vecs: &[DVector<f64>], weights: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(vecs[0].len());
    for (v, &w) in vecs.iter().zip(weights) {
        out += v * w;
    }
    out
}

/// Aitken-accelerated stopping rule on three consecutive log-likelihoods.
///
/// With `a = (l_next - l_curr)/(l_curr - l_prev)` the asymptotic estimate is
/// `l_inf = l_curr + (l_next - l_curr)/(1 - a)`; the fit stops once
/// `0 <= l_inf - l_curr < epsilon`. Flat sequences stop immediately, and
/// degenerate ratios fall back to an absolute increment test at
/// `epsilon * 1e-3`.
pub fn aitken_stop(l_prev: f64, l_curr: f64, l_next: f64, epsilon: f64) -> bool {
    let diff_next = l_next - l_curr;
    if diff_next < 1e-12 {
        return true;
    }
    let denom = l_curr - l_prev;
    if denom < 1e-12 {
        return diff_next < epsilon * 1e-3;
    }
    let a = diff_next / denom;
    if !(a > 0.0 && a < 1.0) {
        return diff_next < epsilon * 1e-3;
    }
    if a >= 1.0 - 1e-12 {
        return true;
    }
    let gap = diff_next / (1.0 - a);
    (0.0..epsilon).contains(&gap)
}

fn assemble_params(
    code: ConstraintCode,
    p: usize,
    q: usize,
    c1: &Cycle1Params,
    lambdas: &[DMatrix<f64>],
    psis: &[DVector<f64>],
) -> CwfaParams {
    let components = (0..c1.weights.len())
        .map(|g| ComponentParams {
            weight: c1.weights[g],
            intercept: c1.intercepts[g],
            slope: c1.slopes[g].clone(),
            noise_var: c1.noise_vars[g],
            mean: c1.means[g].clone(),
            loadings: lambdas[g].clone(),
            uniquenesses: psis[g].clone(),
        })
        .collect();
    CwfaParams {
        code,
        p,
        q,
        components,
    }
}

/// Eigen-based starting loadings and uniquenesses honoring the code's
/// sharing structure: shared quantities are seeded from the pooled scatter.
fn initial_factor_structure(
    code: ConstraintCode,
    scatters: &[DMatrix<f64>],
    counts: &DVector<f64>,
    q: usize,
    min_psi: f64,
) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let g_count = scatters.len();
    let p = scatters[0].nrows();
    let n: f64 = counts.sum();
    let weights: Vec<f64> = (0..g_count).map(|g| counts[g] / n).collect();
    let pooled = weighted_sum(scatters, &weights);

    let lambdas: Vec<DMatrix<f64>> = if code.lambda_equal {
        let (shared, _) = eigen_init(&pooled, q, min_psi);
        vec![shared; g_count]
    } else {
        scatters.iter().map(|s| eigen_init(s, q, min_psi).0).collect()
    };

    let mut psis: Vec<DVector<f64>> = if code.psi_equal {
        let reference = &lambdas[0];
        let shared = diag_minus_outer(&pooled, reference, min_psi);
        vec![shared; g_count]
    } else {
        (0..g_count)
            .map(|g| diag_minus_outer(&scatters[g], &lambdas[g], min_psi))
            .collect()
    };

    if code.psi_isotropic {
        for psi in &mut psis {
            let mean = psi.sum() / p as f64;
            *psi = DVector::from_element(p, mean.max(min_psi));
        }
        if code.psi_equal {
            let shared = psis[0].clone();
            psis = vec![shared; g_count];
        }
    }
    (lambdas, psis)
}

fn diag_minus_outer(s: &DMatrix<f64>, lambda: &DMatrix<f64>, min_psi: f64) -> DVector<f64> {
    DVector::from_fn(s.nrows(), |i, _| {
        let mut v = s[(i, i)];
        for j in 0..lambda.ncols() {
            v -= lambda[(i, j)] * lambda[(i, j)];
        }
        v.max(min_psi)
    })
}

fn expected_counts_ok(resp: &Responsibilities, iteration: usize) -> Result<()> {
    let z = resp.matrix();
    for g in 0..z.ncols() {
        let ng: f64 = (0..z.nrows()).map(|i| z[(i, g)]).sum();
        if ng < 2.0 {
            return Err(CwfaError::DegenerateComponent {
                component: g,
                iteration,
            });
        }
    }
    Ok(())
}

fn at_iteration(err: CwfaError, iteration: usize) -> CwfaError {
    match err {
        CwfaError::DegenerateComponent { component, .. } => CwfaError::DegenerateComponent {
            component,
            iteration,
        },
        other => other,
    }
}

/// Run the AECM loop from a hard initial partition. Rows with a known label
/// in `data` stay pinned to their component in every E-step (classification
/// mode); without labels this is plain model-based clustering.
pub fn fit(
    data: &Dataset,
    code: ConstraintCode,
    g_count: usize,
    q: usize,
    init_z: &[usize],
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let n = data.n();
    let p = data.p();
    if g_count < 1 {
        return Err(CwfaError::InvalidInput("need at least one component".into()));
    }
    if q < 1 || q > p {
        return Err(CwfaError::InvalidInput(format!("q={q} outside 1..=p={p}")));
    }
    if init_z.len() != n {
        return Err(CwfaError::InvalidInput("initial partition length mismatch".into()));
    }
    data.check_labels_within(g_count)?;
    for (i, &g) in init_z.iter().enumerate() {
        if g >= g_count {
            return Err(CwfaError::InvalidInput(format!(
                "initial partition assigns row {i} to component {g}"
            )));
        }
        if let Some(lab) = data.label_of(i) {
            if lab != g {
                return Err(CwfaError::InvalidInput(format!(
                    "initial partition conflicts with the known label of row {i}"
                )));
            }
        }
    }

    let mut resp = Responsibilities::hard(init_z, g_count)?;
    expected_counts_ok(&resp, 0)?;

    let mut c1 = cycle1_update(data, &resp, code, config).map_err(|e| at_iteration(e, 0))?;
    let (mut scatters, mut counts) = compute_scatter(data, &resp, &c1.means)?;
    let (mut lambdas, mut psis) =
        initial_factor_structure(code, &scatters, &counts, q, config.min_psi);

    let run_cycle2 = |scatters: &[DMatrix<f64>],
                          counts: &DVector<f64>,
                          lambdas: &[DMatrix<f64>],
                          psis: &[DVector<f64>]|
     -> Result<(Vec<DMatrix<f64>>, Vec<DVector<f64>>)> {
        let mut gammas = Vec::with_capacity(g_count);
        let mut thetas = Vec::with_capacity(g_count);
        for g in 0..g_count {
            let (gamma, theta) = compute_gamma_theta(&lambdas[g], &psis[g], &scatters[g])?;
            gammas.push(gamma);
            thetas.push(theta);
        }
        let moments = LatentMoments {
            gamma: gammas,
            theta: thetas,
            scatter: scatters.to_vec(),
            counts: counts.clone(),
        };
        let outcome = cycle2_update(code, &moments, lambdas, psis, config)?;
        Ok((outcome.lambdas, outcome.psis))
    };

    (lambdas, psis) = run_cycle2(&scatters, &counts, &lambdas, &psis)?;
    let mut params = assemble_params(code, p, q, &c1, &lambdas, &psis);
    let mut log_dens = log_weighted_density_matrix(data, &params)?;
    let mut trace = vec![loglik_from_log_matrix(data, &log_dens)];
    let mut converged = false;

    for iteration in 2..=config.max_outer_iters {
        resp = responsibilities_from_log(&log_dens);
        pin_labeled_rows(&mut resp, data);
        expected_counts_ok(&resp, iteration)?;

        c1 = cycle1_update(data, &resp, code, config).map_err(|e| at_iteration(e, iteration))?;
        (scatters, counts) = compute_scatter(data, &resp, &c1.means)?;
        (lambdas, psis) = run_cycle2(&scatters, &counts, &lambdas, &psis)?;
        params = assemble_params(code, p, q, &c1, &lambdas, &psis);
        log_dens = log_weighted_density_matrix(data, &params)?;
        trace.push(loglik_from_log_matrix(data, &log_dens));

        let k = trace.len();
        if k >= 3 && aitken_stop(trace[k - 3], trace[k - 2], trace[k - 1], config.epsilon) {
            converged = true;
            break;
        }
    }

    let mut responsibilities = responsibilities_from_log(&log_dens);
    pin_labeled_rows(&mut responsibilities, data);
    let labels = map_labels(&responsibilities);
    let final_loglik = *trace.last().unwrap();
    let eta = count_free_parameters(code, g_count, p, q)?;
    let bic = 2.0 * final_loglik - eta as f64 * (n as f64).ln();
    Ok(FitResult {
        params,
        responsibilities,
        map_labels: labels,
        loglik_trace: trace.clone(),
        final_loglik,
        eta,
        bic,
        iterations: trace.len(),
        converged,
    })
}
