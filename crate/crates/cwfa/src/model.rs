//! Parameter containers, density evaluation, posterior responsibilities, and
//! free-parameter counting for the sixteen-model family.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraint::ConstraintCode;
use crate::error::{CwfaError, Result};
use crate::linalg::{sigma_from_factors, woodbury_inverse_logdet};

pub const PARAMS_FORMAT_VERSION: u32 = 1;

/// Parameters of one mixture component.
///
/// The conditional response model is `y | x ~ N(intercept + slope'x, noise_var)`
/// and the covariate model is `x ~ N(mean, loadings loadings' + diag(uniquenesses))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentParams {
    pub weight: f64,
    pub intercept: f64,
    pub slope: DVector<f64>,
    pub noise_var: f64,
    pub mean: DVector<f64>,
    pub loadings: DMatrix<f64>,
    pub uniquenesses: DVector<f64>,
}

impl ComponentParams {
    /// Dense covariance of the covariate block.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        sigma_from_factors(&self.loadings, &self.uniquenesses)
    }
}

/// Full parameter set of a fitted or constructed model.
#[derive(Debug, Clone, PartialEq)]
pub struct CwfaParams {
    pub code: ConstraintCode,
    pub p: usize,
    pub q: usize,
    pub components: Vec<ComponentParams>,
}

impl CwfaParams {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Check structural invariants: weights on the simplex, positive
    /// variances, dimensions, and the cross-component equalities implied by
    /// the code (exact equality, not approximate).
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(CwfaError::InvalidParameter("no components".into()));
        }
        if self.q < 1 || self.q > self.p {
            return Err(CwfaError::InvalidParameter(format!(
                "latent dimension q={} outside 1..=p={}",
                self.q, self.p
            )));
        }
        let weight_sum: f64 = self.components.iter().map(|c| c.weight).sum();
        if (weight_sum - 1.0).abs() > 1e-12 {
            return Err(CwfaError::InvalidParameter(format!(
                "weights sum to {weight_sum}, expected 1"
            )));
        }
        for (g, c) in self.components.iter().enumerate() {
            if !(c.weight > 0.0) {
                return Err(CwfaError::InvalidParameter(format!("weight of component {g} not positive")));
            }
            if !(c.noise_var > 0.0) {
                return Err(CwfaError::InvalidParameter(format!("noise variance of component {g} not positive")));
            }
            if c.uniquenesses.iter().any(|&v| !(v > 0.0)) {
                return Err(CwfaError::InvalidParameter(format!("uniquenesses of component {g} not positive")));
            }
            if c.mean.len() != self.p
                || c.slope.len() != self.p
                || c.loadings.nrows() != self.p
                || c.loadings.ncols() != self.q
                || c.uniquenesses.len() != self.p
            {
                return Err(CwfaError::InvalidParameter(format!("component {g} has mismatched dimensions")));
            }
            if self.code.psi_isotropic {
                let first = c.uniquenesses[0];
                if c.uniquenesses.iter().any(|&v| v != first) {
                    return Err(CwfaError::InvalidParameter(format!(
                        "component {g} violates the isotropic constraint"
                    )));
                }
            }
        }
        let first = &self.components[0];
        for (g, c) in self.components.iter().enumerate().skip(1) {
            if self.code.sigma_equal && c.noise_var != first.noise_var {
                return Err(CwfaError::InvalidParameter(format!("component {g} violates sigma equality")));
            }
            if self.code.lambda_equal && c.loadings != first.loadings {
                return Err(CwfaError::InvalidParameter(format!("component {g} violates loading equality")));
            }
            if self.code.psi_equal && c.uniquenesses != first.uniquenesses {
                return Err(CwfaError::InvalidParameter(format!("component {g} violates psi equality")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CwfaError::InvalidInput(format!("bad model JSON: {e}")))
    }
}

impl Serialize for CwfaParams {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        schema::ParamsJson::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CwfaParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = schema::ParamsJson::deserialize(deserializer)?;
        raw.try_into().map_err(serde::de::Error::custom)
    }
}

/// Observations: an n-by-p covariate matrix, an n response vector, and
/// optional per-row known component labels (0-based).
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    labels: Option<Vec<Option<usize>>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, labels: Option<Vec<Option<usize>>>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(CwfaError::InvalidInput("dataset is empty".into()));
        }
        if x.nrows() != y.len() {
            return Err(CwfaError::InvalidInput(format!(
                "x has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(CwfaError::InvalidInput("non-finite entry in dataset".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != x.nrows() {
                return Err(CwfaError::InvalidInput("label vector length mismatch".into()));
            }
        }
        Ok(Self { x, y, labels })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn label_of(&self, row: usize) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l[row])
    }

    pub fn has_labels(&self) -> bool {
        self.labels
            .as_ref()
            .is_some_and(|l| l.iter().any(|v| v.is_some()))
    }

    /// Replace the label vector (used by the classification front end).
    pub fn with_labels(mut self, labels: Option<Vec<Option<usize>>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.n() {
                return Err(CwfaError::InvalidInput("label vector length mismatch".into()));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Largest labeled component index, if any row is labeled.
    pub fn max_label(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().flatten().copied().max())
    }

    pub(crate) fn check_labels_within(&self, n_components: usize) -> Result<()> {
        if let Some(max) = self.max_label() {
            if max >= n_components {
                return Err(CwfaError::InvalidInput(format!(
                    "label {} outside 1..={}",
                    max + 1,
                    n_components
                )));
            }
        }
        Ok(())
    }
}

/// Posterior component-membership probabilities, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    z: DMatrix<f64>,
}

impl Responsibilities {
    pub fn from_matrix(z: DMatrix<f64>) -> Result<Self> {
        for i in 0..z.nrows() {
            let mut sum = 0.0;
            for g in 0..z.ncols() {
                let v = z[(i, g)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(CwfaError::InvalidParameter(format!(
                        "responsibility ({i},{g}) = {v} outside [0,1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-10 {
                return Err(CwfaError::InvalidParameter(format!(
                    "responsibility row {i} sums to {sum}"
                )));
            }
        }
        Ok(Self { z })
    }

    /// Indicator rows from a hard assignment.
    pub fn hard(assignment: &[usize], n_components: usize) -> Result<Self> {
        let mut z = DMatrix::zeros(assignment.len(), n_components);
        for (i, &g) in assignment.iter().enumerate() {
            if g >= n_components {
                return Err(CwfaError::InvalidInput(format!(
                    "assignment {g} outside 0..{n_components}"
                )));
            }
            z[(i, g)] = 1.0;
        }
        Ok(Self { z })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.z.ncols()
    }
}

/// Per-component quantities reused across rows when evaluating densities.
pub(crate) struct ComponentDensity {
    pub log_weight: f64,
    pub sigma_inv: DMatrix<f64>,
    pub log_det: f64,
}

impl ComponentDensity {
    pub fn build(comp: &ComponentParams) -> Result<Self> {
        let (sigma_inv, log_det) = woodbury_inverse_logdet(&comp.loadings, &comp.uniquenesses)?;
        Ok(Self {
            log_weight: comp.weight.ln(),
            sigma_inv,
            log_det,
        })
    }

    /// Joint log-density `ln phi(y|x) + ln phi(x)` (weight excluded).
    pub fn log_density(&self, comp: &ComponentParams, x: &DVector<f64>, y: f64) -> f64 {
        let p = comp.mean.len() as f64;
        let diff = x - &comp.mean;
        let quad = (&self.sigma_inv * &diff).dot(&diff);
        let log_x = -0.5 * (p * LN_2PI + self.log_det + quad);
        let resid = y - comp.intercept - comp.slope.dot(x);
        let log_y = -0.5 * ((2.0 * std::f64::consts::PI * comp.noise_var).ln()
            + resid * resid / comp.noise_var);
        log_x + log_y
    }
}

const LN_2PI: f64 = 1.8378770664093453;

/// Joint log-density of one observation under one component (weight excluded).
pub fn component_log_density(x: &DVector<f64>, y: f64, comp: &ComponentParams) -> Result<f64> {
    let cd = ComponentDensity::build(comp)?;
    Ok(cd.log_density(comp, x, y))
}

/// n-by-G matrix of `ln pi_g + ln f_g(x_i, y_i)`.
pub(crate) fn log_weighted_density_matrix(data: &Dataset, params: &CwfaParams) -> Result<DMatrix<f64>> {
    if data.p() != params.p {
        return Err(CwfaError::InvalidInput(format!(
            "data dimension {} does not match model dimension {}",
            data.p(),
            params.p
        )));
    }
    let n = data.n();
    let g_count = params.n_components();
    let densities: Vec<ComponentDensity> = params
        .components
        .iter()
        .map(ComponentDensity::build)
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(n, g_count);
    let mut x_row = DVector::zeros(data.p());
    for i in 0..n {
        for j in 0..data.p() {
            x_row[j] = data.x()[(i, j)];
        }
        let y = data.y()[i];
        for (g, (cd, comp)) in densities.iter().zip(&params.components).enumerate() {
            out[(i, g)] = cd.log_weight + cd.log_density(comp, &x_row, y);
        }
    }
    Ok(out)
}

fn row_log_sum_exp(log_row: &[f64]) -> f64 {
    let m = log_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + log_row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Observed-data log-likelihood. Rows carrying a known label contribute
/// `ln(pi_g f_g)` for their component; unlabeled rows contribute the
/// log-sum-exp over components.
pub fn log_likelihood(data: &Dataset, params: &CwfaParams) -> Result<f64> {
    data.check_labels_within(params.n_components())?;
    let log_dens = log_weighted_density_matrix(data, params)?;
    Ok(loglik_from_log_matrix(data, &log_dens))
}

pub(crate) fn loglik_from_log_matrix(data: &Dataset, log_dens: &DMatrix<f64>) -> f64 {
    let g_count = log_dens.ncols();
    let mut total = 0.0;
    let mut row = vec![0.0; g_count];
    for i in 0..data.n() {
        match data.label_of(i) {
            Some(g) => total += log_dens[(i, g)],
            None => {
                for g in 0..g_count {
                    row[g] = log_dens[(i, g)];
                }
                total += row_log_sum_exp(&row);
            }
        }
    }
    total
}

/// Normalize a matrix of log-weighted densities row-wise into probabilities.
/// Invariant under adding any constant to a whole row (log-offset invariance).
pub fn responsibilities_from_log(log_dens: &DMatrix<f64>) -> Responsibilities {
    let (n, g_count) = log_dens.shape();
    let mut z = DMatrix::zeros(n, g_count);
    for i in 0..n {
        let m = (0..g_count)
            .map(|g| log_dens[(i, g)])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for g in 0..g_count {
            let v = (log_dens[(i, g)] - m).exp();
            z[(i, g)] = v;
            sum += v;
        }
        for g in 0..g_count {
            z[(i, g)] /= sum;
        }
    }
    Responsibilities { z }
}

/// Posterior membership probabilities; rows with a known label are exact
/// indicators.
pub fn posterior_responsibilities(data: &Dataset, params: &CwfaParams) -> Result<Responsibilities> {
    data.check_labels_within(params.n_components())?;
    let log_dens = log_weighted_density_matrix(data, params)?;
    let mut resp = responsibilities_from_log(&log_dens);
    pin_labeled_rows(&mut resp, data);
    Ok(resp)
}

pub(crate) fn pin_labeled_rows(resp: &mut Responsibilities, data: &Dataset) {
    if let Some(labels) = data.labels() {
        for (i, lab) in labels.iter().enumerate() {
            if let Some(g) = lab {
                for j in 0..resp.z.ncols() {
                    resp.z[(i, j)] = 0.0;
                }
                resp.z[(i, *g)] = 1.0;
            }
        }
    }
}

/// Per-row index of the largest responsibility; ties break to the lowest
/// index so that repeated runs classify identically.
pub fn map_labels(resp: &Responsibilities) -> Vec<usize> {
    let z = resp.matrix();
    (0..z.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_val = z[(i, 0)];
            for g in 1..z.ncols() {
                if z[(i, g)] > best_val {
                    best_val = z[(i, g)];
                    best = g;
                }
            }
            best
        })
        .collect()
}

/// Total free-parameter count: (G-1) weights, Gp means, G(p+1) regression
/// coefficients, plus the covariance-structure count of the code.
pub fn count_free_parameters(code: ConstraintCode, g: usize, p: usize, q: usize) -> Result<usize> {
    if g < 1 {
        return Err(CwfaError::InvalidInput("need at least one component".into()));
    }
    if q < 1 || q > p {
        return Err(CwfaError::InvalidInput(format!("q={q} outside 1..=p={p}")));
    }
    let loading_free = p * q - q * (q - 1) / 2;
    let mut cov = if code.sigma_equal { 1 } else { g };
    cov += if code.lambda_equal { 1 } else { g } * loading_free;
    cov += if code.psi_equal { 1 } else { g } * if code.psi_isotropic { 1 } else { p };
    Ok((g - 1) + g * p + g * (p + 1) + cov)
}

mod schema {
    use super::*;

    #[derive(Serialize, Deserialize)]
    pub(super) struct ParamsJson {
        pub format_version: u32,
        pub code: ConstraintCode,
        pub p: usize,
        pub q: usize,
        pub components: Vec<ComponentJson>,
    }

    #[derive(Serialize, Deserialize)]
    pub(super) struct ComponentJson {
        pub weight: f64,
        pub intercept: f64,
        pub slope: Vec<f64>,
        pub noise_var: f64,
        pub mean: Vec<f64>,
        /// Row-major p x q loading matrix.
        pub loadings: Vec<Vec<f64>>,
        pub uniquenesses: Vec<f64>,
    }

    impl From<&CwfaParams> for ParamsJson {
        fn from(params: &CwfaParams) -> Self {
            ParamsJson {
                format_version: PARAMS_FORMAT_VERSION,
                code: params.code,
                p: params.p,
                q: params.q,
                components: params
                    .components
                    .iter()
                    .map(|c| ComponentJson {
                        weight: c.weight,
                        intercept: c.intercept,
                        slope: c.slope.iter().copied().collect(),
                        noise_var: c.noise_var,
                        mean: c.mean.iter().copied().collect(),
                        loadings: (0..c.loadings.nrows())
                            .map(|i| (0..c.loadings.ncols()).map(|j| c.loadings[(i, j)]).collect())
                            .collect(),
                        uniquenesses: c.uniquenesses.iter().copied().collect(),
                    })
                    .collect(),
            }
        }
    }

    impl TryFrom<ParamsJson> for CwfaParams {
        type Error = CwfaError;

        fn try_from(raw: ParamsJson) -> Result<Self> {
            if raw.format_version != PARAMS_FORMAT_VERSION {
                return Err(CwfaError::InvalidInput(format!(
                    "unsupported format version {}",
                    raw.format_version
                )));
            }
            let components = raw
                .components
                .into_iter()
                .map(|c| {
                    let rows = c.loadings.len();
                    let cols = c.loadings.first().map_or(0, Vec::len);
                    if rows != raw.p || cols != raw.q || c.loadings.iter().any(|r| r.len() != cols) {
                        return Err(CwfaError::InvalidInput("ragged or mis-sized loading matrix".into()));
                    }
                    let flat: Vec<f64> = c.loadings.into_iter().flatten().collect();
                    Ok(ComponentParams {
                        weight: c.weight,
                        intercept: c.intercept,
                        slope: DVector::from_vec(c.slope),
                        noise_var: c.noise_var,
                        mean: DVector::from_vec(c.mean),
                        loadings: DMatrix::from_row_slice(rows, cols, &flat),
                        uniquenesses: DVector::from_vec(c.uniquenesses),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let params = CwfaParams {
                code: raw.code,
                p: raw.p,
                q: raw.q,
                components,
            };
            params.validate()?;
            Ok(params)
        }
    }
}
