//! Gaussian mixture models: density evaluation, regularized EM fitting and
//! generative (class-conditional) classification.
//!
//! Densities are evaluated in log space through a cached Cholesky factor of
//! each covariance; [`MixtureModel::density`] exponentiates at the end and may
//! underflow to zero far from the data, while [`MixtureModel::log_density`]
//! stays finite.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::ActionId;
use crate::error::{Error, Result};

/// Added to every covariance diagonal after each M-step.
pub const REG_FLOOR: f64 = 1e-6;
pub const DEFAULT_COMPONENTS: usize = 3;
const FORMAT_VERSION: u32 = 1;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent {
    weight: f64,
    mean: Vec<f64>,
    /// Row-major `dim × dim`.
    cov: Vec<f64>,
    /// Lower Cholesky factor of `cov`, row-major.
    chol: Vec<f64>,
    log_norm: f64,
}

impl GaussianComponent {
    /// `cov` is row-major and must be symmetric positive definite.
    pub fn new(weight: f64, mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let dim = mean.len();
        if cov.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: cov.len(),
            });
        }
        if !(weight > 0.0 && weight <= 1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!("component weight {weight} outside (0, 1]")));
        }
        if mean.iter().chain(&cov).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite mean or covariance".into()));
        }
        let m = DMatrix::from_row_slice(dim, dim, &cov);
        let chol = m.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let mut flat = vec![0.0; dim * dim];
        let mut log_det = 0.0;
        for i in 0..dim {
            for j in 0..=i {
                flat[i * dim + j] = l[(i, j)];
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        Ok(GaussianComponent {
            weight,
            mean,
            cov,
            chol: flat,
            log_norm: -0.5 * (dim as f64 * LN_2PI + log_det),
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log of the normal density `N(x; mean, cov)` (without the weight).
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        // Forward substitution L y = x - mean, accumulating |y|^2.
        let mut y = [0.0f64; 32];
        let mut heap;
        let y: &mut [f64] = if d <= y.len() {
            &mut y[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut maha = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i + 1];
            let mut acc = x[i] - self.mean[i];
            for j in 0..i {
                acc -= row[j] * y[j];
            }
            let yi = acc / row[i];
            y[i] = yi;
            maha += yi * yi;
        }
        self.log_norm - 0.5 * maha
    }

    /// Peak value of the (unweighted) normal density, attained at the mean.
    pub fn peak_density(&self) -> f64 {
        self.log_norm.exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureDoc", into = "MixtureDoc")]
pub struct MixtureModel {
    dim: usize,
    components: Vec<GaussianComponent>,
}

impl MixtureModel {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("mixture needs at least one component".into()))?;
        let dim = first.dim();
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.dim(),
            });
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("component weights sum to {total}, not 1")));
        }
        Ok(MixtureModel { dim, components })
    }

    /// Single Gaussian with weight 1.
    pub fn single(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        Self::new(vec![GaussianComponent::new(1.0, mean, cov)?])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.log_density_unchecked(x))
    }

    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let mut terms = [0.0f64; 16];
        if self.components.len() <= terms.len() {
            for (t, c) in terms.iter_mut().zip(&self.components) {
                *t = c.weight.ln() + c.log_pdf(x);
            }
            log_sum_exp(&terms[..self.components.len()])
        } else {
            let v: Vec<f64> = self.components.iter().map(|c| c.weight.ln() + c.log_pdf(x)).collect();
            log_sum_exp(&v)
        }
    }

    /// `Σ_i weight_i · N(x; mean_i, cov_i)`. Not capped at 1.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mixture serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDoc {
    weight: f64,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureDoc {
    version: u32,
    dim: usize,
    components: Vec<ComponentDoc>,
}

impl From<MixtureModel> for MixtureDoc {
    fn from(m: MixtureModel) -> Self {
        let d = m.dim;
        MixtureDoc {
            version: FORMAT_VERSION,
            dim: d,
            components: m
                .components
                .into_iter()
                .map(|c| ComponentDoc {
                    weight: c.weight,
                    cov: c.cov.chunks(d).map(<[f64]>::to_vec).collect(),
                    mean: c.mean,
                })
                .collect(),
        }
    }
}

impl TryFrom<MixtureDoc> for MixtureModel {
    type Error = Error;

    fn try_from(doc: MixtureDoc) -> Result<Self> {
        if doc.version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(doc.version));
        }
        let comps = doc
            .components
            .into_iter()
            .map(|c| {
                if c.mean.len() != doc.dim || c.cov.iter().any(|r| r.len() != doc.dim) {
                    return Err(Error::DimensionMismatch {
                        expected: doc.dim,
                        got: c.mean.len(),
                    });
                }
                GaussianComponent::new(c.weight, c.mean, c.cov.concat())
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureModel::new(comps)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmOptions {
    pub n_components: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the log-likelihood gain drops below `tol · max(1, |ll|)`.
    pub tol: f64,
    pub reg: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            n_components: DEFAULT_COMPONENTS,
            seed: 0,
            max_iters: 200,
            tol: 1e-6,
            reg: REG_FLOOR,
        }
    }
}

impl EmOptions {
    pub fn new(n_components: usize, seed: u64) -> Self {
        EmOptions {
            n_components,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmFit {
    pub model: MixtureModel,
    /// Total log-likelihood after initialization and after every EM step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

/// Fits a full-covariance mixture by EM from k-means++ seeds.
///
/// Uses `min(n_components, samples.len())` components. Components whose
/// responsibility mass vanishes are dropped.
pub fn fit_em<S: AsRef<[f64]>>(samples: &[S], opts: &EmOptions) -> Result<EmFit> {
    let first = samples.first().ok_or(Error::EmptyClass)?.as_ref();
    let dim = first.len();
    if dim == 0 {
        return Err(Error::InvalidArgument("zero-dimensional samples".into()));
    }
    for s in samples {
        let s = s.as_ref();
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.len(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
    }
    if opts.n_components == 0 {
        return Err(Error::InvalidArgument("n_components must be at least 1".into()));
    }
    let xs: Vec<&[f64]> = samples.iter().map(AsRef::as_ref).collect();
    let n = xs.len();
    let k = opts.n_components.min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let centers = kmeans_pp(&xs, k, &mut rng);
    let mut resp = vec![0.0; n * k];
    for (i, x) in xs.iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, &ci) in centers.iter().enumerate() {
            let d = sq_dist(x, xs[ci]);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        resp[i * k + best] = 1.0;
    }

    let mut model = m_step(&xs, &resp, k, opts.reg)?;
    let mut trace = Vec::new();
    let mut ll = e_step(&xs, &model, &mut resp);
    trace.push(ll);
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let kk = model.components.len();
        model = m_step(&xs, &resp[..n * kk], kk, opts.reg)?;
        let next = e_step(&xs, &model, &mut resp);
        trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain < opts.tol * ll.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    Ok(EmFit {
        model,
        log_likelihood: trace,
        converged,
    })
}

/// Total log-likelihood of `samples` under `model`.
pub fn log_likelihood<S: AsRef<[f64]>>(samples: &[S], model: &MixtureModel) -> Result<f64> {
    samples.iter().map(|s| model.log_density(s.as_ref())).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding; returns sample indices. Falls back to a uniform draw
/// when every remaining sample coincides with a chosen center.
fn kmeans_pp(xs: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = xs.len();
    let mut centers = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = xs.iter().map(|x| sq_dist(x, xs[centers[0]])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centers.push(next);
        for (i, x) in xs.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, xs[next]));
        }
    }
    centers
}

/// Weighted ML update. Means and scatter are accumulated relative to the
/// first sample so identical samples reproduce it exactly.
fn m_step(xs: &[&[f64]], resp: &[f64], k: usize, reg: f64) -> Result<MixtureModel> {
    let n = xs.len();
    let d = xs[0].len();
    let origin = xs[0];
    let mut comps = Vec::with_capacity(k);
    let mut masses = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
        if nk <= n as f64 * 1e-12 {
            continue;
        }
        let mut shift = vec![0.0; d];
        for (i, x) in xs.iter().enumerate() {
            let r = resp[i * k + c];
            if r == 0.0 {
                continue;
            }
            for j in 0..d {
                shift[j] += r * (x[j] - origin[j]);
            }
        }
        let mean: Vec<f64> = (0..d).map(|j| origin[j] + shift[j] / nk).collect();
        let mut cov = vec![0.0; d * d];
        let mut diff = vec![0.0; d];
        for (i, x) in xs.iter().enumerate() {
            let r = resp[i * k + c];
            if r == 0.0 {
                continue;
            }
            for j in 0..d {
                diff[j] = x[j] - mean[j];
            }
            for a in 0..d {
                let ra = r * diff[a];
                for b in a..d {
                    cov[a * d + b] += ra * diff[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[a * d + b] / nk;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
            cov[a * d + a] += reg;
        }
        masses.push(nk);
        comps.push((mean, cov));
    }
    let total: f64 = masses.iter().sum();
    let comps = comps
        .into_iter()
        .zip(masses)
        .map(|((mean, cov), nk)| GaussianComponent::new(nk / total, mean, cov))
        .collect::<Result<Vec<_>>>()?;
    MixtureModel::new(comps)
}

/// Fills responsibilities for the model's components and returns the total
/// log-likelihood.
fn e_step(xs: &[&[f64]], model: &MixtureModel, resp: &mut [f64]) -> f64 {
    let k = model.components.len();
    let mut total = 0.0;
    let mut lp = vec![0.0; k];
    for (i, x) in xs.iter().enumerate() {
        for (c, comp) in model.components.iter().enumerate() {
            lp[c] = comp.weight.ln() + comp.log_pdf(x);
        }
        let lse = log_sum_exp(&lp);
        total += lse;
        for c in 0..k {
            resp[i * k + c] = (lp[c] - lse).exp();
        }
    }
    total
}

/// Generative classification: `argmax_c prior_c · p(x | c)`, computed in log
/// space. Classes with zero prior never win; ties go to the lowest action.
pub fn classify(x: &[f64], classes: &[(ActionId, &MixtureModel)], priors: &[f64]) -> Result<ActionId> {
    if classes.is_empty() {
        return Err(Error::InvalidArgument("no classes to choose from".into()));
    }
    if classes.len() != priors.len() {
        return Err(Error::DimensionMismatch {
            expected: classes.len(),
            got: priors.len(),
        });
    }
    let mut best: Option<(f64, ActionId)> = None;
    for (&(id, model), &prior) in classes.iter().zip(priors) {
        let score = prior.ln() + model.log_density(x)?;
        best = match best {
            None => Some((score, id)),
            Some((s, b)) if score > s || (score == s && id < b) => Some((score, id)),
            keep => keep,
        };
    }
    Ok(best.expect("classes is non-empty").1)
}
