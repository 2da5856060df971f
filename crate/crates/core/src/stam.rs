//! Spatio-temporal affordance maps.
//!
//! Each action owns a Gaussian mixture over a projection of the state; its
//! density is the action's affordance. An action is legal at a state when its
//! affordance exceeds half of the best action's affordance, or when it wins
//! an ε-draw. Per-action densities can be rasterized over the floor plane and
//! composed into a single map.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionId, ActionSet, NUM_ACTIONS};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::gmm::{fit_em, EmOptions, GaussianComponent, MixtureModel, REG_FLOOR};
use crate::seed::{self, Purpose};
use crate::state::*;

const FORMAT_VERSION: u32 = 1;

pub const DEFAULT_CELL_SIZE: f64 = 0.05;
pub const DEFAULT_GRID_CELLS: usize = 24;

/// State dimensions fed to a mixture, in order. Features are raw state
/// values (meters, radians, bits).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct FeatureProjection(Vec<usize>);

impl FeatureProjection {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("empty feature projection".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d >= STATE_DIM) {
            return Err(Error::InvalidArgument(format!("projection index {d} out of range")));
        }
        let mut seen = [false; STATE_DIM];
        for &d in &dims {
            if std::mem::replace(&mut seen[d], true) {
                return Err(Error::InvalidArgument(format!("duplicate projection index {d}")));
            }
        }
        Ok(FeatureProjection(dims))
    }

    /// Planar pose, target distance, image position and attention.
    pub fn affordance_default() -> Self {
        FeatureProjection(vec![BODY_X, BODY_Y, BODY_HEADING, TARGET_DISTANCE, IMAGE_U, IMAGE_V, ATTENTION])
    }

    pub fn full() -> Self {
        FeatureProjection((0..STATE_DIM).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, dim: usize) -> bool {
        self.0.contains(&dim)
    }

    pub fn project(&self, s: &StateVector) -> Vec<f64> {
        self.0.iter().map(|&d| s[d]).collect()
    }

    fn project_into(&self, s: &StateVector, out: &mut [f64]) {
        for (o, &d) in out.iter_mut().zip(&self.0) {
            *o = s[d];
        }
    }
}

impl Default for FeatureProjection {
    fn default() -> Self {
        Self::affordance_default()
    }
}

impl TryFrom<Vec<usize>> for FeatureProjection {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        FeatureProjection::new(dims)
    }
}

impl From<FeatureProjection> for Vec<usize> {
    fn from(p: FeatureProjection) -> Vec<usize> {
        p.0
    }
}

/// One mixture per action over a shared feature projection.
#[derive(Clone, Debug, PartialEq)]
pub struct AffordanceSignature {
    projection: FeatureProjection,
    models: Vec<MixtureModel>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignatureDoc {
    version: u32,
    projection: FeatureProjection,
    actions: BTreeMap<String, MixtureModel>,
}

impl AffordanceSignature {
    /// `models[i]` is the mixture of action `i`; all 27 are required.
    pub fn new(projection: FeatureProjection, models: Vec<MixtureModel>) -> Result<Self> {
        if models.len() != NUM_ACTIONS {
            return Err(Error::MissingModel(models.len().min(NUM_ACTIONS)));
        }
        for m in &models {
            if m.dim() != projection.len() {
                return Err(Error::DimensionMismatch {
                    expected: projection.len(),
                    got: m.dim(),
                });
            }
        }
        Ok(AffordanceSignature { projection, models })
    }

    pub fn projection(&self) -> &FeatureProjection {
        &self.projection
    }

    pub fn model(&self, a: ActionId) -> &MixtureModel {
        &self.models[a.index()]
    }

    pub fn models(&self) -> &[MixtureModel] {
        &self.models
    }

    pub fn affordance_value(&self, s: &StateVector, a: ActionId) -> f64 {
        self.affordance_log_value(s, a).exp()
    }

    pub fn affordance_log_value(&self, s: &StateVector, a: ActionId) -> f64 {
        let x = self.projection.project(s);
        self.models[a.index()].log_density_unchecked(&x)
    }

    /// Log affordance of every action at `s`, in action order.
    pub fn log_values(&self, s: &StateVector) -> [f64; NUM_ACTIONS] {
        let mut buf = [0.0; STATE_DIM];
        let x = &mut buf[..self.projection.len()];
        self.projection.project_into(s, x);
        let mut out = [0.0; NUM_ACTIONS];
        for (o, m) in out.iter_mut().zip(&self.models) {
            *o = m.log_density_unchecked(x);
        }
        out
    }

    pub fn values(&self, s: &StateVector) -> [f64; NUM_ACTIONS] {
        self.log_values(s).map(f64::exp)
    }

    pub fn to_json(&self) -> String {
        let doc = SignatureDoc {
            version: FORMAT_VERSION,
            projection: self.projection.clone(),
            actions: self
                .models
                .iter()
                .enumerate()
                .map(|(i, m)| (i.to_string(), m.clone()))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("signature serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SignatureDoc = serde_json::from_str(text)?;
        if doc.version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(doc.version));
        }
        let mut slots: Vec<Option<MixtureModel>> = vec![None; NUM_ACTIONS];
        for (key, model) in doc.actions {
            let a: ActionId = key.parse()?;
            slots[a.index()] = Some(model);
        }
        let models = slots
            .into_iter()
            .enumerate()
            .map(|(i, m)| m.ok_or(Error::MissingModel(i)))
            .collect::<Result<Vec<_>>>()?;
        AffordanceSignature::new(doc.projection, models)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::parse(path, j.to_string()),
            other => other,
        })
    }
}

/// Outcome of one legality query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegalitySample {
    pub legal: ActionSet,
    pub via_affordance: ActionSet,
    pub via_random: ActionSet,
    /// Half of the largest affordance value.
    pub lambda: f64,
    /// Number of below-threshold actions that received an ε-draw.
    pub draws: usize,
}

impl LegalitySample {
    pub fn all() -> Self {
        LegalitySample {
            legal: ActionSet::ALL,
            via_affordance: ActionSet::ALL,
            via_random: ActionSet::EMPTY,
            lambda: 0.0,
            draws: 0,
        }
    }

    pub fn fixed(set: ActionSet) -> Self {
        LegalitySample {
            legal: set,
            via_affordance: set,
            via_random: ActionSet::EMPTY,
            lambda: 0.0,
            draws: 0,
        }
    }
}

/// The adaptive threshold: returns `{a : v_a > λ}` and `λ = ½·max_a v_a`.
pub fn threshold_values(values: &[f64; NUM_ACTIONS]) -> (ActionSet, f64) {
    let max = values.iter().copied().fold(0.0, f64::max);
    let lambda = 0.5 * max;
    let above = ActionId::all().filter(|a| values[a.index()] > lambda).collect();
    (above, lambda)
}

/// Thresholds `values`, then admits each remaining action with probability
/// `epsilon`, drawing once per below-threshold action in index order. If
/// nothing ends up legal, every action is legal.
pub fn legality_from_values<R: Rng + ?Sized>(values: &[f64; NUM_ACTIONS], epsilon: f64, rng: &mut R) -> LegalitySample {
    let (above, lambda) = threshold_values(values);
    let mut via_random = ActionSet::EMPTY;
    let mut draws = 0;
    for a in ActionId::all().filter(|a| !above.contains(*a)) {
        draws += 1;
        if rng.gen::<f64>() < epsilon {
            via_random.insert(a);
        }
    }
    let legal = above.union(via_random);
    if legal.is_empty() {
        return LegalitySample {
            lambda,
            draws,
            ..LegalitySample::all()
        };
    }
    LegalitySample {
        legal,
        via_affordance: above,
        via_random,
        lambda,
        draws,
    }
}

/// Legal actions at `s` under `sig`.
///
/// The comparison runs on values rescaled by the largest one, computed from
/// log densities, so states far from all data (where every density
/// underflows) still get a meaningful ranking.
pub fn legal_actions<R: Rng + ?Sized>(s: &StateVector, sig: &AffordanceSignature, epsilon: f64, rng: &mut R) -> LegalitySample {
    let logs = sig.log_values(s);
    let max_log = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled = if max_log.is_finite() {
        logs.map(|l| (l - max_log).exp())
    } else {
        [0.0; NUM_ACTIONS]
    };
    let mut sample = legality_from_values(&scaled, epsilon, rng);
    sample.lambda = if max_log.is_finite() { 0.5 * max_log.exp() } else { 0.0 };
    sample
}

/// Fits one mixture per action on the projected states carrying that label.
///
/// Each action's EM seed depends only on `seed` and the action, so an
/// action's model depends only on its own samples. Actions without samples
/// get a single Gaussian with the mean and (regularized) covariance of the
/// whole dataset.
pub fn fit_signatures(d: &LabeledDataset, n_components: usize, seed: u64, projection: &FeatureProjection) -> Result<AffordanceSignature> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let all: Vec<Vec<f64>> = d.iter().map(|(s, _)| projection.project(s)).collect();
    let mut fallback = None;
    let mut models = Vec::with_capacity(NUM_ACTIONS);
    for a in ActionId::all() {
        let samples: Vec<Vec<f64>> = d.states_for(a).map(|s| projection.project(s)).collect();
        if samples.is_empty() {
            if fallback.is_none() {
                fallback = Some(broad_model(&all)?);
            }
            models.push(fallback.clone().expect("set above"));
            continue;
        }
        let opts = EmOptions::new(n_components, seed::derive(seed, Purpose::SignatureFit, 0, a.index() as u64));
        models.push(fit_em(&samples, &opts)?.model);
    }
    AffordanceSignature::new(projection.clone(), models)
}

fn broad_model(samples: &[Vec<f64>]) -> Result<MixtureModel> {
    let n = samples.len() as f64;
    let dim = samples[0].len();
    let mut mean = vec![0.0; dim];
    for x in samples {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; dim * dim];
    for x in samples {
        for i in 0..dim {
            for j in 0..dim {
                cov[i * dim + j] += (x[i] - mean[i]) * (x[j] - mean[j]) / n;
            }
        }
    }
    for i in 0..dim {
        cov[i * dim + i] += REG_FLOOR;
    }
    MixtureModel::new(vec![GaussianComponent::new(1.0, mean, cov)?])
}

/// A row-major grid of non-negative values over the floor plane. Row `j`
/// covers `y ∈ [origin_y + j·cell, origin_y + (j+1)·cell)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffordanceGrid {
    /// `None` for composed maps.
    pub action: Option<ActionId>,
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// How [`compose_map`] combines grids.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Composition {
    #[default]
    Max,
    /// Each grid scaled to a peak of 1, then averaged.
    NormalizedSum,
}

impl AffordanceGrid {
    pub fn new(action: Option<ActionId>, origin: [f64; 2], cell_size: f64, width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidArgument("cell size must be positive".into()));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: values.len(),
            });
        }
        if values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::InvalidArgument("grid values must be non-negative".into()));
        }
        Ok(AffordanceGrid {
            action,
            origin,
            cell_size,
            width,
            height,
            values,
        })
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.origin[0] + (col as f64 + 0.5) * self.cell_size,
            self.origin[1] + (row as f64 + 0.5) * self.cell_size,
        ]
    }

    fn same_geometry(&self, other: &AffordanceGrid) -> bool {
        self.origin == other.origin && self.cell_size == other.cell_size && self.width == other.width && self.height == other.height
    }

    /// A metadata comment line followed by one CSV row per y cell.
    pub fn to_csv(&self) -> String {
        let action = self.action.map_or("composed", |a| a.name());
        let spec = GridSpec {
            origin: self.origin,
            cell_size: self.cell_size,
            width: self.width,
            height: self.height,
        };
        grid_csv(&format!("action={action}"), &spec, &self.values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub fn compose_map(grids: &[AffordanceGrid], how: Composition) -> Result<AffordanceGrid> {
    let first = grids
        .first()
        .ok_or_else(|| Error::InvalidArgument("no grids to compose".into()))?;
    if grids.iter().any(|g| !first.same_geometry(g)) {
        return Err(Error::GeometryMismatch);
    }
    if grids.len() == 1 {
        return Ok(first.clone());
    }
    let n = first.values.len();
    let values = match how {
        Composition::Max => (0..n)
            .map(|i| grids.iter().map(|g| g.values[i]).fold(0.0, f64::max))
            .collect(),
        Composition::NormalizedSum => {
            let mut acc = vec![0.0; n];
            for g in grids {
                let peak = g.values.iter().copied().fold(0.0, f64::max);
                if peak > 0.0 {
                    for (a, v) in acc.iter_mut().zip(&g.values) {
                        *a += v / peak;
                    }
                }
            }
            acc.iter().map(|v| v / grids.len() as f64).collect()
        }
    };
    let action = grids.iter().all(|g| g.action == first.action).then_some(first.action).flatten();
    AffordanceGrid::new(action, first.origin, first.cell_size, first.width, first.height, values)
}

/// Geometry of a heat-map raster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    /// 24 × 24 cells of 5 cm centered on `target`.
    pub fn around(target: [f64; 2]) -> Self {
        let half = 0.5 * DEFAULT_CELL_SIZE * DEFAULT_GRID_CELLS as f64;
        GridSpec {
            origin: [target[0] - half, target[1] - half],
            cell_size: DEFAULT_CELL_SIZE,
            width: DEFAULT_GRID_CELLS,
            height: DEFAULT_GRID_CELLS,
        }
    }
}

/// The [`AffordanceGrid::to_csv`] layout for the output of [`rasterize_log`],
/// marked `scale=log` in the metadata line.
pub fn log_grid_csv(a: ActionId, grid: &GridSpec, values: &[f64]) -> String {
    grid_csv(&format!("action={} scale=log", a.name()), grid, values)
}

fn grid_csv(label: &str, grid: &GridSpec, values: &[f64]) -> String {
    let mut out = format!(
        "# {label} origin_x={} origin_y={} cell_size={} width={} height={}\n",
        grid.origin[0], grid.origin[1], grid.cell_size, grid.width, grid.height
    );
    for row in values.chunks(grid.width.max(1)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

/// Evaluates action `a`'s affordance at every cell center, placing the body
/// of `template` there and recomputing its distance to `target`.
pub fn rasterize(sig: &AffordanceSignature, a: ActionId, template: &StateVector, grid: &GridSpec, target: [f64; 2]) -> Result<AffordanceGrid> {
    let values = raster_cells(sig, template, grid, target, |s| sig.affordance_value(s, a))?;
    AffordanceGrid::new(Some(a), grid.origin, grid.cell_size, grid.width, grid.height, values)
}

/// [`rasterize`] in the log domain, row-major. Densities of sharply fitted
/// models underflow far from their support; their logarithms stay finite.
pub fn rasterize_log(sig: &AffordanceSignature, a: ActionId, template: &StateVector, grid: &GridSpec, target: [f64; 2]) -> Result<Vec<f64>> {
    raster_cells(sig, template, grid, target, |s| sig.affordance_log_value(s, a))
}

fn raster_cells(sig: &AffordanceSignature, template: &StateVector, grid: &GridSpec, target: [f64; 2], eval: impl Fn(&StateVector) -> f64) -> Result<Vec<f64>> {
    if !sig.projection().contains(BODY_X) || !sig.projection().contains(BODY_Y) {
        return Err(Error::InvalidArgument("projection must include body_x and body_y".into()));
    }
    let shape = AffordanceGrid::new(None, grid.origin, grid.cell_size, grid.width, grid.height, vec![0.0; grid.width * grid.height])?;
    let mut values = Vec::with_capacity(grid.width * grid.height);
    let mut s = *template;
    for row in 0..grid.height {
        for col in 0..grid.width {
            let [x, y] = shape.cell_center(col, row);
            s.set(BODY_X, x);
            s.set(BODY_Y, y);
            s.set(TARGET_DISTANCE, (target[0] - x).hypot(target[1] - y));
            values.push(eval(&s));
        }
    }
    Ok(values)
}
