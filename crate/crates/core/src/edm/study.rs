//! Perception-study data: per-pair aggregation, regression of the mapping
//! matrix, and response statistics (correlations, Cronbach's alpha, PCA).

use std::fmt;

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{EntitativityMapping, EntitativityVector, ParamBounds};
use crate::agent::GpField;
use crate::error::{Error, Result};

/// Four parameters at two levels each.
pub const PAIR_COUNT: u8 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Min,
    Max,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Min => "min",
            Level::Max => "max",
        }
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Level::Min),
            "max" => Ok(Level::Max),
            other => Err(Error::input(format!("unknown level `{other}`"))),
        }
    }
}

/// Pairs are numbered field-major: 1 = neighbor_dist/min, 2 = neighbor_dist/max,
/// 3 = radius/min, ..., 8 = group_cohesion/max.
pub fn pair_label(pair_id: u8) -> Option<(GpField, Level)> {
    if !(1..=PAIR_COUNT).contains(&pair_id) {
        return None;
    }
    let idx = (pair_id - 1) as usize;
    let level = if idx.is_multiple_of(2) { Level::Min } else { Level::Max };
    Some((GpField::ALL[idx / 2], level))
}

pub fn pair_id_of(field: GpField, level: Level) -> u8 {
    (field.index() * 2 + usize::from(level == Level::Max) + 1) as u8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Item {
    Friendliness,
    Creepiness,
    Comfort,
    Unnerving,
}

pub const ITEMS: [Item; 4] = [Item::Friendliness, Item::Creepiness, Item::Comfort, Item::Unnerving];

impl Item {
    pub fn name(self) -> &'static str {
        match self {
            Item::Friendliness => "friendliness",
            Item::Creepiness => "creepiness",
            Item::Comfort => "comfort",
            Item::Unnerving => "unnerving",
        }
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One participant's comparison of one video pair, each rating on the
/// five-point scale −2..=2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StudyResponse {
    pub participant_id: u32,
    pub pair_id: u8,
    pub varied_param: GpField,
    pub level: Level,
    pub ratings: [i32; 4],
}

impl StudyResponse {
    pub fn new(participant_id: u32, pair_id: u8, ratings: [i32; 4]) -> Result<Self> {
        let (varied_param, level) = pair_label(pair_id)
            .ok_or_else(|| Error::input(format!("pair_id {pair_id} outside 1..={PAIR_COUNT}")))?;
        let r = Self {
            participant_id,
            pair_id,
            varied_param,
            level,
            ratings,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if pair_label(self.pair_id) != Some((self.varied_param, self.level)) {
            return Err(Error::input(format!(
                "pair_id {} is inconsistent with ({}, {})",
                self.pair_id,
                self.varied_param,
                self.level.as_str()
            )));
        }
        if let Some(bad) = self.ratings.iter().find(|r| !(-2..=2).contains(*r)) {
            return Err(Error::input(format!("rating {bad} outside [-2, 2]")));
        }
        Ok(())
    }
}

/// Mean entitativity for one video pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledPoint {
    pub pair_id: u8,
    pub varied_param: GpField,
    pub level: Level,
    pub e: EntitativityVector,
}

impl LabeledPoint {
    pub fn new(varied_param: GpField, level: Level, e: EntitativityVector) -> Self {
        Self {
            pair_id: pair_id_of(varied_param, level),
            varied_param,
            level,
            e,
        }
    }
}

/// Per-pair component-wise means, ordered by pair id.
pub fn aggregate_responses(responses: &[StudyResponse]) -> Result<Vec<LabeledPoint>> {
    let mut sums = [[0.0f64; 4]; PAIR_COUNT as usize];
    let mut counts = [0usize; PAIR_COUNT as usize];
    for r in responses {
        r.validate()?;
        let i = (r.pair_id - 1) as usize;
        for k in 0..4 {
            sums[i][k] += f64::from(r.ratings[k]);
        }
        counts[i] += 1;
    }
    let missing: Vec<u8> = (1..=PAIR_COUNT).filter(|p| counts[(*p - 1) as usize] == 0).collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteData { missing });
    }
    Ok((1..=PAIR_COUNT)
        .map(|p| {
            let i = (p - 1) as usize;
            let (field, level) = pair_label(p).expect("valid pair");
            let n = counts[i] as f64;
            LabeledPoint::new(field, level, EntitativityVector::from_array(sums[i].map(|s| s / n)))
        })
        .collect())
}

/// Normalized parameter vector for a one-at-a-time setting.
fn design_row(bounds: &ParamBounds, field: GpField, level: Level) -> [f64; 4] {
    let mut gp = bounds.default;
    let value = match level {
        Level::Min => bounds.min.get(field),
        Level::Max => bounds.max.get(field),
    };
    gp.set(field, value);
    bounds.normalize(&gp).expect("corner lies within bounds")
}

/// Least-squares matrix minimizing Σ‖E_i − M·n_i‖² (no intercept).
pub fn fit_matrix(points: &[LabeledPoint], bounds: &ParamBounds) -> Result<[[f64; 4]; 4]> {
    if points.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {}", points.len())));
    }
    let n = points.len();
    let x = DMatrix::from_fn(n, 4, |i, j| design_row(bounds, points[i].varied_param, points[i].level)[j]);
    let y = DMatrix::from_fn(n, 4, |i, k| points[i].e.to_array()[k]);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("entitativity points must be finite".into()));
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.rank(smax * 1e-10) < 4 {
        return Err(Error::Fit("design matrix is rank deficient".into()));
    }
    // X · Mᵀ ≈ Y
    let mt = svd
        .solve(&y, smax * 1e-12)
        .map_err(|e| Error::Fit(e.to_string()))?;
    Ok(std::array::from_fn(|r| std::array::from_fn(|c| mt[(c, r)])))
}

/// Fits the matrix and builds a mapping. A singular fit is reported as
/// [`Error::SingularMapping`] carrying the fitted matrix.
pub fn fit_mapping(points: &[LabeledPoint], bounds: &ParamBounds) -> Result<EntitativityMapping> {
    let rows = fit_matrix(points, bounds)?;
    EntitativityMapping::new(rows, *bounds)
}

/// Summary statistics over individual responses.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyReport {
    pub correlation: [[f64; 4]; 4],
    pub cronbach_alpha: f64,
    /// Principal-component variance fractions of the correlation matrix,
    /// descending.
    pub explained_variance: [f64; 4],
    /// Items reverse-scored before computing alpha.
    pub reversed: Vec<Item>,
}

pub fn study_statistics(responses: &[StudyResponse]) -> Result<StudyReport> {
    if responses.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: responses.len(),
        });
    }
    let n = responses.len() as f64;
    let cols: Vec<Vec<f64>> = (0..4)
        .map(|k| responses.iter().map(|r| f64::from(r.ratings[k])).collect())
        .collect();
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|x| x - m).collect())
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let var: Vec<f64> = centered.iter().map(|c| dot(c, c) / n).collect();
    for (k, v) in var.iter().enumerate() {
        if *v <= 0.0 {
            return Err(Error::Statistics { item: ITEMS[k].name() });
        }
    }

    let mut correlation = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            correlation[i][j] = if i == j {
                1.0
            } else {
                (dot(&centered[i], &centered[j]) / n / (var[i] * var[j]).sqrt()).clamp(-1.0, 1.0)
            };
        }
    }

    // Item polarity follows the sign of each item's correlation with
    // friendliness; for typical data this reverses creepiness and unnerving.
    let signs: Vec<f64> = (0..4)
        .map(|k| if correlation[0][k] < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let reversed = (0..4).filter(|k| signs[*k] < 0.0).map(|k| ITEMS[k]).collect();
    let total: Vec<f64> = (0..responses.len())
        .map(|i| (0..4).map(|k| signs[k] * centered[k][i]).sum())
        .collect();
    let total_var = dot(&total, &total) / n;
    let k = 4.0;
    let cronbach_alpha = k / (k - 1.0) * (1.0 - var.iter().sum::<f64>() / total_var);

    let corr = Matrix4::from_fn(|i, j| correlation[i][j]);
    let eig = SymmetricEigen::new(corr);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let trace: f64 = ev.iter().sum();
    let explained_variance = std::array::from_fn(|i| ev[i] / trace);

    Ok(StudyReport {
        correlation,
        cronbach_alpha,
        explained_variance,
        reversed,
    })
}
