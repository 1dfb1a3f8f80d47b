//! Entitativity mapping: a linear map from normalized group motion
//! parameters to the four perceived-emotion features, its inverse, and the
//! social-invisibility scalar defined on top of it.

mod study;

pub use study::{
    aggregate_responses, fit_mapping, fit_matrix, pair_label, study_statistics, Level,
    LabeledPoint, StudyReport, StudyResponse, Item, ITEMS, PAIR_COUNT,
};

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::agent::{GpField, GroupParams};
use crate::error::{Error, Result};

/// Determinants at or below this magnitude are treated as singular.
pub const SINGULAR_DET: f64 = 1e-9;

/// Perceived emotional impression of a group. Component order is fixed:
/// friendliness, creepiness, comfort, unnerving.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntitativityVector {
    pub friendliness: f64,
    pub creepiness: f64,
    pub comfort: f64,
    pub unnerving: f64,
}

impl EntitativityVector {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(friendliness: f64, creepiness: f64, comfort: f64, unnerving: f64) -> Self {
        Self {
            friendliness,
            creepiness,
            comfort,
            unnerving,
        }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.friendliness, self.creepiness, self.comfort, self.unnerving]
    }

    fn to_vector(self) -> Vector4<f64> {
        Vector4::from(self.to_array())
    }

    fn from_vector(v: Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    /// `self + t·(other − self)`
    pub fn lerp(&self, other: &Self, t: f64) -> Self {
        Self::from_vector(self.to_vector() + (other.to_vector() - self.to_vector()) * t)
    }

    /// Creepiness + unnerving − friendliness − comfort.
    pub fn threat(&self) -> f64 {
        self.creepiness + self.unnerving - self.friendliness - self.comfort
    }
}

/// Inclusive bounds, defaults and normalization divisors for the four group
/// parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamBounds {
    pub min: GroupParams,
    pub max: GroupParams,
    pub default: GroupParams,
    /// Normalization divisors, twice each parameter's range.
    pub scale: [f64; 4],
}

impl ParamBounds {
    /// The study's bounds; divisors written out as published (14, 3.4, 2, 1.8).
    pub const STANDARD: ParamBounds = ParamBounds {
        min: GroupParams::MIN,
        max: GroupParams::MAX,
        default: GroupParams::DEFAULT,
        scale: [14.0, 3.4, 2.0, 1.8],
    };

    pub fn new(min: GroupParams, max: GroupParams, default: GroupParams) -> Result<Self> {
        let mut scale = [0.0; 4];
        for f in GpField::ALL {
            let (lo, hi, d) = (min.get(f), max.get(f), default.get(f));
            if !(lo < hi && (lo..=hi).contains(&d)) {
                return Err(Error::Config(format!(
                    "bounds for {f} must satisfy min < max and contain the default"
                )));
            }
            scale[f.index()] = 2.0 * (hi - lo);
        }
        Ok(Self {
            min,
            max,
            default,
            scale,
        })
    }

    pub fn check(&self, gp: &GroupParams) -> Result<()> {
        for f in GpField::ALL {
            let v = gp.get(f);
            let (lo, hi) = (self.min.get(f), self.max.get(f));
            if !(v.is_finite() && v >= lo && v <= hi) {
                return Err(Error::BoundViolation {
                    field: f.name().into(),
                    value: v,
                    min: lo,
                    max: hi,
                });
            }
        }
        Ok(())
    }

    pub fn normalize(&self, gp: &GroupParams) -> Result<[f64; 4]> {
        self.check(gp)?;
        Ok(self.normalize_unchecked(gp))
    }

    fn normalize_unchecked(&self, gp: &GroupParams) -> [f64; 4] {
        let (v, d) = (gp.to_array(), self.default.to_array());
        std::array::from_fn(|i| (v[i] - d[i]) / self.scale[i])
    }

    pub fn denormalize(&self, n: [f64; 4]) -> GroupParams {
        let d = self.default.to_array();
        GroupParams::from_array(std::array::from_fn(|i| n[i] * self.scale[i] + d[i]))
    }

    pub fn clamp(&self, gp: &GroupParams) -> GroupParams {
        let mut out = *gp;
        for f in GpField::ALL {
            out.set(f, gp.get(f).clamp(self.min.get(f), self.max.get(f)));
        }
        out
    }
}

/// Normalizes `gp` against the study's bounds, centering at the defaults.
pub fn normalize_gp(gp: &GroupParams) -> Result<[f64; 4]> {
    ParamBounds::STANDARD.normalize(gp)
}

/// Inverse of [`normalize_gp`].
pub fn denormalize_gp(n: [f64; 4]) -> GroupParams {
    ParamBounds::STANDARD.denormalize(n)
}

/// The published regression matrix (rows: friendliness, creepiness, comfort,
/// unnerving; columns: neighbor_dist, radius, pref_speed, group_cohesion).
pub const PUBLISHED_MATRIX: [[f64; 4]; 4] = [
    [-1.7862, -1.0614, -2.1983, -1.7122],
    [1.1224, 1.1441, 1.7672, -0.2634],
    [-1.0500, -1.2176, -2.1466, -0.9220],
    [1.1948, 1.7000, 0.9224, 0.3622],
];

/// Linear map `E = M · normalize(GP)` with cached inverse and the extreme
/// entitativities reached at the all-min and all-max parameter corners.
#[derive(Clone, Debug, PartialEq)]
pub struct EntitativityMapping {
    matrix: Matrix4<f64>,
    inverse: Matrix4<f64>,
    bounds: ParamBounds,
    e_min: EntitativityVector,
    e_max: EntitativityVector,
}

impl EntitativityMapping {
    pub fn new(rows: [[f64; 4]; 4], bounds: ParamBounds) -> Result<Self> {
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Config("mapping matrix has non-finite entries".into()));
        }
        let matrix = Matrix4::from_fn(|r, c| rows[r][c]);
        let det = matrix.determinant();
        if det.abs() <= SINGULAR_DET {
            return Err(Error::SingularMapping { det, matrix: Box::new(rows) });
        }
        let inverse = matrix
            .try_inverse()
            .ok_or_else(|| Error::SingularMapping { det, matrix: Box::new(rows) })?;
        let apply = |n: [f64; 4]| EntitativityVector::from_vector(matrix * Vector4::from(n));
        let e_min = apply(bounds.normalize_unchecked(&bounds.min));
        let e_max = apply(bounds.normalize_unchecked(&bounds.max));
        if e_min == e_max {
            return Err(Error::Config("mapping has identical extreme entitativities".into()));
        }
        Ok(Self {
            matrix,
            inverse,
            bounds,
            e_min,
            e_max,
        })
    }

    /// The published matrix with the study's bounds.
    pub fn published() -> Self {
        Self::new(PUBLISHED_MATRIX, ParamBounds::STANDARD).expect("published matrix is invertible")
    }

    pub fn rows(&self) -> [[f64; 4]; 4] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.matrix[(r, c)]))
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    /// Coefficients of the threat direction (creepiness + unnerving −
    /// friendliness − comfort) on each normalized parameter. When all are
    /// positive the parameter-box corners are the extreme entitativities.
    pub fn threat_coefficients(&self) -> [f64; 4] {
        let w = Vector4::new(-1.0, 1.0, -1.0, 1.0);
        let c = self.matrix.transpose() * w;
        [c[0], c[1], c[2], c[3]]
    }

    pub fn corners_are_extreme(&self) -> bool {
        self.threat_coefficients().iter().all(|c| *c > 0.0)
    }

    /// Perceived entitativity of a group moving with `gp`.
    pub fn entitativity(&self, gp: &GroupParams) -> Result<EntitativityVector> {
        let n = self.bounds.normalize(gp)?;
        Ok(EntitativityVector::from_vector(self.matrix * Vector4::from(n)))
    }

    /// `(e_min, e_max)`
    pub fn extreme_entitativity(&self) -> (EntitativityVector, EntitativityVector) {
        (self.e_min, self.e_max)
    }

    pub fn e_min(&self) -> EntitativityVector {
        self.e_min
    }

    pub fn e_max(&self) -> EntitativityVector {
        self.e_max
    }

    /// Social invisibility `1 − ‖E − E_min‖ / ‖E_max − E_min‖`, clamped to [0, 1].
    pub fn invisibility(&self, e: &EntitativityVector) -> f64 {
        (1.0 - self.raw_distance_ratio(e)).clamp(0.0, 1.0)
    }

    fn raw_distance_ratio(&self, e: &EntitativityVector) -> f64 {
        e.distance(&self.e_min) / self.e_max.distance(&self.e_min)
    }

    /// Point on the e_min–e_max segment with invisibility exactly `s`.
    pub fn target_entitativity(&self, s: f64) -> Result<EntitativityVector> {
        check_unit("s", s)?;
        Ok(self.e_min.lerp(&self.e_max, 1.0 - s))
    }

    /// Group parameters producing `e_des`, clamped into bounds.
    pub fn params_for_entitativity(&self, e_des: &EntitativityVector) -> Result<GroupParams> {
        Ok(self.bounds.clamp(&self.params_unclamped(e_des)?))
    }

    /// Linear solve and denormalization without clamping.
    pub fn params_unclamped(&self, e_des: &EntitativityVector) -> Result<GroupParams> {
        if !e_des.is_finite() {
            return Err(Error::input("desired entitativity must be finite"));
        }
        let n = self.inverse * e_des.to_vector();
        Ok(self.bounds.denormalize([n[0], n[1], n[2], n[3]]))
    }

    /// Enforces `invisibility(e) ≥ s_min` by moving `e` toward `e_min`.
    pub fn constrain_invisibility(&self, e: &EntitativityVector, s_min: f64) -> Result<EntitativityVector> {
        check_unit("s_min", s_min)?;
        let d = e.distance(&self.e_min);
        let allowed = (1.0 - s_min) * self.e_max.distance(&self.e_min);
        if d <= allowed {
            return Ok(*e);
        }
        // Shrink the offset from e_min to the allowed length.
        Ok(self.e_min.lerp(e, allowed / d))
    }

    /// Target entitativity and parameters for a desired invisibility.
    pub fn params_for_invisibility(&self, s: f64) -> Result<GroupParams> {
        self.params_for_entitativity(&self.target_entitativity(s)?)
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must lie in [0, 1], got {v}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvisibilityMode {
    FixedS,
    LowerBound,
}

/// Requested social invisibility: a fixed level `s`, or a lower bound
/// `s_min` that intervention may not go below.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvisibilitySetting {
    pub mode: InvisibilityMode,
    pub s: f64,
    pub s_min: f64,
}

impl Default for InvisibilitySetting {
    fn default() -> Self {
        Self::fixed(1.0)
    }
}

impl InvisibilitySetting {
    pub fn fixed(s: f64) -> Self {
        Self {
            mode: InvisibilityMode::FixedS,
            s,
            s_min: 0.0,
        }
    }

    pub fn lower_bound(s_min: f64) -> Self {
        Self {
            mode: InvisibilityMode::LowerBound,
            s: 1.0,
            s_min,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("invisibility.s", self.s)?;
        check_unit("invisibility.s_min", self.s_min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: [f64; 4], b: [f64; 4], tol: f64) {
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() <= tol, "component {i}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_gp(&GroupParams::DEFAULT).unwrap(), [0.0; 4]);
        assert_close(
            normalize_gp(&GroupParams::MAX).unwrap(),
            [0.357143, 0.382353, 0.35, 0.277778],
            1e-6,
        );
        assert_close(
            normalize_gp(&GroupParams::MIN).unwrap(),
            [-0.142857, -0.117647, -0.15, -0.222222],
            1e-6,
        );
    }

    #[test]
    fn normalize_rejects_out_of_bounds() {
        let gp = GroupParams {
            radius: 2.5,
            ..GroupParams::DEFAULT
        };
        match normalize_gp(&gp) {
            Err(Error::BoundViolation { field, .. }) => assert_eq!(field, "radius"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn denormalize_inverts_normalize() {
        let gp = GroupParams::from_array([7.3, 1.1, 2.0, 0.35]);
        let back = denormalize_gp(normalize_gp(&gp).unwrap());
        assert_close(back.to_array(), gp.to_array(), 1e-12);
    }

    #[test]
    fn identity_mapping_extremes_are_normalized_corners() {
        let id = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        let m = EntitativityMapping::new(id, ParamBounds::STANDARD).unwrap();
        let (lo, hi) = m.extreme_entitativity();
        assert_close(lo.to_array(), normalize_gp(&GroupParams::MIN).unwrap(), 0.0);
        assert_close(hi.to_array(), normalize_gp(&GroupParams::MAX).unwrap(), 0.0);
    }

    #[test]
    fn invisibility_examples() {
        let m = EntitativityMapping::published();
        let (lo, hi) = m.extreme_entitativity();
        assert_eq!(m.invisibility(&lo), 1.0);
        assert_eq!(m.invisibility(&hi), 0.0);
        assert!((m.invisibility(&lo.lerp(&hi, 0.5)) - 0.5).abs() < 1e-12);
        // off-segment points further than e_max clamp to zero
        assert_eq!(m.invisibility(&lo.lerp(&hi, 2.0)), 0.0);
    }

    #[test]
    fn target_examples() {
        let m = EntitativityMapping::published();
        let (lo, hi) = m.extreme_entitativity();
        assert_eq!(m.target_entitativity(1.0).unwrap(), lo);
        assert_close(m.target_entitativity(0.0).unwrap().to_array(), hi.to_array(), 1e-15);
        assert_close(
            m.target_entitativity(0.25).unwrap().to_array(),
            lo.lerp(&hi, 0.75).to_array(),
            1e-15,
        );
        assert!(m.target_entitativity(1.2).is_err());
        assert!(m.target_entitativity(-0.1).is_err());
    }

    #[test]
    fn params_examples() {
        let m = EntitativityMapping::published();
        let gp = m.params_for_entitativity(&EntitativityVector::ZERO).unwrap();
        assert_close(gp.to_array(), GroupParams::DEFAULT.to_array(), 1e-12);
        let gp = m.params_for_entitativity(&m.e_min()).unwrap();
        assert_close(gp.to_array(), GroupParams::MIN.to_array(), 1e-9);
    }

    #[test]
    fn constrain_examples() {
        let m = EntitativityMapping::published();
        let (lo, hi) = m.extreme_entitativity();
        assert_eq!(m.constrain_invisibility(&lo, 0.9).unwrap(), lo);
        assert_eq!(m.constrain_invisibility(&hi, 0.0).unwrap(), hi);
        let c = m.constrain_invisibility(&hi, 0.4).unwrap();
        assert_close(c.to_array(), hi.lerp(&lo, 0.4).to_array(), 1e-12);
        assert!((m.invisibility(&c) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_rejected() {
        let zero = [[0.0; 4]; 4];
        assert!(matches!(
            EntitativityMapping::new(zero, ParamBounds::STANDARD),
            Err(Error::SingularMapping { .. })
        ));
    }

    #[test]
    fn bounds_scale_is_twice_range() {
        let computed = ParamBounds::new(GroupParams::MIN, GroupParams::MAX, GroupParams::DEFAULT).unwrap();
        assert_close(computed.scale, ParamBounds::STANDARD.scale, 1e-12);
    }

    #[test]
    fn published_corners_are_extreme() {
        let m = EntitativityMapping::published();
        assert!(m.corners_are_extreme());
        assert!(m.determinant().abs() > SINGULAR_DET);
    }
}
