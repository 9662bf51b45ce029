use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub x: f32,
    pub r: f32,
    pub g: f32,
    pub b: f32,
    pub a: f32,
}

impl ControlPoint {
    pub fn new(x: f32, rgb: [f32; 3], a: f32) -> Self {
        Self {
            x,
            r: rgb[0],
            g: rgb[1],
            b: rgb[2],
            a,
        }
    }

    fn rgba(&self) -> [f32; 4] {
        [self.r, self.g, self.b, self.a]
    }
}

/// Piecewise-linear map from normalized value to color and opacity.
///
/// Serialized as a plain JSON list of control points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ControlPoint>", into = "Vec<ControlPoint>")]
pub struct TransferFunction {
    points: Vec<ControlPoint>,
}

impl TryFrom<Vec<ControlPoint>> for TransferFunction {
    type Error = Error;

    fn try_from(points: Vec<ControlPoint>) -> Result<Self> {
        TransferFunction::new(points)
    }
}

impl From<TransferFunction> for Vec<ControlPoint> {
    fn from(tf: TransferFunction) -> Self {
        tf.points
    }
}

impl TransferFunction {
    pub fn new(points: Vec<ControlPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config(
                "transfer function needs >= 2 control points".into(),
            ));
        }
        if points[0].x != 0.0 || points[points.len() - 1].x != 1.0 {
            return Err(Error::Config(
                "transfer function must span x = 0 to x = 1".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[0].x < w[1].x)) {
            return Err(Error::Config(
                "control point x must be strictly increasing".into(),
            ));
        }
        let unit = |v: f32| (0.0..=1.0).contains(&v);
        if points.iter().any(|p| !p.rgba().into_iter().all(unit)) {
            return Err(Error::Config(
                "control point channels must lie in [0,1]".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Opacity ramp from 0 to `max_opacity` with constant color.
    pub fn ramp(rgb: [f32; 3], max_opacity: f32) -> Self {
        Self::new(vec![
            ControlPoint::new(0.0, rgb, 0.0),
            ControlPoint::new(1.0, rgb, max_opacity),
        ])
        .expect("valid ramp")
    }

    /// Fully transparent everywhere.
    pub fn transparent() -> Self {
        Self::ramp([1.0; 3], 0.0)
    }

    pub fn points(&self) -> &[ControlPoint] {
        &self.points
    }

    /// Interpolated `(r, g, b, a)`; the value is clamped to `[0,1]` first.
    pub fn eval(&self, value: f32) -> [f32; 4] {
        let v = if value.is_nan() {
            0.0
        } else {
            value.clamp(0.0, 1.0)
        };
        let i = self.points.partition_point(|p| p.x <= v);
        if i == 0 {
            return self.points[0].rgba();
        }
        if i == self.points.len() {
            return self.points[i - 1].rgba();
        }
        let (p0, p1) = (&self.points[i - 1], &self.points[i]);
        let t = (v - p0.x) / (p1.x - p0.x);
        let (a, b) = (p0.rgba(), p1.rgba());
        std::array::from_fn(|k| a[k] + (b[k] - a[k]) * t)
    }

    pub fn opacity(&self, value: f32) -> f32 {
        self.eval(value)[3]
    }

    /// Exact maximum opacity over `[lo, hi]`.
    pub fn max_opacity(&self, lo: f32, hi: f32) -> f32 {
        let (lo, hi) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
        let ends = self.opacity(lo).max(self.opacity(hi));
        self.points
            .iter()
            .filter(|p| p.x > lo && p.x < hi)
            .map(|p| p.a)
            .fold(ends, f32::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> TransferFunction {
        TransferFunction::new(vec![
            ControlPoint::new(0.0, [0.0, 0.2, 0.4], 0.0),
            ControlPoint::new(1.0, [1.0, 0.6, 0.0], 0.8),
        ])
        .unwrap()
    }

    #[test]
    fn endpoints_midpoint_and_clamping() {
        let tf = two_point();
        assert_eq!(tf.eval(0.0), [0.0, 0.2, 0.4, 0.0]);
        let mid = tf.eval(0.5);
        for (m, e) in mid.iter().zip([0.5, 0.4, 0.2, 0.4]) {
            assert!((m - e).abs() < 1e-6);
        }
        assert_eq!(tf.eval(1.2), tf.eval(1.0));
        assert_eq!(tf.eval(-3.0), tf.eval(0.0));
    }

    #[test]
    fn invalid_point_sets_are_rejected() {
        let p = |x| ControlPoint::new(x, [0.0; 3], 0.0);
        assert!(TransferFunction::new(vec![p(0.0)]).is_err());
        assert!(TransferFunction::new(vec![p(0.1), p(1.0)]).is_err());
        assert!(TransferFunction::new(vec![p(0.0), p(0.5), p(0.5), p(1.0)]).is_err());
        assert!(TransferFunction::new(vec![p(0.0), p(0.9)]).is_err());
        assert!(
            TransferFunction::new(vec![p(0.0), ControlPoint::new(1.0, [2.0, 0.0, 0.0], 0.0)])
                .is_err()
        );
    }

    #[test]
    fn json_is_a_list_of_points() {
        let tf = two_point();
        let s = serde_json::to_string(&tf).unwrap();
        assert!(s.starts_with('['));
        assert_eq!(serde_json::from_str::<TransferFunction>(&s).unwrap(), tf);
        assert!(
            serde_json::from_str::<TransferFunction>(r#"[{"x":0.5,"r":0,"g":0,"b":0,"a":0}]"#)
                .is_err()
        );
    }

    #[test]
    fn range_max_sees_interior_peaks() {
        let tf = TransferFunction::new(vec![
            ControlPoint::new(0.0, [1.0; 3], 0.0),
            ControlPoint::new(0.5, [1.0; 3], 0.9),
            ControlPoint::new(1.0, [1.0; 3], 0.1),
        ])
        .unwrap();
        assert!((tf.max_opacity(0.2, 0.8) - 0.9).abs() < 1e-6);
        assert!((tf.max_opacity(0.0, 0.25) - 0.45).abs() < 1e-6);
    }
}
