use serde::{Deserialize, Serialize};

use super::DiffusionError;
use crate::geometry::{Box3D, Rot6D};

/// Number of diffused box parameters: `u, v, w, h, l` and the 6D rotation.
pub const STATE_DIM: usize = 11;

/// Names of the state components, in order.
pub const STATE_FIELDS: [&str; STATE_DIM] =
    ["u", "v", "w", "h", "l", "p1", "p2", "p3", "p4", "p5", "p6"];

/// Smallest dimension produced by [`denormalise`], metres. Denoiser outputs
/// at the bottom of the range would otherwise give zero-sized boxes.
pub const MIN_DIMENSION: f64 = 1e-4;

/// Box parameters in scaled space `[-s, s]`. Also used for noise samples,
/// which share the shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxState(pub [f64; STATE_DIM]);

impl BoxState {
    pub const ZERO: BoxState = BoxState([0.0; STATE_DIM]);

    pub fn values(&self) -> &[f64; STATE_DIM] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn clamped(&self, scale: f64) -> BoxState {
        BoxState(self.0.map(|x| x.clamp(-scale, scale)))
    }
}

/// Ranges used to map box parameters onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalisationSpec {
    pub image_width: f64,
    pub image_height: f64,
    /// Predefined maximum box dimension, metres.
    pub max_dim: f64,
}

impl NormalisationSpec {
    pub const DEFAULT_MAX_DIM: f64 = 15.0;

    pub fn new(image_width: f64, image_height: f64, max_dim: f64) -> Result<Self, DiffusionError> {
        let spec = Self {
            image_width,
            image_height,
            max_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DiffusionError> {
        for (name, x) in [
            ("image_width", self.image_width),
            ("image_height", self.image_height),
            ("max_dim", self.max_dim),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(DiffusionError::InvalidConfig(format!(
                    "{name} must be positive"
                )));
            }
        }
        Ok(())
    }

    fn ranges(&self) -> [f64; 5] {
        [
            self.image_width,
            self.image_height,
            self.max_dim,
            self.max_dim,
            self.max_dim,
        ]
    }
}

const ROTATION_SLACK: f64 = 1e-9;

fn check(field: usize, value: f64, lo: f64, hi: f64, open_lo: bool) -> Result<(), DiffusionError> {
    let ok = value.is_finite() && value <= hi && if open_lo { value > lo } else { value >= lo };
    if ok {
        Ok(())
    } else {
        Err(DiffusionError::OutOfRange {
            field: STATE_FIELDS[field],
            value,
        })
    }
}

/// Maps each parameter to `[0, 1]` by its range, then to `[-s, s]` with
/// `x ↦ (2x − 1)·s`. Rotation components map from `[-1, 1]` via `(p + 1)/2`.
/// Depth is not part of the state.
pub fn normalise(
    box3d: &Box3D,
    spec: &NormalisationSpec,
    scale: f64,
) -> Result<BoxState, DiffusionError> {
    let raw = [box3d.u, box3d.v, box3d.w, box3d.h, box3d.l];
    let ranges = spec.ranges();
    let mut out = [0.0; STATE_DIM];
    for i in 0..5 {
        check(i, raw[i], 0.0, ranges[i], i >= 2)?;
        out[i] = (raw[i] / ranges[i] * 2.0 - 1.0) * scale;
    }
    for (j, p) in box3d.p.to_array().into_iter().enumerate() {
        // Unit-vector components can overshoot ±1 by rounding.
        check(5 + j, p, -1.0 - ROTATION_SLACK, 1.0 + ROTATION_SLACK, false)?;
        let p = p.clamp(-1.0, 1.0);
        out[5 + j] = ((p + 1.0) / 2.0 * 2.0 - 1.0) * scale;
    }
    Ok(BoxState(out))
}

/// Inverse of [`normalise`], placing the box at depth `z`. Dimensions are
/// floored at [`MIN_DIMENSION`].
pub fn denormalise(
    state: &BoxState,
    z: f64,
    spec: &NormalisationSpec,
    scale: f64,
) -> Result<Box3D, DiffusionError> {
    let unit = state.0.map(|x| (x / scale + 1.0) / 2.0);
    let ranges = spec.ranges();
    let raw: [f64; 5] = std::array::from_fn(|i| unit[i] * ranges[i]);
    let p: [f64; 6] = std::array::from_fn(|j| unit[5 + j] * 2.0 - 1.0);
    Ok(Box3D::new(
        raw[0],
        raw[1],
        z,
        raw[2].max(MIN_DIMENSION),
        raw[3].max(MIN_DIMENSION),
        raw[4].max(MIN_DIMENSION),
        Rot6D::from_array(p),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::matrix_to_rot6d;
    use nalgebra::{Rotation3, Unit, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> NormalisationSpec {
        NormalisationSpec::new(640.0, 480.0, 15.0).unwrap()
    }

    #[test]
    fn midpoint_maps_to_zero() {
        let b = Box3D {
            u: 320.0,
            v: 240.0,
            z: 3.0,
            w: 7.5,
            h: 7.5,
            l: 7.5,
            p: Rot6D::from_array([0.0, 0.0, 1e-300, 0.0, 1e-300, 0.0]),
        };
        let s = normalise(&b, &spec(), 2.0).unwrap();
        assert!(s.0.iter().all(|x| x.abs() < 1e-15), "{s:?}");
    }

    #[test]
    fn rotation_endpoints() {
        let b = Box3D::new(
            0.0,
            480.0,
            3.0,
            1.0,
            1.0,
            1.0,
            Rot6D::from_array([1.0, 0.0, -1.0, 0.0, 1.0, 0.0]),
        )
        .unwrap();
        let s = normalise(&b, &spec(), 2.0).unwrap();
        assert_eq!(s.0[0], -2.0);
        assert_eq!(s.0[1], 2.0);
        assert_eq!(s.0[5], 2.0);
        assert_eq!(s.0[7], -2.0);
    }

    #[test]
    fn out_of_range() {
        let b = Box3D::new(700.0, 240.0, 3.0, 1.0, 1.0, 1.0, Rot6D::IDENTITY).unwrap();
        assert!(matches!(
            normalise(&b, &spec(), 2.0),
            Err(DiffusionError::OutOfRange { field: "u", .. })
        ));
        let b = Box3D::new(300.0, 240.0, 3.0, 1.0, 16.0, 1.0, Rot6D::IDENTITY).unwrap();
        assert!(matches!(
            normalise(&b, &spec(), 2.0),
            Err(DiffusionError::OutOfRange { field: "h", .. })
        ));
    }

    #[test]
    fn denormalise_floors_dimensions() {
        let mut s = BoxState::ZERO;
        s.0[2] = -2.0;
        s.0[5] = 2.0;
        s.0[9] = 2.0;
        let b = denormalise(&s, 4.0, &spec(), 2.0).unwrap();
        assert_eq!(b.w, MIN_DIMENSION);
        assert_eq!(b.z, 4.0);
        assert_eq!((b.u, b.v), (320.0, 240.0));
    }

    #[test]
    fn round_trip_1000_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = spec();
        for _ in 0..1000 {
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                1.0,
            );
            let r =
                Rotation3::from_axis_angle(&Unit::new_normalize(axis), rng.random_range(0.0..3.1));
            let b = Box3D::new(
                rng.random_range(0.0..640.0),
                rng.random_range(0.0..480.0),
                rng.random_range(1.0..10.0),
                rng.random_range(0.01..15.0),
                rng.random_range(0.01..15.0),
                rng.random_range(0.01..15.0),
                matrix_to_rot6d(r.matrix()).unwrap(),
            )
            .unwrap();
            let s = normalise(&b, &spec, 2.0).unwrap();
            assert!(s.0.iter().all(|x| x.abs() <= 2.0));
            let back = denormalise(&s, b.z, &spec, 2.0).unwrap();
            let (x, y) = (
                [b.u, b.v, b.w, b.h, b.l],
                [back.u, back.v, back.w, back.h, back.l],
            );
            for i in 0..5 {
                assert!((x[i] - y[i]).abs() < 1e-9);
            }
            for (p, q) in b.p.to_array().iter().zip(back.p.to_array()) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
