//! Eight hand-built box pairs contrasting NHD with IoU and GIoU.
//!
//! The ground truth is a `2 × 1.6 × 1.2` m box six metres in front of the
//! camera. Scenarios (a)–(d) place a smaller box fully inside it, so the
//! overlap metrics cannot tell them apart; (e) and (f) move the small box
//! out to two different gaps; (g) is (a) with both boxes scaled by two; (h)
//! predicts the ground truth exactly.

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{Box3D, CameraIntrinsics};
use crate::metrics::{compare_boxes, MetricReport};

pub const SCENARIO_CAMERA: CameraIntrinsics = CameraIntrinsics {
    fx: 500.0,
    fy: 500.0,
    cx: 320.0,
    cy: 240.0,
    width: 640.0,
    height: 480.0,
};

const OUTER_DIMS: [f64; 3] = [2.0, 1.6, 1.2];
const INNER_DIMS: [f64; 3] = [1.0, 0.8, 0.6];
const CENTRE: [f64; 3] = [0.0, 0.0, 6.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub gt: Box3D,
    pub pred: Box3D,
    pub metrics: MetricReport,
}

fn make(centre: [f64; 3], dims: [f64; 3], r: &Matrix3<f64>) -> Result<Box3D, EvalError> {
    Ok(Box3D::from_pose(
        &Point3::from(centre),
        dims,
        r,
        &SCENARIO_CAMERA,
    )?)
}

fn offset(d: [f64; 3]) -> [f64; 3] {
    [CENTRE[0] + d[0], CENTRE[1] + d[1], CENTRE[2] + d[2]]
}

/// Builds all eight scenarios and their metrics.
pub fn metric_scenarios() -> Result<Vec<Scenario>, EvalError> {
    let id = Matrix3::identity();
    // Rotation about the camera y axis with cos = 0.8, sin = 0.6.
    let ry = Matrix3::new(0.8, 0.0, 0.6, 0.0, 1.0, 0.0, -0.6, 0.0, 0.8);
    let gt = make(CENTRE, OUTER_DIMS, &id)?;
    // Non-overlapping boxes: gap between the facing x faces.
    let beside = |gap: f64| {
        make(
            offset([0.5 * OUTER_DIMS[0] + gap + 0.5 * INNER_DIMS[0], 0.0, 0.0]),
            INNER_DIMS,
            &id,
        )
    };
    let inner = make(CENTRE, INNER_DIMS, &id)?;
    let cases: Vec<(&str, &str, Box3D, Box3D)> = vec![
        ("a", "enclosed", gt, inner),
        (
            "b",
            "enclosed, translated",
            gt,
            make(offset([0.3, 0.2, 0.1]), INNER_DIMS, &id)?,
        ),
        (
            "c",
            "enclosed, rescaled to equal volume",
            gt,
            make(CENTRE, [1.2, 0.8, 0.5], &id)?,
        ),
        (
            "d",
            "enclosed, rotated about y",
            gt,
            make(CENTRE, INNER_DIMS, &ry)?,
        ),
        ("e", "separate, gap 0.5 m", gt, beside(0.5)?),
        ("f", "separate, gap 1.5 m", gt, beside(1.5)?),
        (
            "g",
            "enclosed, both scaled by 2",
            gt.scaled(2.0),
            inner.scaled(2.0),
        ),
        ("h", "aligned", gt, gt),
    ];
    cases
        .into_iter()
        .map(|(name, description, gt, pred)| {
            Ok(Scenario {
                name: name.into(),
                description: description.into(),
                metrics: compare_boxes(&pred, &gt, &SCENARIO_CAMERA)?,
                gt,
                pred,
            })
        })
        .collect()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, EvalError> {
    let bytes = w
        .into_inner()
        .map_err(|e| EvalError::Output(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

/// `scenario,description,iou3d,giou3d,nhd,chamfer` with full precision.
pub fn scenarios_csv(s: &[Scenario]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scenario",
        "description",
        "iou3d",
        "giou3d",
        "nhd",
        "chamfer",
    ])?;
    for sc in s {
        let m = &sc.metrics;
        w.write_record([
            sc.name.clone(),
            sc.description.clone(),
            m.iou3d.to_string(),
            m.giou3d.to_string(),
            m.nhd.to_string(),
            m.chamfer.to_string(),
        ])?;
    }
    finish(w)
}

/// Plot-ready corners: one row per scenario, box and corner, camera frame.
pub fn corners_csv(s: &[Scenario]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "box", "corner", "x", "y", "z"])?;
    for sc in s {
        for (label, b) in [("gt", &sc.gt), ("pred", &sc.pred)] {
            for (i, c) in b.corners(&SCENARIO_CAMERA)?.iter().enumerate() {
                let v: Vector3<f64> = c.coords;
                w.write_record([
                    sc.name.clone(),
                    label.into(),
                    i.to_string(),
                    v.x.to_string(),
                    v.y.to_string(),
                    v.z.to_string(),
                ])?;
            }
        }
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enclosure_blindness_and_nhd_sensitivity() {
        let s = metric_scenarios().unwrap();
        let m: Vec<_> = s.iter().map(|x| x.metrics).collect();
        for i in 0..4 {
            assert!((m[i].iou3d - 0.125).abs() < 1e-9);
            assert!((m[i].iou3d - m[0].iou3d).abs() < 1e-9);
            assert!((m[i].giou3d - m[0].giou3d).abs() < 1e-9);
            for j in 0..i {
                assert!((m[i].nhd - m[j].nhd).abs() > 1e-6, "{i} {j}");
            }
        }
        assert_eq!((m[4].iou3d, m[5].iou3d), (0.0, 0.0));
        assert!(m[5].nhd > m[4].nhd);
        assert!(m[5].giou3d < m[4].giou3d);
        for (a, g) in [
            (m[0].iou3d, m[6].iou3d),
            (m[0].giou3d, m[6].giou3d),
            (m[0].nhd, m[6].nhd),
        ] {
            assert!((a - g).abs() < 1e-9);
        }
        assert_eq!((m[7].iou3d, m[7].giou3d, m[7].nhd), (1.0, 1.0, 0.0));
    }

    #[test]
    fn csv_shapes() {
        let s = metric_scenarios().unwrap();
        assert_eq!(scenarios_csv(&s).unwrap().lines().count(), 9);
        assert_eq!(corners_csv(&s).unwrap().lines().count(), 1 + 8 * 2 * 8);
    }
}
