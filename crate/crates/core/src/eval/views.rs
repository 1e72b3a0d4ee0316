//! Building blocks of the interactive labelling workflow: proposals at a
//! chosen depth, their projection into every posed view, and the labels
//! that a log of selections produces.

use nalgebra::{Matrix4, Point3};
use serde::{Deserialize, Serialize};

use super::annotations::{AnnotationSet, ObjectRecord, PoseBox};
use super::evaluate::DiffusionPipeline;
use super::EvalError;
use crate::diffusion::{Prediction, SampleConfig};
use crate::geometry::{Box3D, MIN_PROJECTION_DEPTH};

/// Depths are compared and cached at millimetre resolution.
pub fn depth_key(depth: f64) -> i64 {
    (depth * 1000.0).round() as i64
}

/// The depth actually used for a request at `depth`.
pub fn quantised_depth(depth: f64) -> f64 {
    depth_key(depth) as f64 / 1000.0
}

/// Pixel coordinates of the eight corners in one image, or `None` when a
/// corner lies behind that camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewProjection {
    pub image_id: String,
    pub corners: Option<[[f64; 2]; 8]>,
}

fn rigid_inverse(m: &Matrix4<f64>) -> Matrix4<f64> {
    let r = m.fixed_view::<3, 3>(0, 0).transpose();
    let t = -(r * m.fixed_view::<3, 1>(0, 3));
    let mut out = Matrix4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    out
}

/// Projects `b`, given in the camera frame of `image_id`, into that image
/// and, when the image has a pose, into every other posed image.
pub fn project_views(
    set: &AnnotationSet,
    image_id: &str,
    b: &Box3D,
) -> Result<Vec<ViewProjection>, EvalError> {
    let src = set
        .image(image_id)
        .ok_or_else(|| EvalError::UnknownImage(image_id.to_string()))?;
    let corners = b.corners(&src.camera())?;
    let project = |k: crate::geometry::CameraIntrinsics, pts: &[Point3<f64>; 8]| {
        if pts.iter().any(|p| p.z < MIN_PROJECTION_DEPTH) {
            return Ok(None);
        }
        let mut out = [[0.0; 2]; 8];
        for (o, p) in out.iter_mut().zip(pts) {
            let q = k.project(p)?;
            *o = [q.x, q.y];
        }
        Ok::<_, EvalError>(Some(out))
    };
    let mut views = vec![ViewProjection {
        image_id: src.id.clone(),
        corners: project(src.camera(), &corners)?,
    }];
    let Some(src_pose) = src.pose_matrix() else {
        return Ok(views);
    };
    for img in &set.images {
        let Some(pose) = img.pose_matrix().filter(|_| img.id != src.id) else {
            continue;
        };
        let to_dst = rigid_inverse(&pose) * src_pose;
        let pts = corners.map(|c| to_dst.transform_point(&c));
        views.push(ViewProjection {
            image_id: img.id.clone(),
            corners: project(img.camera(), &pts)?,
        });
    }
    Ok(views)
}

/// Finds an object by id, narrowed by image when ids repeat across images.
pub fn find_object<'a>(
    set: &'a AnnotationSet,
    image_id: Option<&str>,
    object_id: &str,
) -> Result<(usize, &'a ObjectRecord), EvalError> {
    let mut hits = set
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.id == object_id && image_id.is_none_or(|i| o.image_id == i));
    let not_found = || {
        EvalError::UnknownObject(match image_id {
            Some(i) => format!("`{object_id}` in image `{i}`"),
            None => format!("`{object_id}`"),
        })
    };
    let first = hits.next().ok_or_else(not_found)?;
    if hits.next().is_some() {
        return Err(EvalError::InvalidInput(format!(
            "object id `{object_id}` appears in several images; give the image id"
        )));
    }
    Ok(first)
}

/// A proposal request. Proposals depend only on these fields and the
/// session's annotations and model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProposalKey {
    pub object_index: usize,
    pub depth_mm: i64,
    pub seed: u64,
    pub n_eval: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub index: usize,
    pub box3d: PoseBox,
    pub mu: f64,
    pub eta: f64,
    pub projections: Vec<ViewProjection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub image_id: String,
    pub object_id: String,
    pub depth: f64,
    pub seed: u64,
    pub n_eval: usize,
    pub steps: usize,
    /// Index of the most confident proposal.
    pub selected: usize,
    pub proposals: Vec<Proposal>,
}

/// Samples the proposals of `key` with the object's 2D prompt placed at
/// the key's depth.
pub fn proposals_at_depth(
    set: &AnnotationSet,
    pipeline: &DiffusionPipeline,
    key: &ProposalKey,
) -> Result<ProposalSet, EvalError> {
    let obj = set.objects.get(key.object_index).ok_or_else(|| {
        EvalError::InvalidInput(format!("no object at index {}", key.object_index))
    })?;
    let depth = key.depth_mm as f64 / 1000.0;
    if !(depth > 0.0) {
        return Err(EvalError::InvalidInput("depth must be positive".into()));
    }
    let k = set.camera_of(obj)?;
    let prompt = set.prompt(obj).at_depth(depth);
    let cfg = SampleConfig {
        n_eval: key.n_eval,
        steps: key.steps,
        seed: key.seed,
        stream: key.object_index as u64,
    };
    let preds = pipeline.proposals(&obj.image_id, &obj.id, &prompt, &k, &cfg)?;
    let (selected, _) = crate::diffusion::select_best(&preds)?;
    let proposals = preds
        .iter()
        .enumerate()
        .map(|(index, p): (usize, &Prediction)| {
            Ok(Proposal {
                index,
                box3d: PoseBox::from_box3d(&p.box3d, &k)?,
                mu: p.mu,
                eta: p.eta,
                projections: project_views(set, &obj.image_id, &p.box3d)?,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(ProposalSet {
        image_id: obj.image_id.clone(),
        object_id: obj.id.clone(),
        depth,
        seed: key.seed,
        n_eval: key.n_eval,
        steps: key.steps,
        selected,
        proposals,
    })
}

/// One entry of the append-only selection log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub key: ProposalKey,
    pub proposal_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub image_id: String,
    pub object_id: String,
    pub category: String,
    pub depth: f64,
    pub proposal_index: usize,
    pub mu: f64,
    pub eta: f64,
    pub box3d: PoseBox,
}

/// Labels produced by a selection log: the last selection of each object
/// wins, and labels follow the order of the annotation file.
pub fn replay(
    set: &AnnotationSet,
    pipeline: &DiffusionPipeline,
    log: &[Selection],
) -> Result<Vec<Label>, EvalError> {
    let mut last = vec![None; set.objects.len()];
    for s in log {
        let slot = last.get_mut(s.key.object_index).ok_or_else(|| {
            EvalError::InvalidInput(format!("no object at index {}", s.key.object_index))
        })?;
        *slot = Some(*s);
    }
    last.iter()
        .flatten()
        .map(|s| {
            let ps = proposals_at_depth(set, pipeline, &s.key)?;
            label_of(set, &ps, s)
        })
        .collect()
}

/// The label for selecting `s.proposal_index` out of `ps`.
pub fn label_of(set: &AnnotationSet, ps: &ProposalSet, s: &Selection) -> Result<Label, EvalError> {
    let p = ps.proposals.get(s.proposal_index).ok_or_else(|| {
        EvalError::InvalidInput(format!(
            "proposal index {} out of range (have {})",
            s.proposal_index,
            ps.proposals.len()
        ))
    })?;
    let obj = &set.objects[s.key.object_index];
    Ok(Label {
        image_id: obj.image_id.clone(),
        object_id: obj.id.clone(),
        category: obj.category.clone(),
        depth: ps.depth,
        proposal_index: p.index,
        mu: p.mu,
        eta: p.eta,
        box3d: p.box3d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{DiffusionSchedule, NormalisationSpec};
    use crate::eval::annotations::{Box2D, ImageRecord, PinholeK};
    use crate::eval::synthetic::tight_box;
    use nalgebra::{Matrix3, Rotation3, Vector3};

    fn two_view_set() -> AnnotationSet {
        let k = PinholeK {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
        };
        // Second camera one metre to the right, turned slightly left.
        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), -0.15).into_inner();
        let mut pose = [[0.0; 4]; 4];
        for i in 0..3 {
            for j in 0..3 {
                pose[i][j] = r[(i, j)];
            }
        }
        pose[0][3] = 1.0;
        pose[3][3] = 1.0;
        let image = |id: &str, pose| ImageRecord {
            id: id.into(),
            width: 640.0,
            height: 480.0,
            intrinsics: k,
            pose: Some(pose),
            path: None,
        };
        let identity = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let mut set = AnnotationSet {
            images: vec![image("a", identity), image("b", pose)],
            objects: vec![],
        };
        let cam = set.images[0].camera();
        let b = Box3D::from_pose(
            &Point3::new(0.3, 0.1, 5.0),
            [0.8, 0.6, 1.0],
            &Matrix3::identity(),
            &cam,
        )
        .unwrap();
        let box2d: Box2D = tight_box(&b, &cam, 0.1).unwrap().unwrap();
        set.objects.push(ObjectRecord {
            id: "o".into(),
            image_id: "a".into(),
            category: "c".into(),
            box2d,
            depth: None,
            gt_box3d: PoseBox::from_box3d(&b, &cam).unwrap(),
        });
        set.validate().unwrap();
        set
    }

    #[test]
    fn other_views_see_the_moved_box() {
        let set = two_view_set();
        let b = set.gt_box(&set.objects[0]).unwrap();
        let views = project_views(&set, "a", &b).unwrap();
        assert_eq!(views.len(), 2);
        let a = views[0].corners.unwrap();
        let bv = views[1].corners.unwrap();
        // The box sits right of the first camera and roughly in front of
        // the second, so it appears further left in view b.
        let mean_u = |c: &[[f64; 2]; 8]| c.iter().map(|p| p[0]).sum::<f64>() / 8.0;
        assert!(mean_u(&bv) < mean_u(&a));
        // World point round trip through the second camera.
        let pose_b = set.images[1].pose_matrix().unwrap();
        let centre = b.centre(&set.images[0].camera());
        let in_b = rigid_inverse(&pose_b).transform_point(&centre);
        let back = pose_b.transform_point(&in_b);
        assert!((back - centre).norm() < 1e-12);
    }

    #[test]
    fn depth_keys_are_millimetres() {
        assert_eq!(depth_key(1.2344), 1234);
        assert_eq!(depth_key(1.2346), 1235);
        assert_eq!(quantised_depth(2.0004), 2.0);
    }

    #[test]
    fn oracle_proposals_and_replay() {
        let set = two_view_set();
        let spec = NormalisationSpec::new(640.0, 480.0, 15.0).unwrap();
        let p = DiffusionPipeline::oracle(&set, 0.5, DiffusionSchedule::default(), spec).unwrap();
        let key = ProposalKey {
            object_index: 0,
            depth_mm: depth_key(5.0),
            seed: 3,
            n_eval: 4,
            steps: 2,
        };
        let ps = proposals_at_depth(&set, &p, &key).unwrap();
        assert_eq!(ps.proposals.len(), 4);
        let gt = project_views(&set, "a", &set.gt_box(&set.objects[0]).unwrap()).unwrap();
        for (v, g) in ps.proposals[ps.selected].projections.iter().zip(&gt) {
            for (x, y) in v.corners.unwrap().iter().zip(g.corners.unwrap().iter()) {
                assert!((x[0] - y[0]).abs() < 1e-6 && (x[1] - y[1]).abs() < 1e-6);
            }
        }
        let log = [
            Selection {
                key,
                proposal_index: 1,
            },
            Selection {
                key,
                proposal_index: 2,
            },
        ];
        let labels = replay(&set, &p, &log).unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].proposal_index, 2);
        let bad = [Selection {
            key,
            proposal_index: 9,
        }];
        assert!(replay(&set, &p, &bad).is_err());
    }
}
