use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::nn::KdIndex;
use super::{GeometryError, RigidTransform, UnitQuat, Vec3};

/// Nonempty ordered set of finite points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec3>", into = "Vec<Vec3>")]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self.points.iter().fold(Vec3::ZERO, |acc, p| acc + *p);
        sum / self.points.len() as f64
    }

    pub fn translated(&self, t: Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| *p + t).collect(),
        }
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let first = self.points[0];
        self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.min_by_component(*p), hi.max_by_component(*p))
        })
    }

    /// Distance from `q` to the closest point of the cloud.
    pub fn distance_to(&self, q: Vec3) -> f64 {
        self.points
            .iter()
            .map(|p| p.distance(q))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest distance from the centroid to a point.
    pub fn radius(&self) -> f64 {
        let c = self.centroid();
        self.points
            .iter()
            .map(|p| p.distance(c))
            .fold(0.0, f64::max)
    }

    pub fn as_arrays(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| p.to_array()).collect()
    }
}

impl TryFrom<Vec<Vec3>> for PointCloud {
    type Error = GeometryError;
    fn try_from(points: Vec<Vec3>) -> Result<Self, GeometryError> {
        PointCloud::new(points)
    }
}

impl From<PointCloud> for Vec<Vec3> {
    fn from(c: PointCloud) -> Self {
        c.points
    }
}

pub fn apply_transform(t: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply(*p)).collect(),
    }
}

/// Symmetric chamfer distance: the average of the two directional mean
/// nearest-neighbour distances.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64, GeometryError> {
    chamfer_arrays(&a.as_arrays(), &b.as_arrays())
}

/// Chamfer distance over points with optional extra channels beyond xyz.
pub fn chamfer_arrays<const D: usize>(
    a: &[[f64; D]],
    b: &[[f64; D]],
) -> Result<f64, GeometryError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    Ok(0.5 * (mean_nearest(a, b) + mean_nearest(b, a)))
}

fn mean_nearest<const D: usize>(from: &[[f64; D]], to: &[[f64; D]]) -> f64 {
    let index = KdIndex::new(to);
    let sum: f64 = from.iter().map(|p| index.nearest(p).1.sqrt()).sum();
    sum / from.len() as f64
}

/// For each source point, the index of its nearest target point.
pub fn nearest_indices(source: &[Vec3], target: &PointCloud) -> Vec<usize> {
    let arrays = target.as_arrays();
    let index = KdIndex::new(&arrays);
    source
        .iter()
        .map(|p| index.nearest(&p.to_array()).0)
        .collect()
}

/// Population covariance of the cloud about its centroid.
pub fn covariance(cloud: &PointCloud) -> Matrix3<f64> {
    let c = cloud.centroid();
    let mut m = Matrix3::zeros();
    for p in cloud.points() {
        let d = *p - c;
        let v = nalgebra::Vector3::new(d.x, d.y, d.z);
        m += v * v.transpose();
    }
    m / cloud.len() as f64
}

/// Relative eigenvalue floor below which a principal axis counts as absent.
const RANK_TOLERANCE: f64 = 1e-10;

/// Principal axes of `cloud` as columns ordered by descending variance.
fn principal_axes(cloud: &PointCloud) -> Result<[Vec3; 3], GeometryError> {
    let eig = SymmetricEigen::new(covariance(cloud));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let largest = eig.eigenvalues[order[0]];
    let rank = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > RANK_TOLERANCE * largest.max(f64::MIN_POSITIVE))
        .count();
    if rank < 3 || largest <= 0.0 {
        return Err(GeometryError::DegenerateFrame { rank });
    }
    let col = |i: usize| {
        let v = eig.eigenvectors.column(i);
        Vec3::new(v[0], v[1], v[2])
    };
    let e0 = orient_toward(col(order[0]), 0);
    let e1 = orient_toward(col(order[1]), 1);
    // the third axis completes a right-handed frame
    let e2 = e0.cross(e1);
    Ok([e0, e1, e2])
}

/// Flips `axis` so its dot product with world axis `index` is nonnegative.
/// On an exact tie the first nonzero component is made positive.
fn orient_toward(axis: Vec3, index: usize) -> Vec3 {
    let d = axis.component(index);
    if d < 0.0 {
        return -axis;
    }
    if d == 0.0 {
        for k in 0..3 {
            let c = axis.component(k);
            if c != 0.0 {
                return if c < 0.0 { -axis } else { axis };
            }
        }
    }
    axis
}

/// Transform taking `cloud` into its principal frame: origin at the
/// centroid, axes along the covariance eigenvectors in descending order.
pub fn principal_frame(cloud: &PointCloud) -> Result<RigidTransform, GeometryError> {
    let [e0, e1, e2] = principal_axes(cloud)?;
    // rows of the world->frame rotation are the axes
    let m = [e0.to_array(), e1.to_array(), e2.to_array()];
    let rotation = UnitQuat::from_matrix(m).ok_or(GeometryError::DegenerateFrame { rank: 3 })?;
    let c = cloud.centroid();
    Ok(RigidTransform::new(rotation, -rotation.rotate(c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(v: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(v.iter().map(|a| Vec3::from(*a)).collect()).unwrap()
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert_eq!(PointCloud::new(vec![]), Err(GeometryError::EmptyCloud));
        assert_eq!(
            chamfer_arrays::<3>(&[], &[[0.0; 3]]),
            Err(GeometryError::EmptyCloud)
        );
    }

    #[test]
    fn chamfer_unit_offset() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn translation_only_apply() {
        let t = RigidTransform::from_translation(Vec3::new(1.0, 2.0, 3.0));
        let out = apply_transform(&t, &cloud(&[[0.0, 0.0, 0.0]]));
        assert_eq!(out.points()[0], Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn segment_is_rank_one() {
        let pts: Vec<[f64; 3]> = (0..20).map(|i| [i as f64 * 0.1, 0.0, 0.0]).collect();
        assert_eq!(
            principal_frame(&cloud(&pts)),
            Err(GeometryError::DegenerateFrame { rank: 1 })
        );
    }

    #[test]
    fn planar_grid_is_rank_two() {
        let mut pts = vec![];
        for i in 0..5 {
            for j in 0..5 {
                pts.push([i as f64, j as f64 * 0.5, 1.0]);
            }
        }
        assert_eq!(
            principal_frame(&cloud(&pts)),
            Err(GeometryError::DegenerateFrame { rank: 2 })
        );
    }

    #[test]
    fn axis_aligned_box_gives_identity_rotation() {
        // corners of a 4 x 2 x 1 box centred at (1, 2, 3)
        let mut pts = vec![];
        for sx in [-2.0, 2.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-0.5, 0.5] {
                    pts.push([1.0 + sx, 2.0 + sy, 3.0 + sz]);
                }
            }
        }
        let f = principal_frame(&cloud(&pts)).unwrap();
        assert!(f.rotation.angle() < 1e-9);
        assert!(f.translation.distance(Vec3::new(-1.0, -2.0, -3.0)) < 1e-9);
    }
}
