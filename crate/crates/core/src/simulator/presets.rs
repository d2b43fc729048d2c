//! Ready-made scenes and viewpoint layouts.

use nalgebra::{Matrix3, Vector3};

use super::{look_at, MarkerPlacement, Pattern, Plane, Scene, SensorModel};
use crate::geom::{Pose, Rotation};

/// Pose of a plane centered at `center` whose front faces along the
/// horizontal `normal`, with its `y` axis pointing up.
pub fn upright_plane_pose(center: Vector3<f64>, normal: Vector3<f64>) -> Pose {
    let z = Vector3::new(normal.x, normal.y, 0.0).normalize();
    let y = Vector3::z();
    let x = y.cross(&z);
    Pose::new(Rotation::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])), center)
}

/// Wall `distance` meters ahead of the origin along `+x`, facing it, with
/// `ids` printed side by side at sensor height.
pub fn wall_scene(distance: f64, ids: &[usize], side: f64) -> Scene {
    let spacing = 2.0 * side;
    let width = (spacing * ids.len() as f64 + 2.0).max(4.0);
    let wall = Plane {
        pose: upright_plane_pose(Vector3::new(distance, 0.0, 0.0), -Vector3::x()),
        width,
        height: 3.0,
        intensity: 150.0,
    };
    let x0 = -0.5 * spacing * (ids.len() as f64 - 1.0);
    let markers = ids
        .iter()
        .enumerate()
        .map(|(k, &id)| MarkerPlacement {
            id,
            plane: 0,
            center: [x0 + k as f64 * spacing, 0.0],
            angle: 0.0,
            side,
            levels: None,
        })
        .collect();
    Scene::new(vec![wall], markers)
}

/// Box of footprint `2 × 2` m and height 1.6 m standing on the origin, one
/// `side`-sized marker centered on each vertical face (ids `0..4` for
/// `+x, +y, −x, −y`), plus an optional floor.
pub fn box_scene(side: f64, floor: bool) -> Scene {
    let (half, height) = (1.0, 1.6);
    let mut planes = Vec::new();
    let mut markers = Vec::new();
    let normals = [Vector3::x(), Vector3::y(), -Vector3::x(), -Vector3::y()];
    for (k, n) in normals.iter().enumerate() {
        planes.push(Plane {
            pose: upright_plane_pose(n * half + Vector3::new(0.0, 0.0, 0.5 * height), *n),
            width: 2.0 * half,
            height,
            intensity: 150.0,
        });
        markers.push(MarkerPlacement { id: k, plane: k, center: [0.0, 0.0], angle: 0.0, side, levels: None });
    }
    planes.push(Plane {
        pose: Pose::from_translation(Vector3::new(0.0, 0.0, height)),
        width: 2.0 * half,
        height: 2.0 * half,
        intensity: 150.0,
    });
    if floor {
        planes.push(Plane { pose: Pose::identity(), width: 12.0, height: 12.0, intensity: 60.0 });
    }
    Scene::new(planes, markers)
}

/// Square room of half-width `half` and height 3 m around the origin, one
/// `side`-sized marker centered on each wall facing inward (ids `0..4` for
/// the walls at `+x, +y, −x, −y`), plus a floor.
pub fn room_scene(half: f64, side: f64) -> Scene {
    let height = 3.0;
    let normals = [Vector3::x(), Vector3::y(), -Vector3::x(), -Vector3::y()];
    let mut planes: Vec<Plane> = normals
        .iter()
        .map(|n| Plane {
            pose: upright_plane_pose(n * half + Vector3::new(0.0, 0.0, 0.5 * height), -n),
            width: 2.0 * half,
            height,
            intensity: 150.0,
        })
        .collect();
    planes.push(Plane { pose: Pose::identity(), width: 2.0 * half, height: 2.0 * half, intensity: 60.0 });
    let markers = (0..4).map(|k| MarkerPlacement { id: k, plane: k, center: [0.0, 0.0], angle: 0.0, side, levels: None }).collect();
    Scene::new(planes, markers)
}

/// Sensors on a circle of `radius` at `height`, looking at `target`, one per
/// azimuth (degrees).
pub fn ring_viewpoints(azimuths_deg: &[f64], radius: f64, height: f64, target: Vector3<f64>) -> Vec<Pose> {
    azimuths_deg
        .iter()
        .map(|a| {
            let a = a.to_radians();
            look_at(Vector3::new(radius * a.cos(), radius * a.sin(), height), target)
        })
        .collect()
}

/// Spinning sensor with a 0.1° grid over a ±20° × ±15° window.
pub fn mechanical_sensor(seed: u64) -> SensorModel {
    SensorModel {
        pattern: Pattern::Mechanical {
            theta_h: 0.1f64.to_radians(),
            theta_v: 0.1f64.to_radians(),
            fov_h: [-20f64.to_radians(), 20f64.to_radians()],
            fov_v: [-15f64.to_radians(), 15f64.to_radians()],
        },
        range_sigma: 0.0,
        intensity_sigma: 0.0,
        max_range: 40.0,
        seed,
    }
}

/// Non-repetitive rose-pattern sensor with a ±20° field of view.
pub fn solid_state_sensor(dwell_turns: f64, seed: u64) -> SensorModel {
    SensorModel {
        pattern: Pattern::SolidState {
            half_angle: 20f64.to_radians(),
            petal_ratio: 7.0 + (5f64.sqrt() - 1.0) / 2.0,
            samples_per_turn: 20_000,
            dwell_turns,
        },
        range_sigma: 0.0,
        intensity_sigma: 0.0,
        max_range: 40.0,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marker::TagFamily;

    #[test]
    fn presets_validate() {
        let f = TagFamily::builtin();
        wall_scene(4.0, &[0, 7, 13], 0.5).validate(&f).unwrap();
        box_scene(0.5, true).validate(&f).unwrap();
        room_scene(4.0, 0.5).validate(&f).unwrap();
    }

    #[test]
    fn room_walls_face_inward() {
        let s = room_scene(4.0, 0.5);
        for p in &s.planes[..4] {
            let c = p.pose.translation;
            assert!(p.normal().dot(&Vector3::new(c.x, c.y, 0.0)) < 0.0);
        }
    }

    #[test]
    fn box_faces_point_outward() {
        let s = box_scene(0.5, false);
        for p in &s.planes[..4] {
            let c = p.pose.translation;
            assert!(p.normal().dot(&Vector3::new(c.x, c.y, 0.0)) > 0.0);
            assert!((p.pose.rotation.matrix().determinant() - 1.0).abs() < 1e-12);
        }
    }
}
