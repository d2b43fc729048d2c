use fidreg::map_locate::{locate_markers_in_map, LocateConfig};
use fidreg::marker::{detect_in_scan, MarkerObservation, MarkerSpec, ScanDetectConfig, TagFamily};
use fidreg::simulator::presets::{upright_plane_pose, wall_scene};
use fidreg::simulator::{sample_map, MarkerPlacement, Plane, Scene};
use nalgebra::Vector3;

fn corner_error(o: &MarkerObservation, scene: &Scene) -> f64 {
    let k = scene.marker_truth().into_iter().find(|m| m.id == o.id).unwrap();
    (0..4).map(|s| (o.corners_3d[s] - Vector3::from(k.corners[s])).norm()).fold(0.0, f64::max)
}

fn single_marker(angle_deg: f64) -> Scene {
    let plane = Plane { pose: upright_plane_pose(Vector3::new(3.0, 0.0, 0.0), -Vector3::x()), width: 1.5, height: 1.5, intensity: 150.0 };
    let m = MarkerPlacement { id: 6, plane: 0, center: [0.1, 0.05], angle: angle_deg.to_radians(), side: 0.5, levels: None };
    Scene::new(vec![plane], vec![m])
}

#[test]
fn in_plane_rotation_sweep() {
    let f = TagFamily::builtin();
    let spec = MarkerSpec::new(0.5, 0.0);
    for deg in [0.0, 10.0, 20.0, 30.0, 45.0, 60.0, 80.0] {
        let scene = single_marker(deg);
        let map = sample_map(&scene, &f, 0.01, 0.0, 0.0, 3);
        let out = locate_markers_in_map(&map, &spec, &f, &LocateConfig::default());
        assert_eq!(out.observations.len(), 1, "{deg}°");
        assert_eq!(out.observations[0].id, 6);
        let e = corner_error(&out.observations[0], &scene);
        assert!(e <= 0.03, "{deg}°: corner error {e}");
    }
}

#[test]
fn noisy_maps() {
    let f = TagFamily::builtin();
    let scene = single_marker(15.0);
    for (pos_sigma, int_sigma) in [(0.002, 0.0), (0.0, 5.0)] {
        let map = sample_map(&scene, &f, 0.01, pos_sigma, int_sigma, 5);
        let mut cfg = LocateConfig::default();
        cfg.criteria.sensor_sigma = pos_sigma;
        let out = locate_markers_in_map(&map, &MarkerSpec::new(0.5, 0.0), &f, &cfg);
        assert_eq!(out.observations.iter().map(|o| o.id).collect::<Vec<_>>(), vec![6], "{pos_sigma} {int_sigma}");
        let e = corner_error(&out.observations[0], &scene);
        assert!(e <= 0.04, "{pos_sigma} {int_sigma}: corner error {e}");
    }
}

#[test]
fn far_wall_needs_the_intermediate_plane_at_range() {
    let f = TagFamily::builtin();
    let spec = MarkerSpec::new(0.5, 0.0);
    for d in [15.0, 40.0] {
        let scene = wall_scene(d, &[21], 0.5);
        let map = sample_map(&scene, &f, 0.01, 0.0, 0.0, 3);
        let direct = detect_in_scan(&map, 0, &ScanDetectConfig::default(), &f, &spec).unwrap();
        assert_eq!(direct.is_empty(), d > 30.0, "{d} m");
        let out = locate_markers_in_map(&map, &spec, &f, &LocateConfig::default());
        assert_eq!(out.observations.iter().map(|o| o.id).collect::<Vec<_>>(), vec![21], "{d} m");
    }
}

#[test]
fn markerless_map_yields_nothing() {
    let f = TagFamily::builtin();
    let scene = single_marker(0.0).without_markers();
    let map = sample_map(&scene, &f, 0.01, 0.0, 0.0, 3);
    let out = locate_markers_in_map(&map, &MarkerSpec::new(0.5, 0.0), &f, &LocateConfig::default());
    assert!(out.observations.is_empty());
}

#[test]
fn candidate_images_are_kept_on_request() {
    let f = TagFamily::builtin();
    let map = sample_map(&single_marker(0.0), &f, 0.01, 0.0, 0.0, 3);
    let cfg = LocateConfig { keep_images: true, ..LocateConfig::default() };
    let out = locate_markers_in_map(&map, &MarkerSpec::new(0.5, 0.0), &f, &cfg);
    assert!(!out.candidates.is_empty());
    assert!(out.candidates.iter().all(|c| c.image.is_some()));
    assert!(out.candidates.iter().any(|c| c.ids == vec![6]));
}
