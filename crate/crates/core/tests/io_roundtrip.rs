mod common;

use common::{hdl64_calibration, synthetic_frame};
use proptest::prelude::*;
use snowsim::calibration::{estimate_power_and_noise, GroundSample};
use snowsim::io::{assign_layers, decode_sweep, encode_sweep, read_sweep, write_sweep, LidarPoint, PointCloud, SweepFormat};
use snowsim::sensor::SensorCalibration;

fn finite() -> impl Strategy<Value = f32> {
    -500.0f32..500.0
}

fn point() -> impl Strategy<Value = LidarPoint> {
    (finite(), finite(), finite(), 0.0f32..255.0, prop::option::of(0u32..128)).prop_map(|(x, y, z, i, layer)| LidarPoint {
        layer,
        ..LidarPoint::new(x, y, z, i)
    })
}

proptest! {
    #[test]
    fn layered_payload_round_trips(points in prop::collection::vec(point(), 0..200)) {
        let bytes = encode_sweep(&points, SweepFormat::XyziLayer);
        prop_assert_eq!(bytes.len(), points.len() * 20);
        prop_assert_eq!(decode_sweep(&bytes, SweepFormat::XyziLayer).unwrap(), points.clone());
    }

    #[test]
    fn plain_payload_round_trips_bytes(points in prop::collection::vec(point(), 0..200)) {
        let bytes = encode_sweep(&points, SweepFormat::Xyzi);
        let back = decode_sweep(&bytes, SweepFormat::Xyzi).unwrap();
        prop_assert!(back.iter().all(|p| p.layer.is_none()));
        prop_assert_eq!(encode_sweep(&back, SweepFormat::Xyzi), bytes);
    }

    #[test]
    fn truncated_payloads_are_rejected(points in prop::collection::vec(point(), 1..20), cut in 1usize..16) {
        let bytes = encode_sweep(&points, SweepFormat::Xyzi);
        prop_assert!(decode_sweep(&bytes[..bytes.len() - cut], SweepFormat::Xyzi).is_err());
    }
}

#[test]
fn non_finite_records_are_rejected() {
    let bytes = encode_sweep(&[LidarPoint::new(1.0, f32::NAN, 0.0, 0.1)], SweepFormat::Xyzi);
    assert!(decode_sweep(&bytes, SweepFormat::Xyzi).is_err());
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let calib = hdl64_calibration();
    let pc = synthetic_frame(1, 3000, &calib);
    let path = dir.path().join("000042.bin");
    write_sweep(&pc, &path, SweepFormat::XyziLayer).unwrap();
    let back = read_sweep(&path, SweepFormat::XyziLayer).unwrap();
    assert_eq!(back.points, pc.points);
    assert_eq!(back.frame_id, "000042");
}

#[test]
fn layers_are_recovered_from_elevation() {
    let calib = hdl64_calibration();
    let pc = synthetic_frame(2, 20_000, &calib);
    let stripped = PointCloud::new(pc.points.iter().map(|p| LidarPoint { layer: None, ..*p }).collect());
    let assigned = assign_layers(&stripped, &calib);
    assert_eq!(assigned.points, pc.points);
    assert_eq!(assign_layers(&assigned, &calib), assigned);
    let sizes = assigned.layer_sizes(calib.n_lasers());
    assert_eq!(sizes.iter().sum::<usize>(), pc.len());
}

#[test]
fn calibration_toml_round_trips() {
    let calib = hdl64_calibration();
    let back = SensorCalibration::parse(&calib.to_toml()).unwrap();
    assert_eq!(back, calib);
    assert!(SensorCalibration::parse("format = \"other/1\"\n").is_err());
}

#[test]
fn sample_calibration_file_loads() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/hdl64_calibration.toml");
    let calib = SensorCalibration::load(path).unwrap();
    assert_eq!(calib.n_lasers(), 64);
}

#[test]
fn power_line_stays_above_noise_line() {
    // Normalized ground returns: a falling envelope with symmetric spread.
    let samples: Vec<GroundSample> = (0..2000)
        .map(|k| {
            let range = 5.0 + 0.05 * k as f64;
            let spread = ((k * 7919) % 101) as f64 / 100.0 - 0.5;
            GroundSample {
                range,
                intensity: (0.6 - 0.004 * range) * (1.0 + 0.5 * spread),
                incidence: 0.0,
            }
        })
        .collect();
    let (power, noise) = estimate_power_and_noise(&samples).unwrap();
    for r in [5.0, 30.0, 60.0, 104.0] {
        assert!(power.eval(r) > noise.eval(r), "{r}");
    }
    assert!(power.slope < 0.0);
}
