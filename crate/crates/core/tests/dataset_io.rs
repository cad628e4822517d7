use vocovar::io::{
    format_dataset, load_dataset, parse_dataset, save_dataset, simulate_scenario, ScenarioSpec, TrajectoryKind,
};
use vocovar::liegroup::boxminus;
use vocovar::Error;

#[test]
fn simulated_dataset_survives_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.vds");
    let (ds, _) = simulate_scenario(&ScenarioSpec::new(TrajectoryKind::Arc, 6, 1)).unwrap();
    save_dataset(&ds, &path).unwrap();
    let back = load_dataset(&path).unwrap();

    assert_eq!(back.intrinsics, ds.intrinsics);
    assert_eq!(back.meta, ds.meta);
    assert_eq!(back.measurements, ds.measurements);
    assert_eq!(back.keyframes.len(), ds.keyframes.len());
    for (a, b) in back.keyframes.iter().zip(&ds.keyframes) {
        assert_eq!(a.samples, b.samples);
        assert!(boxminus(&a.pose, &b.pose).norm() < 1e-14);
    }
    // Formatting is a fixed point after one round trip.
    let text = format_dataset(&back);
    assert_eq!(format_dataset(&parse_dataset(&text).unwrap()), text);
}

#[test]
fn errors_carry_path_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.vds");
    std::fs::write(&path, "vocovar-dataset v1\nK 320 320 320 240 640 480\nF 0 1 0 0 0 0 0 0\nS 0 10 10 abc\n").unwrap();
    match load_dataset(&path) {
        Err(e @ Error::Parse { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains("bad.vds"), "{msg}");
            assert!(msg.contains(":4"), "{msg}");
            assert_eq!(e.exit_code(), 3);
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_dataset("/nonexistent/dir/file.vds").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert_eq!(err.exit_code(), 5);
}

#[test]
fn malformed_records_are_rejected() {
    let base =
        "vocovar-dataset v1\nK 320 320 320 240 640 480\nF 0 1 0 0 0 0 0 0\nS 0 300 200 0.25\nF 1 1 0 0 0 0.1 0 0\n";
    for (extra, line) in [
        ("M 0 1 5 1 1\n", 6),       // sample index out of range
        ("M 0 0 0 1 1\n", 6),       // self-edge
        ("M 0 1 0 1 1 1 2 1\n", 6), // sigma not positive definite
        ("M 0 1 0 1 1 1 0\n", 6),   // wrong sigma arity
        ("S 0 1 1 -0.5\n", 6),      // negative inverse depth
        ("F 3 1 0 0 0 0 0 0\n", 6), // id out of sequence
        ("F 2 0 0 0 0 0 0 0\n", 6), // zero quaternion
        ("Q 1 2 3\n", 6),           // unknown record
        ("K 1 1 1 1 1 1\n", 6),     // duplicate intrinsics
    ] {
        match parse_dataset(&format!("{base}{extra}")) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{extra}"),
            other => panic!("{extra}: expected a parse error, got {other:?}"),
        }
    }
    assert!(parse_dataset("").is_err());
    assert!(parse_dataset("vocovar-dataset v2\n").unwrap_err().to_string().contains("v2"));
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let text = "\nvocovar-dataset v1\n\n# source hand-written\n# pixel_scale 0.5\nK 320 320 320 240 640 480\n# a remark\nF 0 1 0 0 0 0 0 0\n";
    let ds = parse_dataset(text).unwrap();
    assert_eq!(ds.meta.source, "hand-written");
    assert_eq!(ds.meta.pixel_scale, 0.5);
    assert_eq!(ds.keyframes.len(), 1);
}
