use std::path::PathBuf;

use voltreg::feeder::io::load_case;
use voltreg::{synth, Case64, Error, SensitivityPack};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn same_matrices(a: &Case64, b: &Case64) {
    let (pa, pb) = (SensitivityPack::build(&a.feeder), SensitivityPack::build(&b.feeder));
    assert_eq!(pa.dim(), pb.dim());
    for i in 0..pa.dim() {
        assert_eq!(pa.r_row(i), pb.r_row(i));
        assert_eq!(pa.x_row(i), pb.x_row(i));
    }
    assert_eq!(a.devices.len(), b.devices.len());
}

#[test]
fn line3_file_matches_builtin() {
    let case: Case64 = load_case(fixture("line3.json")).unwrap();
    same_matrices(&case, &synth::line3());
}

#[test]
fn tri2_file_matches_builtin() {
    let case: Case64 = load_case(fixture("tri2.json")).unwrap();
    assert_eq!(case.feeder.index().len(), synth::tri2().feeder.index().len());
    same_matrices(&case, &synth::tri2());
}

#[test]
fn duplicate_parent_is_rejected() {
    let err = load_case::<f64>(fixture("duplicate_parent.json")).unwrap_err();
    assert!(matches!(err, Error::Topology(_)), "{err}");
}

#[test]
fn missing_file_is_io_error() {
    let err = load_case::<f64>(fixture("absent.json")).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err}");
}
