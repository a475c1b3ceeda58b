use std::fs::File;
use std::io::{BufReader, BufWriter};

use apfbm::fbm::FbmEnsemble;
use apfbm::{sample_replicates, HurstIndex, TimeGrid, TwoSidedSetup};

#[test]
fn binary_ensemble_roundtrip() {
    let h = HurstIndex::new(0.7).unwrap();
    let grid = TimeGrid::covering(-1.0, 2.0, 0.01).unwrap();
    let ens = sample_replicates::<f64>(grid, h, 2, 4..7, 21, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noise.bin");
    ens.write_binary(BufWriter::new(File::create(&path).unwrap())).unwrap();
    let back = FbmEnsemble::<f64>::read_binary(BufReader::new(File::open(&path).unwrap())).unwrap();
    assert_eq!(back.grid, ens.grid);
    assert_eq!(back.replicate_count, 3);
    for r in 0..3 {
        assert_eq!(back.replicate_id(r), ens.replicate_id(r));
        for c in 0..2 {
            assert_eq!(back.path(r, c), ens.path(r, c));
        }
    }
}

#[test]
fn csv_has_one_row_per_sample() {
    let h = HurstIndex::new(0.6).unwrap();
    let grid = TimeGrid::covering(0.0, 1.0, 0.25).unwrap();
    let ens = sample_replicates::<f64>(grid, h, 1, 0..2, 3, None).unwrap();
    let mut out = Vec::new();
    ens.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 5);
}

#[test]
fn setup_json_roundtrip() {
    let setup = TwoSidedSetup { history: 6.5, ..TwoSidedSetup::new(HurstIndex::new(0.8).unwrap(), 0.05, 40.0, 7) };
    let text = serde_json::to_string(&setup).unwrap();
    let back: TwoSidedSetup = serde_json::from_str(&text).unwrap();
    assert_eq!(back, setup);
}
