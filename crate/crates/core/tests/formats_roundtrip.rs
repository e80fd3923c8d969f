//! On-disk format round trips and corruption handling.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use hemiscan_core::formats::{
    read_hbv, read_manifest, write_hbv, write_manifest, write_pgm, Checkpoint, ManifestEntry,
};
use hemiscan_core::nn::{Adam, AdamConfig, Param};
use hemiscan_core::pipeline::{Hemisphere, Location, Region, ScanLabel, Side, Timepoint};
use hemiscan_core::{Result, Tensor};

#[test]
fn hbv_roundtrip_and_header() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("v.hbv");
    let voxels: Vec<f32> = (0..2 * 3 * 4).map(|i| i as f32 * 0.5 - 3.0).collect();
    write_hbv(&path, 2, 3, 4, &voxels)?;

    let bytes = fs::read(&path)?;
    assert_eq!(&bytes[..4], b"HBV1");
    assert_eq!(bytes.len(), 4 + 12 + voxels.len() * 4);
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().expect("u32")), 2);

    let (s, h, w, back) = read_hbv(&path)?;
    assert_eq!((s, h, w), (2, 3, 4));
    assert_eq!(back, voxels);

    // truncated payload is rejected
    fs::write(&path, &bytes[..bytes.len() - 1])?;
    assert!(read_hbv(&path).is_err());
    // wrong magic is rejected
    let mut bad = bytes.clone();
    bad[0] = b'X';
    fs::write(&path, &bad)?;
    assert!(read_hbv(&path).is_err());
    Ok(())
}

#[test]
fn checkpoint_roundtrip_with_adam_state() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("m.ckpt");

    // realistic Adam state: run a few steps first
    let mut adam = Adam::new(AdamConfig::default());
    let mut p = Param::new(Tensor::from_vec(&[2, 2], vec![0.1, -0.2, 0.3, 0.4])?);
    for step in 0..3 {
        for (i, g) in p.grad.data_mut().iter_mut().enumerate() {
            *g = 0.01 * (step + i) as f32;
        }
        adam.step(1e-3, &mut [("layer.w".into(), &mut p)])?;
    }

    let mut params = BTreeMap::new();
    params.insert("layer.w".to_string(), p.value.clone());
    params.insert("layer.b".to_string(), Tensor::from_vec(&[2], vec![1.0, -1.0])?);
    let ckpt = Checkpoint {
        stage: "stage1".into(),
        epoch: 7,
        params,
        adam: Some(Checkpoint::from_adam(&adam)),
    };
    ckpt.save(&path)?;

    let back = Checkpoint::load(&path)?;
    assert_eq!(back.stage, "stage1");
    assert_eq!(back.epoch, 7);
    assert_eq!(back.params.len(), 2);
    assert_eq!(back.params["layer.w"].data(), p.value.data());
    let snap = back.adam.expect("adam state saved");
    assert_eq!(snap.step_count, 3);
    let restored = Checkpoint::restore_adam(&snap);
    assert_eq!(restored.slots["layer.w"], adam.slots["layer.w"]);

    // identical save is byte-identical
    let path2 = dir.path().join("m2.ckpt");
    ckpt.save(&path2)?;
    assert_eq!(fs::read(&path)?, fs::read(&path2)?);

    // corrupted magic is rejected
    let mut bytes = fs::read(&path)?;
    bytes[0] = b'Z';
    fs::write(&path, &bytes)?;
    assert!(Checkpoint::load(&path).is_err());
    Ok(())
}

#[test]
fn manifest_roundtrip_and_validation() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("manifest.json");
    let mut locations = BTreeSet::new();
    locations.insert(Location {
        region: Region::Mca,
        side: Hemisphere::Left,
    });
    let entries = vec![
        ManifestEntry {
            scan_id: "p0000_b".into(),
            patient_id: "p0000".into(),
            timepoint: Timepoint::Baseline,
            file: "volumes/p0000_b.hbv".into(),
            label: ScanLabel {
                presence: true,
                side: Side::Left,
                locations,
                size_grade: 3,
                background: BTreeSet::new(),
            },
        },
        ManifestEntry {
            scan_id: "p0001_b".into(),
            patient_id: "p0001".into(),
            timepoint: Timepoint::Baseline,
            file: "volumes/p0001_b.hbv".into(),
            label: ScanLabel::negative(BTreeSet::new()),
        },
    ];
    write_manifest(&path, &entries)?;
    assert_eq!(read_manifest(&path)?, entries);

    // inconsistent labels are rejected on read
    let text = fs::read_to_string(&path)?.replace("\"size_grade\": 3", "\"size_grade\": 0");
    fs::write(&path, text)?;
    assert!(read_manifest(&path).is_err());

    // unknown keys are rejected
    fs::write(&path, r#"[{"scan_id":"x","bogus":1}]"#)?;
    assert!(read_manifest(&path).is_err());
    Ok(())
}

#[test]
fn pgm_is_valid_p5() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("s.pgm");
    let data: Vec<f32> = (0..12).map(|i| i as f32).collect();
    write_pgm(&path, 4, 3, &data)?;
    let bytes = fs::read(&path)?;
    let header = b"P5\n4 3\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 12);
    assert_eq!(bytes[header.len()], 0); // min maps to 0
    assert_eq!(*bytes.last().expect("payload"), 255); // max maps to 255
    Ok(())
}
