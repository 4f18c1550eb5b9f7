mod support;

use std::fs;

use ldc::teacher::{export_logits, import_logits, train_teacher, TeacherConfig, TeacherLogits};
use ldc::LdcError;

fn sample_logits() -> TeacherLogits {
    let values = (0..12).map(|i| (i as f32 - 5.5) * 0.37).collect();
    TeacherLogits::new(4, 3, values).unwrap()
}

#[test]
fn logits_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    let logits = sample_logits();
    export_logits(&logits, &path).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), 16 + 12 * 4);
    let back = import_logits(&path, Some((4, 3))).unwrap();
    let bits = |l: &TeacherLogits| l.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&logits));
    assert_eq!(import_logits(&path, None).unwrap(), logits);
}

#[test]
fn truncated_file_is_unexpected_eof() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    export_logits(&sample_logits(), &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    for cut in [3, 10, bytes.len() - 1] {
        fs::write(&path, &bytes[..cut]).unwrap();
        let err = import_logits(&path, None).unwrap_err();
        assert!(matches!(err, LdcError::UnexpectedEof), "cut {cut}: {err}");
        assert_eq!(err.to_string(), "unexpected end of file");
    }
}

#[test]
fn shape_and_header_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    export_logits(&sample_logits(), &path).unwrap();
    assert!(matches!(import_logits(&path, Some((5, 3))), Err(LdcError::CountMismatch { .. })));
    assert!(matches!(import_logits(&path, Some((4, 2))), Err(LdcError::CountMismatch { .. })));

    let mut bytes = fs::read(&path).unwrap();
    bytes.push(0);
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(import_logits(&path, None), Err(LdcError::Format(_))));

    bytes.pop();
    bytes[0] = b'X';
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(import_logits(&path, None), Err(LdcError::Format(_))));

    assert!(matches!(
        import_logits(&dir.path().join("missing.bin"), None),
        Err(LdcError::FileNotFound(_))
    ));
}

#[test]
fn teacher_learns_and_untrained_is_near_chance() {
    let (train, test) = support::splits(3);
    let untrained = TeacherConfig { epochs: 0, ..TeacherConfig::default() };
    let (model, _) = train_teacher(&untrained, &train, Some(&test)).unwrap();
    assert!(model.accuracy(&test).unwrap() < 0.6);

    let cfg = TeacherConfig { epochs: 20, batch_size: 32, ..TeacherConfig::default() };
    let (model, report) = train_teacher(&cfg, &train, Some(&test)).unwrap();
    assert_eq!(report.epoch_loss.len(), 20);
    assert!(report.epoch_loss.last() < report.epoch_loss.first());
    assert!(report.test_accuracy.unwrap() > 0.9, "{report:?}");
    let a = model.logits(&test).unwrap();
    let b = model.logits(&test).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.rows(), a.cols()), (test.len(), 3));

    let (again, _) = train_teacher(&cfg, &train, Some(&test)).unwrap();
    assert_eq!(again, model);
}
