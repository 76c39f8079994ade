use super::*;
use crate::synth::SynthConfig;

const MINIMAL: &str = r#"{"sequences":[{"name":"s","height":2,"width":2,"num_frames":1,"frames":[]}]}"#;

fn det_file(det: &str) -> String {
    format!(r#"{{"sequences":[{{"name":"s","height":2,"width":2,"num_frames":3,"frames":[{{"index":0,"detections":[{det}]}}]}}]}}"#)
}

const DET: &str = r#"{"box":[0,0,1,1],"score":0.9,"app_emb":[1,0],"cls_emb":[0,1],"mask":{"size":[2,2],"counts":[0,1,3]}}"#;

#[test]
fn minimal_empty_sequence() {
    let l = parse_detections(MINIMAL, Strictness::Strict).unwrap();
    assert_eq!(l.value.len(), 1);
    assert!(l.value[0].detections().is_empty());
    assert!(l.warnings.is_empty());
}

#[test]
fn detection_fields() {
    let l = parse_detections(&det_file(DET), Strictness::Strict).unwrap();
    let d = &l.value[0].detections()[0];
    assert_eq!(d.objectness, 0.9);
    assert_eq!(d.mask.as_ref().unwrap().area(), 1);
    assert_eq!(d.app_emb, vec![1.0, 0.0]);
}

#[test]
fn short_box_reports_path() {
    let bad = det_file(&DET.replace("[0,0,1,1]", "[0,0,1]"));
    let err = parse_detections(&bad, Strictness::Strict).unwrap_err().to_string();
    assert!(err.contains("sequences[0].frames[0].detections[0].box: expected 4 numbers"), "{err}");
}

#[test]
fn truncated_file() {
    let err = parse_detections(&MINIMAL[..40], Strictness::Strict).unwrap_err();
    assert!(matches!(err, FormatError::Syntax { .. }));
}

#[test]
fn unknown_fields_strict_and_lax() {
    let text = det_file(&DET.replace("\"score\"", "\"extra\":1,\"score\""));
    let err = parse_detections(&text, Strictness::Strict).unwrap_err().to_string();
    assert!(err.contains("extra"), "{err}");
    let l = parse_detections(&text, Strictness::Lax).unwrap();
    assert_eq!(l.warnings.len(), 1);
    assert_eq!(l.warnings[0], "sequences[0].frames[0].detections[0].extra: unknown field");
}

#[test]
fn semantic_errors_with_paths() {
    let text = det_file(&DET.replace("0.9", "1.5"));
    let err = parse_detections(&text, Strictness::Strict).unwrap_err().to_string();
    assert!(err.contains("sequences[0].frames[0].detections[0]: objectness out of range"), "{err}");

    let text = det_file(&DET.replace("[0,1,3]", "[0,1,2]"));
    assert!(parse_detections(&text, Strictness::Strict).is_err());

    let two = r#"{"sequences":[{"name":"s","height":2,"width":2,"num_frames":3,"frames":[{"index":1,"detections":[]},{"index":1,"detections":[]}]}]}"#;
    let err = parse_detections(two, Strictness::Strict).unwrap_err().to_string();
    assert!(err.contains("frames[1].index"), "{err}");
}

#[test]
fn tracks_validation() {
    let ok = r#"{"sequences":[{"name":"s","height":2,"width":2,"num_frames":3,"tracks":[{"track_id":1,"category_id":4,"observations":[{"frame":0,"box":[0,0,1,1]},{"frame":2,"box":[0,0,2,2],"mask":{"size":[2,2],"counts":[0,4]}}]}]}]}"#;
    let l = parse_tracks(ok, Strictness::Strict).unwrap();
    assert_eq!(l.value[0].tracks[0].observations.len(), 2);
    let back = tracks_to_string(&l.value);
    assert_eq!(tracks_to_string(&parse_tracks(&back, Strictness::Strict).unwrap().value), back);

    let unordered = ok.replace("\"frame\":2", "\"frame\":0");
    let err = parse_tracks(&unordered, Strictness::Strict).unwrap_err().to_string();
    assert!(err.contains("tracks[0].observations[1].frame"), "{err}");
    let wrong_size = ok.replace("\"size\":[2,2]", "\"size\":[1,4]");
    assert!(parse_tracks(&wrong_size, Strictness::Strict).is_err());
}

#[test]
fn bank_round_trip_and_errors() {
    let text = r#"{"categories":[{"id":2,"name":"b","split":"uncommon"},{"id":1,"name":"a","split":"common","prototype":[0.6,0.8]}]}"#;
    let bank = parse_bank(text, Strictness::Strict).unwrap().value;
    assert_eq!(bank.len(), 2);
    let s = bank_to_string(&bank);
    assert!(s.starts_with(r#"{"categories":[{"id":1,"#));
    assert_eq!(bank_to_string(&parse_bank(&s, Strictness::Strict).unwrap().value), s);

    let dup = text.replace("\"id\":2", "\"id\":1");
    assert!(parse_bank(&dup, Strictness::Strict).unwrap_err().to_string().contains("categories[1]"));
    let bad_split = text.replace("uncommon", "rare");
    assert!(parse_bank(&bad_split, Strictness::Strict).unwrap_err().to_string().contains("categories[0].split"));
}

#[test]
fn synth_save_load_save_is_byte_stable() {
    let cfg = SynthConfig { num_frames: 8, p_drop: 0.2, p_fp: 0.5, box_jitter_sigma: 2.0, app_noise_sigma: 0.1, cls_noise_sigma: 0.1, ..SynthConfig::default() };
    let files = synth_files(&cfg).unwrap();
    assert_eq!(files, synth_files(&cfg).unwrap());

    let dets = parse_detections(&files.detections, Strictness::Strict).unwrap().value;
    assert_eq!(detections_to_string(&dets), files.detections);
    let gt = parse_tracks(&files.gt, Strictness::Strict).unwrap().value;
    assert_eq!(tracks_to_string(&gt), files.gt);
    let bank = parse_bank(&files.bank, Strictness::Strict).unwrap().value;
    assert_eq!(bank_to_string(&bank), files.bank);

    // loaded values match the generator's in-memory output exactly
    let data = crate::synth::generate(&cfg).unwrap();
    assert_eq!(dets[0].detections(), data.detections.detections());
    assert_eq!(gt[0], data.gt);
}

#[test]
fn file_kind_parse() {
    assert_eq!("bank".parse::<FileKind>().unwrap(), FileKind::Bank);
    assert!("x".parse::<FileKind>().is_err());
    assert!(validate_text(FileKind::Detections, MINIMAL, Strictness::Strict).unwrap().is_empty());
    assert!(validate_text(FileKind::Tracks, MINIMAL, Strictness::Strict).is_err());
}
