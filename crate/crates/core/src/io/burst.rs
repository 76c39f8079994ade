//! Best-effort conversion of BURST annotation JSON into tracks files.
//!
//! Only the annotated-frames layout is understood: each sequence carries
//! `height`, `width`, `annotated_image_paths`, an optional `all_image_paths`,
//! `track_category_ids` (track id string to category id) and `segmentations`,
//! one object per annotated frame mapping track id strings to `{"rle": ...}` in
//! COCO compressed form. When `all_image_paths` is present, frame indices are
//! positions within it; otherwise they are positions within the annotated list.
//! Anything else that looks wrong becomes a warning and the offending entry is
//! skipped.

use std::collections::BTreeMap;

use serde_json::Value;

use super::{FormatError, Loaded};
use crate::mask::{mask_to_box, RleMask};
use crate::types::{Observation, SequenceMeta, TrackRecord, TrackSequence};

/// Decodes the COCO compressed counts string: 6-bit characters offset by 48,
/// five payload bits each, `0x20` as continuation and `0x10` as the sign of the
/// final chunk; from the third count on, values are deltas against the count two
/// places earlier.
fn decode_coco_counts(s: &str) -> Option<Vec<u32>> {
    let bytes = s.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0;
        loop {
            let c = (*bytes.get(p)? as i64) - 48;
            if !(0..64).contains(&c) || k > 12 {
                return None;
            }
            x |= (c & 0x1f) << (5 * k);
            p += 1;
            k += 1;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        counts.push(x);
    }
    counts.into_iter().map(|c| u32::try_from(c).ok()).collect()
}

#[cfg(test)]
fn encode_coco_counts(counts: &[u32]) -> String {
    let mut out = String::new();
    for i in 0..counts.len() {
        let mut x = counts[i] as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut c = x & 0x1f;
            x >>= 5;
            let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                c |= 0x20;
            }
            out.push((c as u8 + 48) as char);
            if !more {
                break;
            }
        }
    }
    out
}

fn as_usize(v: &Value) -> Option<usize> {
    v.as_u64().and_then(|x| usize::try_from(x).ok())
}

fn import_sequence(si: usize, seq: &Value, warnings: &mut Vec<String>) -> Option<TrackSequence> {
    let path = format!("sequences[{si}]");
    let warn = |w: &mut Vec<String>, msg: String| w.push(format!("{path}{msg}"));
    let (Some(height), Some(width)) = (seq.get("height").and_then(as_usize), seq.get("width").and_then(as_usize)) else {
        warn(warnings, ": missing integer height/width, sequence skipped".into());
        return None;
    };
    let name = match (seq.get("dataset").and_then(Value::as_str), seq.get("seq_name").and_then(Value::as_str)) {
        (Some(d), Some(n)) => format!("{d}/{n}"),
        (None, Some(n)) => n.to_string(),
        _ => match seq.get("id") {
            Some(id) => format!("sequence_{id}"),
            None => format!("sequence_{si}"),
        },
    };
    let annotated: Vec<&str> =
        seq.get("annotated_image_paths").and_then(Value::as_array).map(|a| a.iter().filter_map(Value::as_str).collect()).unwrap_or_default();
    let all: Option<Vec<&str>> = seq.get("all_image_paths").and_then(Value::as_array).map(|a| a.iter().filter_map(Value::as_str).collect());
    let Some(segs) = seq.get("segmentations").and_then(Value::as_array) else {
        warn(warnings, ": missing segmentations array, sequence skipped".into());
        return None;
    };
    let frame_index = |i: usize| -> usize {
        match (&all, annotated.get(i)) {
            (Some(all), Some(p)) => all.iter().position(|q| q == p).unwrap_or(i),
            _ => i,
        }
    };
    let num_frames = all.as_ref().map_or(0, Vec::len).max(annotated.len()).max(segs.len());
    let categories = seq.get("track_category_ids").and_then(Value::as_object);

    let mut tracks: BTreeMap<u64, Vec<Observation>> = BTreeMap::new();
    for (fi, seg) in segs.iter().enumerate() {
        let Some(entries) = seg.as_object() else {
            warn(warnings, format!(".segmentations[{fi}]: not an object, frame skipped"));
            continue;
        };
        let frame = frame_index(fi);
        for (tid, ann) in entries {
            let at = format!(".segmentations[{fi}].{tid}");
            let Ok(id) = tid.parse::<u64>() else {
                warn(warnings, format!("{at}: track id is not an integer, skipped"));
                continue;
            };
            let Some(counts) = ann.get("rle").and_then(Value::as_str).and_then(decode_coco_counts) else {
                warn(warnings, format!("{at}.rle: missing or undecodable, skipped"));
                continue;
            };
            let mask = match RleMask::from_counts(height, width, counts) {
                Ok(m) => m,
                Err(e) => {
                    warn(warnings, format!("{at}.rle: {e}, skipped"));
                    continue;
                }
            };
            let obs = tracks.entry(id).or_default();
            if obs.last().is_some_and(|o| o.frame >= frame) {
                warn(warnings, format!("{at}: frame {frame} out of order for track {id}, skipped"));
                continue;
            }
            obs.push(Observation { frame, bbox: mask_to_box(&mask), mask: Some(mask) });
        }
    }
    let tracks = tracks
        .into_iter()
        .map(|(id, observations)| {
            let category_id = categories.and_then(|c| c.get(&id.to_string())).and_then(Value::as_u64);
            if category_id.is_none() {
                warnings.push(format!("{path}.track_category_ids: no category for track {id}"));
            }
            TrackRecord { track_id: id, category_id, score: None, observations }
        })
        .collect();
    Some(TrackSequence { meta: SequenceMeta { name, height, width, num_frames: num_frames.max(1) }, tracks })
}

/// Converts BURST annotations. Only unparseable JSON or a missing top-level
/// `sequences` array is an error.
pub fn import_burst(text: &str) -> Result<Loaded<Vec<TrackSequence>>, FormatError> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| FormatError::Syntax { path: ".".into(), message: e.to_string() })?;
    let seqs = root
        .get("sequences")
        .and_then(Value::as_array)
        .ok_or_else(|| FormatError::Schema(vec!["sequences: expected an array".into()]))?;
    let mut warnings = Vec::new();
    let value = seqs.iter().enumerate().filter_map(|(i, s)| import_sequence(i, s, &mut warnings)).collect();
    Ok(Loaded { value, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{rle_encode, Bitmap};
    use crate::types::BBox;
    use serde_json::json;

    #[test]
    fn coco_counts_known_string() {
        // pycocotools encodes the 2x2 mask with only (1,1) set as counts [3, 1]
        assert_eq!(encode_coco_counts(&[3, 1]), "31");
        assert_eq!(decode_coco_counts("31"), Some(vec![3, 1]));
        assert_eq!(decode_coco_counts(""), Some(vec![]));
        assert_eq!(decode_coco_counts("\x7f"), None);
    }

    #[test]
    fn coco_counts_round_trip() {
        let cases: Vec<Vec<u32>> =
            vec![vec![0, 9], vec![100, 5, 3, 200], vec![7, 40, 2, 40, 1, 1, 1000, 3], vec![0, 1, 0xFFFF, 2, 1, 70000]];
        for c in cases {
            assert_eq!(decode_coco_counts(&encode_coco_counts(&c)), Some(c));
        }
    }

    #[test]
    fn imports_annotated_frames() {
        let mut bm = Bitmap::new(4, 5);
        bm.set(1, 2, true);
        bm.set(2, 2, true);
        let rle = encode_coco_counts(rle_encode(&bm).counts());
        let text = json!({
            "sequences": [{
                "dataset": "YFCC100M", "seq_name": "v1", "height": 4, "width": 5,
                "all_image_paths": ["a", "b", "c"],
                "annotated_image_paths": ["a", "c"],
                "track_category_ids": {"3": 12},
                "segmentations": [{"3": {"rle": rle, "is_gt": true}}, {"3": {"rle": "??"}, "x": {}}]
            }, {"width": 2}]
        })
        .to_string();
        let out = import_burst(&text).unwrap();
        assert_eq!(out.value.len(), 1);
        let s = &out.value[0];
        assert_eq!(s.meta.name, "YFCC100M/v1");
        assert_eq!(s.meta.num_frames, 3);
        assert_eq!(s.tracks.len(), 1);
        assert_eq!(s.tracks[0].category_id, Some(12));
        assert_eq!(s.tracks[0].observations[0].frame, 0);
        assert_eq!(s.tracks[0].observations[0].bbox, BBox::new(2.0, 1.0, 1.0, 2.0));
        assert_eq!(out.warnings.len(), 3, "{:?}", out.warnings);
    }

    #[test]
    fn rejects_non_json() {
        assert!(import_burst("{").is_err());
        assert!(import_burst("{}").is_err());
    }
}
