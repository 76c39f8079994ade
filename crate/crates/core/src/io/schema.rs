//! Serde mirrors of the interchange files. Conversion to domain types happens in
//! the parent module, after parsing, so validation messages can carry paths.

use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::FormatError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BoxJson(pub [f64; 4]);

impl Serialize for BoxJson {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoxJson {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let arr: [f64; 4] =
            v.as_slice().try_into().map_err(|_| D::Error::custom(format!("expected 4 numbers, found {}", v.len())))?;
        Ok(BoxJson(arr))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RleJson {
    pub size: [usize; 2],
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct DetectionJson {
    #[serde(rename = "box")]
    pub bbox: BoxJson,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleJson>,
    pub app_emb: Vec<f64>,
    pub cls_emb: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct FrameJson {
    pub index: usize,
    pub detections: Vec<DetectionJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct DetSequenceJson {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub num_frames: usize,
    pub frames: Vec<FrameJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct DetectionsJson {
    pub sequences: Vec<DetSequenceJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ObservationJson {
    pub frame: usize,
    #[serde(rename = "box")]
    pub bbox: BoxJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct TrackJson {
    pub track_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub observations: Vec<ObservationJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct TrackSequenceJson {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub num_frames: usize,
    pub tracks: Vec<TrackJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct TracksJson {
    pub sequences: Vec<TrackSequenceJson>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub(crate) enum SplitJson {
    Common,
    Uncommon,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct CategoryJson {
    pub id: u64,
    pub name: String,
    pub split: SplitJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototype: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct BankJson {
    pub categories: Vec<CategoryJson>,
}

/// Renders an ignored-field path the way `serde_path_to_error` does: `a[0].b`.
fn json_path(path: &serde_ignored::Path) -> String {
    use serde_ignored::Path;
    match path {
        Path::Root => String::new(),
        Path::Seq { parent, index } => format!("{}[{index}]", json_path(parent)),
        Path::Map { parent, key } => {
            let p = json_path(parent);
            if p.is_empty() {
                key.clone()
            } else {
                format!("{p}.{key}")
            }
        }
        Path::Some { parent } | Path::NewtypeStruct { parent } | Path::NewtypeVariant { parent } => json_path(parent),
    }
}

/// Parses `text`, reporting errors with their JSON path and collecting the paths
/// of fields the schema does not know.
pub(crate) fn parse<T: DeserializeOwned>(text: &str) -> Result<(T, Vec<String>), FormatError> {
    let mut unknown = Vec::new();
    let mut track = serde_path_to_error::Track::new();
    let mut json = serde_json::Deserializer::from_str(text);
    let result = {
        let de = serde_path_to_error::Deserializer::new(&mut json, &mut track);
        serde_ignored::deserialize(de, |path| unknown.push(json_path(&path)))
    };
    let value = result.map_err(|e| FormatError::Syntax { path: track.path().to_string(), message: e.to_string() })?;
    json.end().map_err(|e| FormatError::Syntax { path: ".".into(), message: e.to_string() })?;
    Ok((value, unknown))
}
