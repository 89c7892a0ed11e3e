//! JSON bodies of the obfuscation service.

use serde::{Deserialize, Serialize};

use super::layers::Algorithm;
use super::record::ZoneKeyRecord;
use super::{LayerSpec, ObfuscateError, ZoneSpec};
use crate::raster::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coordinates {
    pub start_x: u32,
    pub start_y: u32,
    pub end_x: u32,
    pub end_y: u32,
}

impl From<Rect> for Coordinates {
    fn from(r: Rect) -> Self {
        Self {
            start_x: r.start_x,
            start_y: r.start_y,
            end_x: r.end_x,
            end_y: r.end_y,
        }
    }
}

impl From<Coordinates> for Rect {
    fn from(c: Coordinates) -> Self {
        Rect::new(c.start_x, c.start_y, c.end_x, c.end_y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestLayer {
    pub algorithm_id: u8,
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestZone {
    pub id: u32,
    pub coordinates: Coordinates,
    pub layers: Vec<RequestLayer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObfuscationRequest {
    pub zones: Vec<RequestZone>,
}

impl ObfuscationRequest {
    pub fn from_specs(zones: &[ZoneSpec]) -> Self {
        Self {
            zones: zones
                .iter()
                .map(|z| RequestZone {
                    id: z.id,
                    coordinates: z.rect.into(),
                    layers: z
                        .layers
                        .iter()
                        .map(|l| RequestLayer {
                            algorithm_id: l.algorithm.id(),
                            key: String::from_utf8_lossy(&l.key_material).into_owned(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_specs(&self) -> Result<Vec<ZoneSpec>, ObfuscateError> {
        self.zones
            .iter()
            .map(|z| {
                let layers = z
                    .layers
                    .iter()
                    .map(|l| {
                        Ok(LayerSpec::new(
                            Algorithm::try_from(l.algorithm_id)?,
                            l.key.as_bytes().to_vec(),
                        ))
                    })
                    .collect::<Result<Vec<_>, ObfuscateError>>()?;
                Ok(ZoneSpec::new(z.id, z.coordinates.into(), layers))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseZone {
    pub id: u32,
    pub coordinates: Coordinates,
    #[serde(rename = "obfuscationKey")]
    pub obfuscation_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObfuscationResponse {
    pub document_id: String,
    pub zones: Vec<ResponseZone>,
}

/// One zone to restore; coordinates travel inside the key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeobfuscationZone {
    pub id: u32,
    #[serde(rename = "obfuscationKey")]
    pub obfuscation_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeobfuscationRequest {
    pub zones: Vec<DeobfuscationZone>,
}

impl DeobfuscationRequest {
    pub fn from_records(records: &[ZoneKeyRecord]) -> Self {
        Self {
            zones: records
                .iter()
                .map(|r| DeobfuscationZone {
                    id: r.zone_id,
                    obfuscation_key: r.token(),
                })
                .collect(),
        }
    }

    /// Decodes every key and checks it belongs to the zone id it is listed under.
    pub fn to_records(&self) -> Result<Vec<ZoneKeyRecord>, ObfuscateError> {
        self.zones
            .iter()
            .map(|z| {
                let rec = ZoneKeyRecord::from_token(&z.obfuscation_key)?;
                if rec.zone_id != z.id {
                    return Err(ObfuscateError::MalformedKey(format!(
                        "key for zone {} listed under zone {}",
                        rec.zone_id, z.id
                    )));
                }
                Ok(rec)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = r#"{
        "zones": [
            {
                "id": 1,
                "coordinates": {"start_x": 1427, "start_y": 792, "end_x": 2254, "end_y": 924},
                "layers": [{"algorithm_id": 1, "key": "MY_SECRET_KEY"}]
            }
        ]
    }"#;

    #[test]
    fn parses_listing_request() {
        let req: ObfuscationRequest = serde_json::from_str(LISTING).unwrap();
        let specs = req.to_specs().unwrap();
        assert_eq!(specs[0].rect, Rect::new(1427, 792, 2254, 924));
        assert_eq!(specs[0].layers[0].algorithm, Algorithm::AesCbc);
        assert_eq!(specs[0].layers[0].key_material, b"MY_SECRET_KEY");
        assert_eq!(ObfuscationRequest::from_specs(&specs), req);
    }

    #[test]
    fn unknown_algorithm_rejected() {
        let bad = LISTING.replace("\"algorithm_id\": 1", "\"algorithm_id\": 4");
        let req: ObfuscationRequest = serde_json::from_str(&bad).unwrap();
        assert!(req.to_specs().is_err());
    }

    #[test]
    fn response_uses_camel_case_key() {
        let z = ResponseZone {
            id: 1,
            coordinates: Rect::new(0, 0, 1, 1).into(),
            obfuscation_key: "abc".into(),
        };
        let v = serde_json::to_value(&z).unwrap();
        assert!(v.get("obfuscationKey").is_some());
    }
}
