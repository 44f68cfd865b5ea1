//! Typed judge verdicts and validation of raw judge output.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::prompt::VERDICT_KEYS;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerdictError {
    #[error("no JSON object in judge output")]
    MalformedJson,
    #[error("verdict lacks field {0}")]
    MissingField(String),
    #[error("verdict field {field} has illegal value {got}")]
    IllegalValue { field: String, got: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    pub fn is_yes(self) -> bool {
        self == YesNo::Yes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliStatus {
    Contradiction,
    Entailment,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub reason: String,
    pub gt_has_abnormalities: YesNo,
    pub gt_has_devices: YesNo,
    pub gen_has_abnormalities: YesNo,
    pub gen_has_devices: YesNo,
    pub gen_has_correct_abnormalities: YesNo,
    pub gen_has_hallucinated_abnormalities: YesNo,
    pub gen_has_correct_devices: YesNo,
    pub gen_has_hallucinated_devices: YesNo,
    pub nli_status: NliStatus,
}

/// First `{` at which a complete JSON object parses.
fn first_object(raw: &str) -> Option<Map<String, Value>> {
    raw.match_indices('{').find_map(|(i, _)| {
        let mut it = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        match it.next() {
            Some(Ok(Value::Object(m))) => Some(m),
            _ => None,
        }
    })
}

fn field<'a>(m: &'a Map<String, Value>, key: &str) -> Result<&'a Value, VerdictError> {
    m.get(key).ok_or_else(|| VerdictError::MissingField(key.to_string()))
}

fn enum_field<T: for<'de> Deserialize<'de>>(m: &Map<String, Value>, key: &str, lenient: bool) -> Result<T, VerdictError> {
    let v = field(m, key)?;
    let illegal = || VerdictError::IllegalValue { field: key.to_string(), got: v.to_string() };
    let s = v.as_str().ok_or_else(illegal)?;
    let s = if lenient { s.trim().to_lowercase() } else { s.to_string() };
    serde_json::from_value(Value::String(s)).map_err(|_| illegal())
}

/// Parses the first JSON object in `raw`. Enum values must be exact
/// lowercase strings unless `lenient`, which trims and lowercases them first.
/// Extra keys are ignored.
pub fn validate_verdict(raw: &str, lenient: bool) -> Result<JudgeVerdict, VerdictError> {
    let m = first_object(raw).ok_or(VerdictError::MalformedJson)?;
    for k in VERDICT_KEYS {
        field(&m, k)?;
    }
    let reason = field(&m, "reason")?;
    let reason = reason
        .as_str()
        .ok_or_else(|| VerdictError::IllegalValue { field: "reason".into(), got: reason.to_string() })?
        .to_string();
    let yn = |k| enum_field::<YesNo>(&m, k, lenient);
    Ok(JudgeVerdict {
        reason,
        gt_has_abnormalities: yn("gt_has_abnormalities")?,
        gt_has_devices: yn("gt_has_devices")?,
        gen_has_abnormalities: yn("gen_has_abnormalities")?,
        gen_has_devices: yn("gen_has_devices")?,
        gen_has_correct_abnormalities: yn("gen_has_correct_abnormalities")?,
        gen_has_hallucinated_abnormalities: yn("gen_has_hallucinated_abnormalities")?,
        gen_has_correct_devices: yn("gen_has_correct_devices")?,
        gen_has_hallucinated_devices: yn("gen_has_hallucinated_devices")?,
        nli_status: enum_field(&m, "nli_status", lenient)?,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn verdict_json(nli: &str) -> String {
        format!(
            r#"{{"reason": "GEN restates a GT finding.", "gt_has_abnormalities": "yes", "gt_has_devices": "no",
            "gen_has_abnormalities": "yes", "gen_has_devices": "no", "gen_has_correct_abnormalities": "yes",
            "gen_has_hallucinated_abnormalities": "no", "gen_has_correct_devices": "no",
            "gen_has_hallucinated_devices": "no", "nli_status": "{nli}"}}"#
        )
    }

    #[test]
    fn well_formed_verdict() {
        let v = validate_verdict(&verdict_json("entailment"), false).unwrap();
        assert_eq!(v.nli_status, NliStatus::Entailment);
        assert!(v.gen_has_correct_abnormalities.is_yes());
        assert!(!v.gen_has_hallucinated_abnormalities.is_yes());
        let round: JudgeVerdict = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(round, v);
    }

    #[test]
    fn first_object_inside_surrounding_text() {
        let raw = format!("Here you go:\n```json\n{}\n```\n{{\"other\": 1}}", verdict_json("neutral"));
        assert_eq!(validate_verdict(&raw, false).unwrap().nli_status, NliStatus::Neutral);
    }

    #[test]
    fn missing_field() {
        let raw = verdict_json("neutral").replace(r#", "nli_status": "neutral""#, "");
        assert_eq!(validate_verdict(&raw, false), Err(VerdictError::MissingField("nli_status".into())));
    }

    #[test]
    fn capitalized_enum_is_illegal_unless_lenient() {
        let raw = verdict_json("Entailment");
        assert_eq!(
            validate_verdict(&raw, false),
            Err(VerdictError::IllegalValue { field: "nli_status".into(), got: "\"Entailment\"".into() })
        );
        assert_eq!(validate_verdict(&raw, true).unwrap().nli_status, NliStatus::Entailment);
        let bad = verdict_json("maybe");
        assert!(matches!(validate_verdict(&bad, true), Err(VerdictError::IllegalValue { .. })));
    }

    #[test]
    fn malformed_json() {
        assert_eq!(validate_verdict("no json here", false), Err(VerdictError::MalformedJson));
        assert_eq!(validate_verdict("{\"reason\": ", false), Err(VerdictError::MalformedJson));
        assert_eq!(validate_verdict("[1, 2]", false), Err(VerdictError::MalformedJson));
    }

    #[test]
    fn non_string_values_are_illegal() {
        let raw = verdict_json("neutral").replace(r#""gt_has_devices": "no""#, r#""gt_has_devices": false"#);
        assert_eq!(
            validate_verdict(&raw, true),
            Err(VerdictError::IllegalValue { field: "gt_has_devices".into(), got: "false".into() })
        );
    }
}
