//! Judge prompt text and its instantiation.

use super::JudgeError;

/// Instructions for the hallucination and NLI judge. The compared texts are
/// appended by [`build_judge_prompt`].
pub const JUDGE_PROMPT: &str = r#"You are an expert radiologist. Your task is to compare a short anatomy-specific mini-report [GEN] against a full image ground-truth report [GT], where [GT] was generated by a radiologist over the entire image, whereas [GEN] was generated by a model over a specific anatomical location. You will assess the degree of hallucination and contradiction in [GEN] compared to [GT].

First, independently assess each report:
- If [GT] explicitly affirms the presence of any abnormality, set "gt_has_abnormalities" to "yes". Otherwise, set it to "no".
- If [GT] explicitly affirms the presence of any medical device (e.g., pacemaker, catheter, wires), set "gt_has_devices" to "yes". Otherwise, set it to "no".
- If [GEN] explicitly affirms the presence of any abnormality, set "gen_has_abnormalities" to "yes". Otherwise, set it to "no".
- If [GEN] explicitly affirms the presence of any medical device (e.g., pacemaker, catheter, wires), set "gen_has_devices" to "yes". Otherwise, set it to "no".

Next, perform the comparison based on [GT]:
- If [GEN] affirms the presence of an abnormality and this is clearly supported or reasonably suggested by [GT], set "gen_has_correct_abnormalities" to "yes". Otherwise, set it to "no".
- If [GEN] affirms the presence of an abnormality that is NOT affirmed nor supported by [GT], set "gen_has_hallucinated_abnormalities" to "yes". Otherwise, set it to "no".
- If [GEN] affirms the presence of a device that is clearly supported or reasonably suggested by [GT], set "gen_has_correct_devices" to "yes". Otherwise, set it to "no".
- If [GEN] affirms the presence of a device that is NOT affirmed nor supported by [GT], set "gen_has_hallucinated_devices" to "yes". Otherwise, set it to "no".
- Natural Language Inference:
    - If [GEN] makes at least one explicit statement that is clearly contradicted by [GT], set "nli_status" to "contradiction".
    - If all of [GEN]'s explicit statements are reasonably supported by [GT], set "nli_status" to "entailment".
    - Otherwise, set "nli_status" to "neutral".

You must respond ONLY with a single, valid JSON object in the following format. Do not add any text before or after the JSON object.

{
    "reason": "A detailed explanation of your reasoning for the comparison. Include a brief explanation of why you made your choices for each field. Focus on what is explicitly stated in [GEN] and [GT]. Do not make any assumptions about what is not explicitly stated.",
    "gt_has_abnormalities": "yes" | "no",
    "gt_has_devices": "yes" | "no",
    "gen_has_abnormalities": "yes" | "no",
    "gen_has_devices": "yes" | "no",
    "gen_has_correct_abnormalities": "yes" | "no",
    "gen_has_hallucinated_abnormalities": "yes" | "no",
    "gen_has_correct_devices": "yes" | "no",
    "gen_has_hallucinated_devices": "yes" | "no",
    "nli_status": "contradiction" | "entailment" | "neutral"
}"#;

/// The ten keys the judge must return.
pub const VERDICT_KEYS: [&str; 10] = [
    "reason",
    "gt_has_abnormalities",
    "gt_has_devices",
    "gen_has_abnormalities",
    "gen_has_devices",
    "gen_has_correct_abnormalities",
    "gen_has_hallucinated_abnormalities",
    "gen_has_correct_devices",
    "gen_has_hallucinated_devices",
    "nli_status",
];

/// `JUDGE_PROMPT` followed by a `[GEN]` section and a `[GT]` section.
pub fn build_judge_prompt(gen: &str, gt_report: &str) -> Result<String, JudgeError> {
    if gen.trim().is_empty() || gt_report.trim().is_empty() {
        return Err(JudgeError::EmptyInput);
    }
    Ok(format!("{JUDGE_PROMPT}\n\n[GEN]\n{gen}\n\n[GT]\n{gt_report}\n"))
}
