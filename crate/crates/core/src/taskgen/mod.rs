//! Rendering of annotation records into instruction/response triplets.
//!
//! Response grammar, per task:
//!
//! | task          | response                                                   |
//! |---------------|------------------------------------------------------------|
//! | PG            | `{phrase}: [b1] [b2] ...`                                  |
//! | GRG           | `{phrase1} [b..]. {phrase2} [b..]. {text-only sentence}.`  |
//! | AGRG locate   | `Location of the {location}: [b].`                         |
//! | AGRG describe | `Description of the {location}: {description}`             |
//! | AGRG both     | `Location of the {location}: [b]. Description: {description}` |
//!
//! Boxes are `[cx,cy,w,h]` with two decimals. The parser in
//! [`crate::evalkit::parse`] accepts exactly these productions in strict mode.

mod locations;
mod report;

use thiserror::Error;

use crate::bbox::NormBox;
use crate::record::{AnnotationRecord, Finding, InstructionInstance, RecordError, Split, Task};

pub use locations::{LocationSet, LocationSetName, AGRG29_EXTRA, AGRG38_EXTRA, AGRG9};
pub use report::{assemble_report, is_empty_description, strip_box_groups};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error(transparent)]
    MissingField(#[from] RecordError),
    #[error("{field} contains characters that break the response grammar: {text:?}")]
    InvalidText { field: &'static str, text: String },
}

/// Formats a box as `[cx,cy,w,h]` with exactly two decimals per value.
pub fn format_box(b: &NormBox) -> String {
    let [cx, cy, w, h] = b.to_array().map(fmt2);
    format!("[{cx},{cy},{w},{h}]")
}

/// Space-separated box groups.
pub fn format_boxes(boxes: &[NormBox]) -> String {
    boxes.iter().map(format_box).collect::<Vec<_>>().join(" ")
}

fn fmt2(v: f64) -> String {
    // `{:.2}` rounds the exact binary value half-to-even.
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// One instruction pattern and one response pattern per task kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub pg: (&'static str, &'static str),
    /// The GRG response pattern renders one boxed finding; findings are joined with a space.
    pub grg: (&'static str, &'static str),
    pub agrg_locate: (&'static str, &'static str),
    pub agrg_describe: (&'static str, &'static str),
    pub agrg_both: (&'static str, &'static str),
}

const PLACEHOLDERS: [&str; 4] = ["{phrase}", "{location}", "{description}", "{boxes}"];

impl TemplateSet {
    pub const STANDARD: TemplateSet = TemplateSet {
        pg: ("Ground the phrase: {phrase}", "{phrase}: {boxes}"),
        grg: ("Generate a grounded report.", "{phrase} {boxes}."),
        agrg_locate: ("Locate the {location}.", "Location of the {location}: {boxes}."),
        agrg_describe: ("Describe the {location}.", "Description of the {location}: {description}"),
        agrg_both: (
            "Locate and describe the {location}.",
            "Location of the {location}: {boxes}. Description: {description}",
        ),
    };

    pub fn for_task(&self, task: Task) -> (&'static str, &'static str) {
        match task {
            Task::Pg | Task::Detection => self.pg,
            Task::Grg => self.grg,
            Task::AgrgLocate => self.agrg_locate,
            Task::AgrgDescribe => self.agrg_describe,
            Task::AgrgBoth => self.agrg_both,
        }
    }

    /// Placeholders each task's response must contain.
    pub fn required_placeholders(task: Task) -> &'static [&'static str] {
        match task {
            Task::Pg | Task::Detection | Task::Grg => &["{phrase}", "{boxes}"],
            Task::AgrgLocate => &["{location}", "{boxes}"],
            Task::AgrgDescribe => &["{location}", "{description}"],
            Task::AgrgBoth => &["{location}", "{boxes}", "{description}"],
        }
    }

    /// Checks that every response pattern carries exactly the placeholders
    /// its task needs, each once.
    pub fn validate(&self) -> Result<(), String> {
        for task in [Task::Pg, Task::Grg, Task::AgrgLocate, Task::AgrgDescribe, Task::AgrgBoth] {
            let (_, response) = self.for_task(task);
            let required = Self::required_placeholders(task);
            for p in PLACEHOLDERS {
                let n = response.matches(p).count();
                let want = usize::from(required.contains(&p));
                if n != want {
                    return Err(format!("{task} response pattern has {n}x {p}, expected {want}"));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self, rec: &AnnotationRecord) -> Result<InstructionInstance, RenderError> {
        rec.validate()?;
        let (instr_pat, resp_pat) = self.for_task(rec.task);
        let (instruction, response) = match rec.task {
            Task::Pg | Task::Detection => {
                let phrase = clean_phrase(rec.text.as_deref().unwrap_or_default(), "text")?;
                (
                    fill(instr_pat, &[("{phrase}", phrase)]),
                    fill(resp_pat, &[("{phrase}", phrase), ("{boxes}", &format_boxes(&rec.boxes))]),
                )
            }
            Task::Grg => (instr_pat.to_string(), self.render_grg(&rec.findings)?),
            Task::AgrgLocate | Task::AgrgDescribe | Task::AgrgBoth => {
                let location = clean_phrase(&rec.category, "category")?;
                let description = rec.text.as_deref().map(str::trim).unwrap_or_default();
                if description.contains('\n') {
                    return Err(RenderError::InvalidText { field: "text", text: description.to_string() });
                }
                (
                    fill(instr_pat, &[("{location}", location)]),
                    fill(
                        resp_pat,
                        &[
                            ("{location}", location),
                            ("{boxes}", &format_boxes(&rec.boxes)),
                            ("{description}", description),
                        ],
                    ),
                )
            }
        };
        Ok(InstructionInstance {
            image_id: rec.image_id.clone(),
            source_id: rec.source_id.clone(),
            task: rec.task,
            category: rec.category.clone(),
            instruction,
            response,
            structured: rec.clone(),
        })
    }

    fn render_grg(&self, findings: &[Finding]) -> Result<String, RenderError> {
        let mut sentences = Vec::with_capacity(findings.len());
        for f in findings {
            let phrase = clean_phrase(&f.phrase, "findings.phrase")?;
            let phrase = phrase.trim_end_matches('.').trim_end();
            if phrase.contains(". ") {
                return Err(RenderError::InvalidText { field: "findings.phrase", text: f.phrase.clone() });
            }
            if f.boxes.is_empty() {
                sentences.push(format!("{phrase}."));
            } else {
                sentences.push(fill(self.grg.1, &[("{phrase}", phrase), ("{boxes}", &format_boxes(&f.boxes))]));
            }
        }
        Ok(sentences.join(" "))
    }
}

fn clean_phrase<'a>(s: &'a str, field: &'static str) -> Result<&'a str, RenderError> {
    let t = s.trim();
    if t.is_empty() || t.contains(['[', ']', '\n']) {
        return Err(RenderError::InvalidText { field, text: s.to_string() });
    }
    Ok(t)
}

fn fill(pattern: &str, values: &[(&str, &str)]) -> String {
    let mut out = pattern.to_string();
    for (k, v) in values {
        out = out.replace(k, v);
    }
    out
}

/// Renders a record with the standard template set.
pub fn render_instruction(rec: &AnnotationRecord) -> Result<InstructionInstance, RenderError> {
    TemplateSet::STANDARD.render(rec)
}

/// For every labelled PG record outside the test split, appends a copy that
/// grounds the canonical label instead of the sentence.
pub fn expand_padchest_labels(records: Vec<AnnotationRecord>) -> Vec<AnnotationRecord> {
    let mut out = Vec::with_capacity(records.len() * 2);
    for rec in records {
        let extra = match (&rec.label, rec.task, rec.split) {
            (Some(label), Task::Pg, Split::Train | Split::Val) if !label.trim().is_empty() => {
                let mut copy = rec.clone();
                copy.text = Some(label.clone());
                copy.label = None;
                copy.id = rec.id.as_ref().map(|id| format!("{id}#label"));
                Some(copy)
            }
            _ => None,
        };
        out.push(rec);
        out.extend(extra);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(cx: f64, cy: f64, w: f64, h: f64) -> NormBox {
        NormBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn format_box_examples() {
        assert_eq!(format_box(&b(0.48, 0.78, 0.73, 0.45)), "[0.48,0.78,0.73,0.45]");
        assert_eq!(format_box(&b(0.5, 0.5, 1.0, 1.0)), "[0.50,0.50,1.00,1.00]");
        assert_eq!(format_box(&b(0.333, 0.5, 0.1, 0.1)), "[0.33,0.50,0.10,0.10]");
        // exact binary tie rounds to even
        assert_eq!(format_box(&b(0.125, 0.375, 0.1, 0.1)), "[0.12,0.38,0.10,0.10]");
    }

    #[test]
    fn standard_templates_are_valid() {
        TemplateSet::STANDARD.validate().unwrap();
        let mut broken = TemplateSet::STANDARD;
        broken.agrg_both.1 = "Location of the {location}: {boxes}.";
        assert!(broken.validate().is_err());
    }

    #[test]
    fn renders_pg_example() {
        let rec = AnnotationRecord::new("v1", "vindr-cxr-pg", Task::Pg, "Cardiomegaly")
            .with_text("Cardiomegaly")
            .with_boxes(vec![b(0.57, 0.65, 0.55, 0.37)]);
        let inst = render_instruction(&rec).unwrap();
        assert_eq!(inst.instruction, "Ground the phrase: Cardiomegaly");
        assert_eq!(inst.response, "Cardiomegaly: [0.57,0.65,0.55,0.37]");
        assert_eq!(inst.structured, rec);
    }

    #[test]
    fn renders_multi_box_pg_space_separated() {
        let rec = AnnotationRecord::new("i", "s", Task::Pg, "effusion")
            .with_text("Bilateral pleural effusion")
            .with_boxes(vec![b(0.2, 0.7, 0.2, 0.2), b(0.8, 0.7, 0.2, 0.2)]);
        assert_eq!(
            render_instruction(&rec).unwrap().response,
            "Bilateral pleural effusion: [0.20,0.70,0.20,0.20] [0.80,0.70,0.20,0.20]"
        );
    }

    #[test]
    fn renders_agrg_examples() {
        let both = AnnotationRecord::new("m1", "cig-agrg", Task::AgrgBoth, "abdomen")
            .with_text("No free air below the right hemidiaphragm is seen.")
            .with_boxes(vec![b(0.48, 0.78, 0.73, 0.45)]);
        let inst = render_instruction(&both).unwrap();
        assert_eq!(inst.instruction, "Locate and describe the abdomen.");
        assert_eq!(
            inst.response,
            "Location of the abdomen: [0.48,0.78,0.73,0.45]. Description: No free air below the right hemidiaphragm is seen."
        );

        let locate = AnnotationRecord::new("m1", "cig-agrg", Task::AgrgLocate, "right cardiophrenic angle")
            .with_boxes(vec![b(0.33, 0.71, 0.09, 0.12)]);
        let inst = render_instruction(&locate).unwrap();
        assert_eq!(inst.instruction, "Locate the right cardiophrenic angle.");
        assert_eq!(inst.response, "Location of the right cardiophrenic angle: [0.33,0.71,0.09,0.12].");

        let describe = AnnotationRecord::new("m1", "cig-agrg", Task::AgrgDescribe, "left chest wall")
            .with_text("Left chest wall pacer defibrillator is unchanged in position.");
        let inst = render_instruction(&describe).unwrap();
        assert_eq!(inst.instruction, "Describe the left chest wall.");
        assert_eq!(
            inst.response,
            "Description of the left chest wall: Left chest wall pacer defibrillator is unchanged in position."
        );
    }

    #[test]
    fn renders_grg_example() {
        let mut rec = AnnotationRecord::new("p1", "padchest-gr-grg", Task::Grg, "report");
        rec.findings = vec![
            Finding { phrase: "Slight residual atelectasis in the right pulmonary base".into(), boxes: vec![b(0.29, 0.66, 0.18, 0.20)] },
            Finding { phrase: "Minimal blunting of the costophrenic angle.".into(), boxes: vec![b(0.81, 0.74, 0.33, 0.39)] },
            Finding { phrase: "Tuberculosis.".into(), boxes: vec![] },
        ];
        let inst = render_instruction(&rec).unwrap();
        assert_eq!(inst.instruction, "Generate a grounded report.");
        assert_eq!(
            inst.response,
            "Slight residual atelectasis in the right pulmonary base [0.29,0.66,0.18,0.20]. \
             Minimal blunting of the costophrenic angle [0.81,0.74,0.33,0.39]. Tuberculosis."
        );
    }

    #[test]
    fn pg_without_boxes_is_missing_field() {
        let rec = AnnotationRecord::new("i", "s", Task::Pg, "c").with_text("Cardiomegaly");
        assert_eq!(
            render_instruction(&rec),
            Err(RenderError::MissingField(RecordError::MissingField { task: Task::Pg, field: "boxes" }))
        );
    }

    #[test]
    fn rejects_bracketed_phrases() {
        let rec = AnnotationRecord::new("i", "s", Task::Pg, "c")
            .with_text("odd [phrase]")
            .with_boxes(vec![b(0.5, 0.5, 0.1, 0.1)]);
        assert!(matches!(render_instruction(&rec), Err(RenderError::InvalidText { .. })));
    }

    fn labelled(split: Split) -> AnnotationRecord {
        let mut r = AnnotationRecord::new("p", "padchest-gr-pg", Task::Pg, "pleural thickening")
            .with_text("Minimal biapical pleural thickening")
            .with_boxes(vec![b(0.5, 0.2, 0.6, 0.1)])
            .with_split(split);
        r.label = Some("apical pleural thickening".into());
        r
    }

    #[test]
    fn label_expansion_train_and_val_only() {
        let out = expand_padchest_labels(vec![labelled(Split::Train)]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].text.as_deref(), Some("apical pleural thickening"));
        assert_eq!(out[1].boxes, out[0].boxes);
        assert_eq!(expand_padchest_labels(vec![labelled(Split::Val)]).len(), 2);
        assert_eq!(expand_padchest_labels(vec![labelled(Split::Test)]).len(), 1);
        let mut plain = labelled(Split::Train);
        plain.label = None;
        assert_eq!(expand_padchest_labels(vec![plain.clone()]), vec![plain]);
    }
}
