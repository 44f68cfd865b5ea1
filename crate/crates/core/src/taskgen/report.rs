//! Full-report assembly from per-location AGRG generations and an optional
//! GRG report, with optional removal of coordinate groups for text metrics.

use crate::evalkit::ParsedOutput;

use super::format_boxes;

/// True for descriptions that carry no finding (empty or `N/A`).
pub fn is_empty_description(d: &str) -> bool {
    let t = d.trim().trim_end_matches('.').trim();
    t.is_empty() || t.eq_ignore_ascii_case("n/a")
}

/// Concatenates AGRG descriptions in the given order, then the GRG report.
/// `agrg` must already be ordered by the chosen location set.
pub fn assemble_report(agrg: &[ParsedOutput], grg: Option<&ParsedOutput>, strip_boxes: bool) -> String {
    let mut parts: Vec<String> = agrg
        .iter()
        .filter_map(|p| p.description.as_deref())
        .filter(|d| !is_empty_description(d))
        .map(|d| d.trim().to_string())
        .collect();
    if let Some(g) = grg {
        let text = g
            .findings
            .iter()
            .map(|f| {
                let phrase = f.phrase.trim().trim_end_matches('.');
                if f.boxes.is_empty() {
                    format!("{phrase}.")
                } else {
                    format!("{phrase} {}.", format_boxes(&f.boxes))
                }
            })
            .collect::<Vec<_>>()
            .join(" ");
        if !text.is_empty() {
            parts.push(text);
        }
    }
    let joined = parts.join(" ");
    if strip_boxes {
        strip_box_groups(&joined)
    } else {
        joined
    }
}

/// Removes every `[a,b,c,d]` numeric group and normalizes the whitespace
/// left behind (runs collapsed, no space before punctuation).
pub fn strip_box_groups(text: &str) -> String {
    let mut kept = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        kept.push_str(&rest[..open]);
        let after = &rest[open..];
        match after.find(']') {
            Some(close) if is_coordinate_group(&after[1..close]) => {
                kept.push(' ');
                rest = &after[close + 1..];
            }
            _ => {
                kept.push('[');
                rest = &after[1..];
            }
        }
    }
    kept.push_str(rest);
    normalize_spacing(&kept)
}

fn is_coordinate_group(inner: &str) -> bool {
    let fields: Vec<&str> = inner.split(',').collect();
    fields.len() == 4 && fields.iter().all(|f| f.trim().parse::<f64>().is_ok())
}

fn normalize_spacing(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut out = String::with_capacity(collapsed.len());
    let chars: Vec<char> = collapsed.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c == ' ' && chars.get(i + 1).is_some_and(|n| matches!(n, '.' | ',' | ';' | ':')) {
            continue;
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::NormBox;
    use crate::record::{Finding, Task};

    fn agrg(desc: &str) -> ParsedOutput {
        let mut p = ParsedOutput::empty(Task::AgrgBoth);
        p.description = Some(desc.to_string());
        p
    }

    #[test]
    fn concatenates_in_order_with_grg_last() {
        let mut g = ParsedOutput::empty(Task::Grg);
        g.findings = vec![Finding { phrase: "grgText".into(), boxes: vec![] }];
        let out = assemble_report(&[agrg("descA"), agrg("descB")], Some(&g), false);
        assert_eq!(out, "descA descB grgText.");
    }

    #[test]
    fn empty_inputs_give_empty_report() {
        assert_eq!(assemble_report(&[agrg(""), agrg("N/A")], None, true), "");
        assert_eq!(assemble_report(&[], None, false), "");
    }

    #[test]
    fn strips_coordinates() {
        assert_eq!(strip_box_groups("atelectasis [0.29,0.66,0.18,0.20]."), "atelectasis.");
        assert_eq!(
            strip_box_groups("Effusion [0.1,0.2,0.3,0.4] [0.5, 0.6, 0.1, 0.1]. Normal heart."),
            "Effusion. Normal heart."
        );
        assert_eq!(strip_box_groups("see [note] here"), "see [note] here");
    }

    #[test]
    fn strip_boxes_applies_to_grg_part() {
        let mut g = ParsedOutput::empty(Task::Grg);
        g.findings = vec![Finding {
            phrase: "Slight residual atelectasis".into(),
            boxes: vec![NormBox::new(0.29, 0.66, 0.18, 0.2).unwrap()],
        }];
        let out = assemble_report(&[agrg("Heart size is normal.")], Some(&g), true);
        assert_eq!(out, "Heart size is normal. Slight residual atelectasis.");
    }
}
