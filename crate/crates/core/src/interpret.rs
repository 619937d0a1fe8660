//! Linguistic nearest-prototype rules.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Decision, DetectorModel, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleTerm {
    pub class: String,
    pub proto: usize,
    /// Euclidean distance.
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rule {
    pub terms: Vec<RuleTerm>,
    /// Class name, or `DEEPFAKE` for novel samples.
    pub verdict: String,
}

pub const NOVEL_WORD: &str = "DEEPFAKE";

/// Fixed-point text with 4 significant digits (`0.000` for zero).
pub fn format_sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.3}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("IF ")?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" OR ")?;
            }
            write!(f, "x ~ (class:{}, proto:{}, dist:{})", t.class, t.proto, format_sig4(t.dist))?;
        }
        write!(f, " THEN {}", self.verdict)
    }
}

/// Build the rule for a decision from its `k` nearest prototypes. Fewer
/// terms appear when the decision carries fewer prototypes.
pub fn extract_rule(decision: &Decision, model: &DetectorModel, k: usize) -> Result<Rule> {
    if k == 0 {
        return Err(Error::InvalidConfig("rule needs at least one prototype".into()));
    }
    let class_name = |id: usize| {
        model
            .classes
            .get(id)
            .map(|c| c.class_name.clone())
            .ok_or_else(|| Error::UnknownClass(id.to_string()))
    };
    let terms = decision
        .nearest_prototypes
        .iter()
        .take(k)
        .map(|n| {
            Ok(RuleTerm {
                class: class_name(n.class_id)?,
                proto: n.prototype_index,
                dist: n.distance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = match decision.verdict {
        Verdict::Class(id) => class_name(id)?,
        Verdict::Novel => NOVEL_WORD.to_string(),
    };
    Ok(Rule { terms, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig4_formatting() {
        assert_eq!(format_sig4(0.0), "0.000");
        assert_eq!(format_sig4(1.0), "1.000");
        assert_eq!(format_sig4(12.345), "12.35");
        assert_eq!(format_sig4(1234.5), "1234");
        assert_eq!(format_sig4(98765.4), "98765");
        assert_eq!(format_sig4(0.0012345), "0.001234");
    }
}
