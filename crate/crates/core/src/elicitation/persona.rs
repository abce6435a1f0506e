//! Prompt assembly: persona system prompts, stimulus turns and the rating
//! expert's few-shot prompt.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DemographyMode, StimulusMode};
use super::provider::ChatMessage;
use super::ElicitationError;
use crate::domain::{Demographics, LikertRating, Method, Stimulus, DEMOGRAPHIC_ATTRIBUTES};
use crate::panelio::{self, PanelIoError, FORMAT_VERSION};

const PARTICIPANT_FRAME: &str =
    "You are a participant in a consumer research survey about new product concepts.";
const IMPERSONATION_FRAME: &str = "Answer every question the way this consumer would:";
const DIRECT_INSTRUCTION: &str = "When asked a question, answer with a single number from 1 to 5, \
where 1 means you would definitely not buy the product and 5 means you would definitely buy it.";
const TEXTUAL_INSTRUCTION: &str = "Reply briefly to any questions posed to you.";

/// Follow-up used when a numeric answer could not be parsed.
pub const DIRECT_REPROMPT: &str = "Reply with a single number from 1 to 5.";

fn attribute_line(d: &Demographics, name: &str) -> Option<String> {
    match name {
        "age" => d.age.map(|a| format!("- Age: {a}")),
        "gender" => d.gender.label().map(|g| format!("- Gender: {g}")),
        "income_tier" => d
            .income_tier
            .label()
            .map(|i| format!("- Income level: {i}")),
        "region" => d.region.label().map(|r| format!("- Region: {r}")),
        "ethnicity" => d.ethnicity.label().map(|e| format!("- Ethnicity: {e}")),
        other => {
            let key = other.strip_prefix("extra.")?;
            d.extra
                .get(key)
                .and_then(|c| c.label())
                .map(|v| format!("- {}: {v}", key.replace('_', " ")))
        }
    }
}

/// Persona framing for one consumer. Null attributes are left out and the
/// attribute order is fixed, so equal demographics give identical prompts.
pub fn render_persona(d: &Demographics, mode: &DemographyMode) -> Result<String, ElicitationError> {
    mode.validate()?;
    let names: Vec<String> = match mode {
        DemographyMode::None => return Ok(PARTICIPANT_FRAME.to_string()),
        DemographyMode::Full => DEMOGRAPHIC_ATTRIBUTES
            .iter()
            .map(|s| s.to_string())
            .chain(d.extra.keys().map(|k| format!("extra.{k}")))
            .collect(),
        DemographyMode::Subset(list) => {
            // Keep the canonical order regardless of how the subset was listed.
            let mut ordered: Vec<String> = DEMOGRAPHIC_ATTRIBUTES
                .iter()
                .filter(|a| list.iter().any(|n| n == *a))
                .map(|s| s.to_string())
                .collect();
            let mut extras: Vec<String> = list
                .iter()
                .filter(|n| n.starts_with("extra."))
                .cloned()
                .collect();
            extras.sort();
            extras.dedup();
            ordered.extend(extras);
            ordered
        }
    };
    let lines: Vec<String> = names.iter().filter_map(|n| attribute_line(d, n)).collect();
    if lines.is_empty() {
        return Ok(PARTICIPANT_FRAME.to_string());
    }
    Ok(format!(
        "{PARTICIPANT_FRAME}\n{IMPERSONATION_FRAME}\n{}",
        lines.join("\n")
    ))
}

/// Full system prompt for the elicitation conversation.
pub fn system_prompt(persona: &str, method: Method) -> String {
    let instruction = match method {
        Method::Dlr => DIRECT_INSTRUCTION,
        Method::Flr | Method::Ssr => TEXTUAL_INSTRUCTION,
    };
    format!("{persona}\n\n{instruction}")
}

/// The user turn presenting the concept and asking the question.
pub fn stimulus_turn(stimulus: &Stimulus, mode: StimulusMode) -> ChatMessage {
    match mode {
        StimulusMode::Text => ChatMessage::user(format!(
            "Here is a product concept.\n\n{}\n\n{}",
            stimulus.description.trim(),
            stimulus.question
        )),
        StimulusMode::Image => ChatMessage {
            image: stimulus.image_ref.clone(),
            ..ChatMessage::user(format!(
                "The attached image shows a product concept.\n\n{}",
                stimulus.question
            ))
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterExample {
    pub text: String,
    pub rating: LikertRating,
}

/// Few-shot statement-to-rating examples shown to the rating expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterExamples {
    pub format_version: u32,
    pub examples: Vec<RaterExample>,
}

const DEFAULT_RATER_EXAMPLES: &str = include_str!("../../assets/rater_examples.json");

impl Default for RaterExamples {
    fn default() -> Self {
        RaterExamples::parse(DEFAULT_RATER_EXAMPLES).expect("bundled rater examples are valid")
    }
}

impl RaterExamples {
    #[allow(clippy::should_implement_trait)]
    pub fn parse(text: &str) -> Result<Self, PanelIoError> {
        panelio::check_version("rater examples", text)?;
        let parsed: RaterExamples =
            serde_json::from_str(text).map_err(|e| PanelIoError::parse("rater examples", &e))?;
        debug_assert_eq!(parsed.format_version, FORMAT_VERSION);
        Ok(parsed)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, PanelIoError> {
        match path {
            None => Ok(RaterExamples::default()),
            Some(p) => Self::parse(&panelio::read_file(p)?),
        }
    }
}

/// System prompt for the rating expert.
pub fn rater_system_prompt(question: &str, examples: &RaterExamples) -> String {
    let mut out = format!(
        "You are a Likert rating expert. You will be shown a consumer's reply to the question \
\"{question}\". Rate the purchase intent the reply expresses on a 5-point scale: \
1 = definitely would not buy, 2 = probably would not buy, 3 = unsure, 4 = probably would buy, \
5 = definitely would buy. Answer with the number only."
    );
    if !examples.examples.is_empty() {
        out.push_str("\n\nExamples:");
        for ex in &examples.examples {
            out.push_str(&format!("\n\"{}\" -> {}", ex.text, ex.rating));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Category;

    fn sample_demographics() -> Demographics {
        Demographics {
            age: Some(34),
            gender: Category::from("female"),
            income_tier: Category::from("4"),
            region: Category::from("Northeast"),
            ethnicity: Category::Null,
            extra: [("household_size".to_string(), Category::from("3"))].into(),
        }
    }

    #[test]
    fn none_mode_is_identical_for_everyone() {
        let a = render_persona(&sample_demographics(), &DemographyMode::None).unwrap();
        let b = render_persona(&Demographics::default(), &DemographyMode::None).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("34"));
    }

    #[test]
    fn only_known_attributes_are_rendered() {
        let d = Demographics {
            age: Some(34),
            ..Default::default()
        };
        let p = render_persona(&d, &DemographyMode::Full).unwrap();
        assert!(p.contains("Age: 34"));
        for absent in ["Gender", "Income", "Region", "Ethnicity", "Null"] {
            assert!(!p.contains(absent), "{p}");
        }
    }

    #[test]
    fn full_mode_order_is_fixed() {
        let p = render_persona(&sample_demographics(), &DemographyMode::Full).unwrap();
        let pos = |s: &str| p.find(s).unwrap();
        assert!(pos("Age") < pos("Gender"));
        assert!(pos("Gender") < pos("Income level"));
        assert!(pos("Income level") < pos("Region"));
        assert!(pos("Region") < pos("household size"));
        assert!(!p.contains("Ethnicity"));
    }

    #[test]
    fn identical_demographics_identical_prompts() {
        let a = render_persona(&sample_demographics(), &DemographyMode::Full).unwrap();
        let b = render_persona(&sample_demographics(), &DemographyMode::Full).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn subset_mode() {
        let mode = DemographyMode::Subset(vec!["region".into(), "age".into()]);
        let p = render_persona(&sample_demographics(), &mode).unwrap();
        assert!(p.find("Age").unwrap() < p.find("Region").unwrap());
        assert!(!p.contains("Gender"));
        let bad = DemographyMode::Subset(vec!["height".into()]);
        assert!(matches!(
            render_persona(&sample_demographics(), &bad),
            Err(ElicitationError::Config(_))
        ));
    }

    #[test]
    fn prompts_carry_method_instructions() {
        let persona = render_persona(&Demographics::default(), &DemographyMode::Full).unwrap();
        assert!(system_prompt(&persona, Method::Ssr).ends_with(TEXTUAL_INSTRUCTION));
        assert!(system_prompt(&persona, Method::Dlr).contains("single number"));
    }

    #[test]
    fn rater_prompt_lists_examples() {
        let ex = RaterExamples::default();
        let p = rater_system_prompt("How likely are you to purchase the product?", &ex);
        assert!(p.starts_with("You are a Likert rating expert"));
        for e in &ex.examples {
            assert!(p.contains(&e.text));
        }
    }
}
