//! Prompt templates for every elicitation method, plus the answer-equivalence
//! check prompt, rendered byte-for-byte with placeholder substitution.
//!
//! The template text is load-bearing: golden-file tests pin the rendered
//! output, and the method fingerprint used for run resumability hashes it.
//! Whitespace oddities (a space after a newline before "Probability:", the
//! trailing space in the 2S top-k stage-2 template) are intentional.

use crate::error::{Error, Result};

pub const LABEL_PROB: &str = "Provide your best guess for the following question. Give ONLY the guess, no other words or explanation.\n\nFor example:\n\nGuess: <most likely guess, as short as possible; not a complete sentence, just the guess!>\n\nThe question is:${THE_QUESTION}";

pub const IS_TRUE: &str = "Question: ${QUESTION}\nProposed Answer: ${ANSWER}\nIs the proposed answer:\n\t(A) True or\n\t(B) False?\n The proposed answer is:";

pub const VERB_1S_TOP1: &str = "Provide your best guess and the probability that it is correct (0.0 to 1.0) for the following question. Give ONLY the guess and probability, no other words or explanation. For example:\n\nGuess: <most likely guess, as short as possible; not a complete sentence, just the guess!>\n Probability: <the probability between 0.0 and 1.0 that your guess is correct, without any extra commentary whatsoever; just the probability!>\n\nThe question is: ${THE_QUESTION}";

pub const VERB_1S_TOPK: &str = "Provide your ${k} best guesses and the probability that each is correct (0.0 to 1.0) for the following question. Give ONLY the guesses and probabilities, no other words or explanation. For example:\n\nG1: <first most likely guess, as short as possible; not a complete sentence, just the guess!>\n\nP1: <the probability between 0.0 and 1.0 that G1 is correct, without any extra commentary whatsoever; just the probability!> ... G${k}: <${k}-th most likely guess, as short as possible; not a complete sentence, just the guess!>\n\nP${k}: <the probability between 0.0 and 1.0 that G${k} is correct, without any extra commentary whatsoever; just the probability!> \n\nThe question is: ${THE_QUESTION}";

pub const VERB_2S_COT_STAGE1: &str = "Provide your best guess for the following question. Before giving your answer, provide a step-by-step explanation of your thought process. Then on a new line give the guess with no other words or explanation.\n\nFor example:\n\nExplanation: <one sentence step-by-step explanation of your thought process>\n\nGuess: <most likely guess, as short as possible; not a complete sentence, just the guess!>\n\nThe question is: ${THE_QUESTION}";

/// Stage-2 probability request shared by Verb. 2S top-1 and Verb. 2S CoT.
pub const STAGE2_SINGLE_PROB: &str = "Provide the probability that your guess is correct. Give ONLY the probability, no other words or explanation.\n\nFor example:\n\nProbability: <the probability between 0.0 and 1.0 that your guess is correct, without any extra commentary whatsoever; just the probability!>\n";

pub const VERB_2S_TOPK_STAGE1: &str = "Provide your ${k} best guesses for the following question. Give ONLY the guesses, no other words or explanation. For example:\n\nG1: <first most likely guess, as short as possible; not a complete sentence, just the guess!>\n\nP1: <the probability between 0.0 and 1.0 that G1 is correct, without any extra commentary whatsoever; just the probability!> ... G${k}: <${k}-th most likely guess, as short as possible; not a complete sentence, just the guess!>\n\nThe question is:${THE_QUESTION}";

pub const VERB_2S_TOPK_STAGE2: &str = "Provide the probability that each of your guesses is correct. Give ONLY the probabilities, no other words or explanation.\n\nFor example:\n\nP1: <the probability between 0.0 and 1.0 that G1 is correct, without any extra commentary whatsoever; just the probability!>\n... P${k}: <the probability between 0.0 and 1.0 that G${k} is correct, without any extra commentary whatsoever; just the probability!> ";

pub const LING_1S: &str = "Provide your best guess for the following question, and describe how likely it is that your guess is correct as one of the following expressions: ${EXPRESSION_LIST}. Give ONLY the guess and your confidence, no other words or explanation. For example:\n\nGuess: <most likely guess, as short as possible; not a complete sentence, just the guess!>\nConfidence: <description of confidence, without any extra commentary whatsoever; just a short phrase!>\n\nThe question is: ${THE_QUESTION}";

pub const EQUIVALENCE: &str = "Are the following two answers to my question Q semantically equivalent?\n\nQ: ${THE_QUESTION}\nA1: ${GOLD_ANSWER}\nA2: ${PRED_ANSWER}\n\nPlease answer with a single word, either \"Yes.\" or \"No.\", and explain your reasoning.";

/// Which template family a prompt is rendered from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    LabelProb,
    IsTrue,
    Verb1sTopK,
    Verb2sTopK,
    Verb2sCot,
    Ling1s,
}

/// Substitute the named placeholder everywhere it occurs.
fn substitute(template: &str, name: &str, value: &str) -> String {
    template.replace(&format!("${{{name}}}"), value)
}

/// Render a method prompt for the given stage (1-based).
///
/// Two-stage methods have stages 1 and 2; the stage-2 prompt is issued as a
/// second user turn in the same dialogue, with the model's stage-1 reply in
/// the message context (context assembly lives in the model client, not
/// here). Top-k templates fall back to the dedicated top-1 wording at k=1.
pub fn render(
    kind: TemplateKind,
    stage: u8,
    question: &str,
    k: usize,
    expression_list: &str,
) -> Result<String> {
    let template = match (kind, stage) {
        (TemplateKind::LabelProb, 1) => LABEL_PROB.to_string(),
        (TemplateKind::Verb1sTopK, 1) if k == 1 => VERB_1S_TOP1.to_string(),
        (TemplateKind::Verb1sTopK, 1) => VERB_1S_TOPK.to_string(),
        (TemplateKind::Verb2sTopK, 1) if k == 1 => LABEL_PROB.to_string(),
        (TemplateKind::Verb2sTopK, 1) => VERB_2S_TOPK_STAGE1.to_string(),
        (TemplateKind::Verb2sTopK, 2) if k == 1 => STAGE2_SINGLE_PROB.to_string(),
        (TemplateKind::Verb2sTopK, 2) => VERB_2S_TOPK_STAGE2.to_string(),
        (TemplateKind::Verb2sCot, 1) => VERB_2S_COT_STAGE1.to_string(),
        (TemplateKind::Verb2sCot, 2) => STAGE2_SINGLE_PROB.to_string(),
        (TemplateKind::Ling1s, 1) => LING_1S.to_string(),
        (kind, stage) => {
            return Err(Error::UnknownStage {
                method: format!("{kind:?}"),
                stage,
            })
        }
    };
    let rendered = substitute(&template, "THE_QUESTION", question);
    let rendered = substitute(&rendered, "k", &k.to_string());
    Ok(substitute(&rendered, "EXPRESSION_LIST", expression_list))
}

/// Render the 'Is True' prompt; it takes the question and a proposed answer
/// rather than the usual placeholders.
pub fn render_is_true(question: &str, answer: &str) -> String {
    let rendered = substitute(IS_TRUE, "QUESTION", question);
    substitute(&rendered, "ANSWER", answer)
}

/// Render the semantic-equivalence check prompt.
pub fn render_equivalence(question: &str, gold: &str, predicted: &str) -> String {
    let rendered = substitute(EQUIVALENCE, "THE_QUESTION", question);
    let rendered = substitute(&rendered, "GOLD_ANSWER", gold);
    substitute(&rendered, "PRED_ANSWER", predicted)
}

/// A user-supplied template file: stage-1 text, optionally followed by a
/// `== STAGE 2 ==` marker line and the stage-2 text. Supports the same
/// placeholders as the built-in templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CustomTemplate {
    pub stage1: String,
    pub stage2: Option<String>,
}

pub const STAGE_MARKER: &str = "== STAGE 2 ==";

impl CustomTemplate {
    pub fn parse(text: &str) -> Result<Self> {
        let separator = format!("\n{STAGE_MARKER}\n");
        let mut parts = text.splitn(2, separator.as_str());
        let stage1 = parts.next().unwrap_or_default().to_string();
        if stage1.trim().is_empty() {
            return Err(Error::Config("custom template has empty stage 1".into()));
        }
        Ok(Self {
            stage1,
            stage2: parts.next().map(|s| s.to_string()),
        })
    }

    pub fn render(&self, stage: u8, question: &str, k: usize, expression_list: &str) -> Result<String> {
        let template = match stage {
            1 => &self.stage1,
            2 => self.stage2.as_ref().ok_or(Error::UnknownStage {
                method: "custom".into(),
                stage,
            })?,
            _ => {
                return Err(Error::UnknownStage {
                    method: "custom".into(),
                    stage,
                })
            }
        };
        let rendered = substitute(template, "THE_QUESTION", question);
        let rendered = substitute(&rendered, "k", &k.to_string());
        Ok(substitute(&rendered, "EXPRESSION_LIST", expression_list))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_substitutes_k_everywhere() {
        let p = render(TemplateKind::Verb1sTopK, 1, "Q?", 4, "").unwrap();
        assert!(p.contains("Provide your 4 best guesses"));
        assert!(p.contains("G4: <4-th most likely guess"));
        assert!(p.contains("P4: <the probability"));
        assert!(!p.contains("${"));
    }

    #[test]
    fn two_stage_methods_have_two_stages() {
        assert!(render(TemplateKind::Verb2sTopK, 2, "Q?", 2, "").is_ok());
        assert!(render(TemplateKind::Verb2sCot, 2, "Q?", 1, "").is_ok());
        assert!(matches!(
            render(TemplateKind::Ling1s, 2, "Q?", 1, "list"),
            Err(Error::UnknownStage { .. })
        ));
        assert!(matches!(
            render(TemplateKind::LabelProb, 2, "Q?", 1, ""),
            Err(Error::UnknownStage { .. })
        ));
    }

    #[test]
    fn no_placeholder_survives_rendering() {
        let kinds = [
            (TemplateKind::LabelProb, 1, 1),
            (TemplateKind::Verb1sTopK, 1, 1),
            (TemplateKind::Verb1sTopK, 1, 4),
            (TemplateKind::Verb2sTopK, 1, 4),
            (TemplateKind::Verb2sTopK, 2, 4),
            (TemplateKind::Verb2sCot, 1, 1),
            (TemplateKind::Verb2sCot, 2, 1),
            (TemplateKind::Ling1s, 1, 1),
        ];
        for (kind, stage, k) in kinds {
            let p = render(kind, stage, "What is 2+2?", k, "Likely, Unlikely").unwrap();
            assert!(!p.contains("${"), "{kind:?} stage {stage}: {p}");
        }
        assert!(!render_is_true("Q?", "A").contains("${"));
        assert!(!render_equivalence("Q?", "a", "b").contains("${"));
    }

    #[test]
    fn is_true_keeps_choice_layout() {
        let p = render_is_true("Is water wet?", "yes");
        assert!(p.contains("\n\t(A) True or\n\t(B) False?\n The proposed answer is:"));
    }

    #[test]
    fn custom_template_stage_split() {
        let t = CustomTemplate::parse("ask ${THE_QUESTION}\n== STAGE 2 ==\ngive probability").unwrap();
        assert_eq!(t.render(1, "Q?", 1, "").unwrap(), "ask Q?");
        assert_eq!(t.render(2, "Q?", 1, "").unwrap(), "give probability");
        let single = CustomTemplate::parse("just ${THE_QUESTION}").unwrap();
        assert!(single.stage2.is_none());
        assert!(single.render(2, "Q?", 1, "").is_err());
    }
}
