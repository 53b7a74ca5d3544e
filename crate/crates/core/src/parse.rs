//! Parsers for model free-text responses.
//!
//! Real model outputs are noisy: percent signs, markdown, reordered labels,
//! prose around the answer. The rules here are deliberately tolerant, but a
//! response without the required labels is a `ParseFailure` (carried with the
//! raw text) rather than a guess — failed records are counted and excluded
//! from metrics, never imputed.

use once_cell::sync::Lazy;
use regex::Regex;

use crate::error::{Error, Result};

/// A parsed (answer, probability) pair plus any tolerance warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedGuess {
    pub answer: String,
    pub probability: f64,
    pub warnings: Vec<String>,
}

static GUESS_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)\bguess\s*:\s*([^\n]*)").unwrap());
static PROB_LABEL_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\bprobability\s*:").unwrap());
static NUMBER_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"([0-9]*\.?[0-9]+)\s*(%?)").unwrap());
static G_LABEL_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\bG(\d+)\s*:\s*([^\n]*)").unwrap());
static P_LABEL_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\bP(\d+)\s*:\s*([^\n]*)").unwrap());
static CONFIDENCE_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\bconfidence\s*:\s*([^\n]*)").unwrap());

fn parse_failure(reason: &str, raw: &str) -> Error {
    Error::ParseFailure {
        reason: reason.to_string(),
        raw: raw.to_string(),
    }
}

/// Strip markdown emphasis and surrounding quotes/whitespace from an answer.
fn clean_answer(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c: char| matches!(c, '*' | '_' | '`' | '"' | '\u{201c}' | '\u{201d}'))
        .trim()
        .to_string()
}

/// Parse the first number at or after `start`, normalizing percent forms.
fn first_number(text: &str, warnings: &mut Vec<String>) -> Option<f64> {
    let caps = NUMBER_RE.captures(text)?;
    let mut value: f64 = caps.get(1)?.as_str().parse().ok()?;
    if !caps.get(2).map_or("", |m| m.as_str()).is_empty() {
        value /= 100.0;
    } else if value > 1.0 && value <= 100.0 {
        // Bare "90" after a probability label almost always means 90%.
        warnings.push(format!("interpreted bare {value} as a percentage"));
        value /= 100.0;
    }
    if !value.is_finite() {
        return None;
    }
    if !(0.0..=1.0).contains(&value) {
        warnings.push(format!("clamped out-of-range probability {value}"));
        value = value.clamp(0.0, 1.0);
    }
    Some(value)
}

/// Extract the answer after the last "Guess:" label and the first number
/// after "Probability:".
pub fn parse_guess_prob(response: &str) -> Result<ParsedGuess> {
    let mut warnings = Vec::new();

    let answer = GUESS_RE
        .captures_iter(response)
        .last()
        .map(|c| clean_answer(c.get(1).unwrap().as_str()))
        .filter(|a| !a.is_empty())
        .ok_or_else(|| parse_failure("no Guess: label", response))?;

    let prob_start = PROB_LABEL_RE
        .find(response)
        .ok_or_else(|| parse_failure("no Probability: label", response))?
        .end();
    let probability = first_number(&response[prob_start..], &mut warnings)
        .ok_or_else(|| parse_failure("no number after Probability:", response))?;

    Ok(ParsedGuess {
        answer,
        probability,
        warnings,
    })
}

/// Parse just a probability (the stage-2 reply of two-stage single-answer
/// methods, where the guess lives in the stage-1 transcript).
pub fn parse_prob_only(response: &str) -> Result<(f64, Vec<String>)> {
    let mut warnings = Vec::new();
    let start = match PROB_LABEL_RE.find(response) {
        Some(m) => m.end(),
        None => {
            // Models often answer a bare "0.8" to the stage-2 prompt.
            warnings.push("no Probability: label; using first number".into());
            0
        }
    };
    let probability = first_number(&response[start..], &mut warnings)
        .ok_or_else(|| parse_failure("no parseable probability", response))?;
    Ok((probability, warnings))
}

/// Pair Gi with Pi by index for i = 1..k; pairs are returned sorted by
/// probability descending with the original index as tie-breaker.
pub fn parse_topk(response: &str, k: usize) -> Result<Vec<ParsedGuess>> {
    assert!(k >= 1);
    parse_gp_pairs(response, response, k)
}

/// Two-stage variant: guesses come from the stage-1 reply, probabilities from
/// the stage-2 reply.
pub fn parse_topk_two_stage(
    guesses_response: &str,
    probs_response: &str,
    k: usize,
) -> Result<Vec<ParsedGuess>> {
    assert!(k >= 1);
    parse_gp_pairs(guesses_response, probs_response, k)
}

fn parse_gp_pairs(guess_text: &str, prob_text: &str, k: usize) -> Result<Vec<ParsedGuess>> {
    let mut guesses: Vec<Option<String>> = vec![None; k];
    for caps in G_LABEL_RE.captures_iter(guess_text) {
        let idx: usize = match caps.get(1).unwrap().as_str().parse() {
            Ok(i) => i,
            Err(_) => continue,
        };
        if (1..=k).contains(&idx) {
            let answer = clean_answer(caps.get(2).unwrap().as_str());
            if !answer.is_empty() {
                guesses[idx - 1] = Some(answer);
            }
        }
    }

    let mut probs: Vec<Option<(f64, Vec<String>)>> = vec![None; k];
    for caps in P_LABEL_RE.captures_iter(prob_text) {
        let idx: usize = match caps.get(1).unwrap().as_str().parse() {
            Ok(i) => i,
            Err(_) => continue,
        };
        if (1..=k).contains(&idx) && probs[idx - 1].is_none() {
            let mut warnings = Vec::new();
            if let Some(p) = first_number(caps.get(2).unwrap().as_str(), &mut warnings) {
                probs[idx - 1] = Some((p, warnings));
            }
        }
    }

    let mut pairs = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..k {
        match (&guesses[i], &probs[i]) {
            (Some(answer), Some((p, warnings))) => {
                let mut warnings = warnings.clone();
                warnings.extend(dropped.drain(..));
                pairs.push((
                    i,
                    ParsedGuess {
                        answer: answer.clone(),
                        probability: *p,
                        warnings,
                    },
                ));
            }
            (Some(_), None) => {
                dropped.push(format!("G{} present but P{} missing; pair dropped", i + 1, i + 1));
            }
            _ => {}
        }
    }
    if pairs.is_empty() {
        return Err(parse_failure("zero parseable guess/probability pairs", guess_text));
    }
    if !dropped.is_empty() {
        pairs.last_mut().unwrap().1.warnings.extend(dropped);
    }

    pairs.sort_by(|a, b| {
        b.1.probability
            .partial_cmp(&a.1.probability)
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    Ok(pairs.into_iter().map(|(_, g)| g).collect())
}

fn normalize_expression(text: &str) -> String {
    text.trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_lowercase()
}

/// Match the text after "Confidence:" against the known expression list,
/// case-insensitively, preferring the longest matching expression.
pub fn parse_expression<'a>(response: &str, expressions: &'a [String]) -> Result<&'a str> {
    assert!(!expressions.is_empty());
    let caps = CONFIDENCE_RE
        .captures(response)
        .ok_or_else(|| parse_failure("no Confidence: label", response))?;
    let candidate = normalize_expression(caps.get(1).unwrap().as_str());
    if candidate.is_empty() {
        return Err(parse_failure("empty confidence expression", response));
    }

    expressions
        .iter()
        .filter(|e| {
            let norm = normalize_expression(e);
            candidate == norm
                || candidate.starts_with(&norm)
                || candidate.contains(&format!(" {norm}"))
        })
        .max_by_key(|e| e.len())
        .map(|e| e.as_str())
        .ok_or_else(|| parse_failure("expression not in the known list", response))
}

/// Classify an 'Is True' follow-up reply by its leading token.
/// Returns `None` when the reply starts with neither A/True nor B/False.
pub fn classify_true_false(response: &str) -> Option<bool> {
    let token: String = response
        .trim_start_matches(|c: char| !c.is_ascii_alphanumeric())
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    match token.as_str() {
        "a" | "true" => Some(true),
        "b" | "false" => Some(false),
        _ => None,
    }
}

/// Classify a judge reply by its first standalone Yes/No token.
pub fn classify_yes_no(response: &str) -> Option<bool> {
    for word in response.split(|c: char| c.is_whitespace()) {
        let token = word
            .trim_matches(|c: char| !c.is_ascii_alphanumeric())
            .to_lowercase();
        match token.as_str() {
            "yes" => return Some(true),
            "no" => return Some(false),
            _ => {}
        }
    }
    None
}
