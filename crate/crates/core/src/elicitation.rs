//! Runs each confidence-extraction method against a chat model and parses the
//! replies into answers and confidences.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::{ChatRequest, Message, ModelClient};
use crate::datasets::Question;
use crate::equivalence::EquivalenceChecker;
use crate::error::{Error, Result};
use crate::expressions::{ExpressionMap, ExpressionSet};
use crate::metrics::entropy_score;
use crate::parse;
use crate::templates::{self, TemplateKind};

fn default_n_samples() -> usize {
    10
}

/// Which probability map a linguistic-confidence method is scored with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpressionMapMode {
    Human,
    Optimized,
}

/// One confidence-extraction method and its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodSpec {
    LabelProb {
        #[serde(default = "default_n_samples")]
        n_samples: usize,
    },
    IsTrueProb {
        #[serde(default = "default_n_samples")]
        n_samples: usize,
    },
    Entropy {
        #[serde(default = "default_n_samples")]
        n_samples: usize,
    },
    Verb1sTopk {
        k: usize,
    },
    Verb2sTopk {
        k: usize,
    },
    Verb2sCot,
    Ling1s {
        expression_map_mode: ExpressionMapMode,
    },
}

impl MethodSpec {
    /// Row label used in report tables.
    pub fn display_name(&self) -> String {
        match self {
            MethodSpec::LabelProb { .. } => "Label prob.".into(),
            MethodSpec::IsTrueProb { .. } => "'Is True' prob.".into(),
            MethodSpec::Entropy { .. } => "Entropy".into(),
            MethodSpec::Verb1sTopk { k } => format!("Verb. 1S top-{k}"),
            MethodSpec::Verb2sTopk { k } => format!("Verb. 2S top-{k}"),
            MethodSpec::Verb2sCot => "Verb. 2S CoT".into(),
            MethodSpec::Ling1s {
                expression_map_mode: ExpressionMapMode::Human,
            } => "Ling. 1S-human".into(),
            MethodSpec::Ling1s {
                expression_map_mode: ExpressionMapMode::Optimized,
            } => "Ling. 1S-opt.".into(),
        }
    }

    /// Entropy is a ranking key, not a probability: AUC only.
    pub fn auc_only(&self) -> bool {
        matches!(self, MethodSpec::Entropy { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodSpec::LabelProb { n_samples }
            | MethodSpec::IsTrueProb { n_samples }
            | MethodSpec::Entropy { n_samples } => {
                if *n_samples < 1 {
                    return Err(Error::Config("n_samples must be at least 1".into()));
                }
            }
            MethodSpec::Verb1sTopk { k } | MethodSpec::Verb2sTopk { k } => {
                if *k < 1 {
                    return Err(Error::Config("k must be at least 1".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Model requests per question (judge calls excluded; those depend on
    /// answer diversity). Used by dry-run cost projection.
    pub fn requests_per_question(&self) -> usize {
        match self {
            MethodSpec::LabelProb { n_samples } | MethodSpec::Entropy { n_samples } => *n_samples,
            MethodSpec::IsTrueProb { n_samples } => 1 + *n_samples,
            MethodSpec::Verb1sTopk { .. } | MethodSpec::Ling1s { .. } => 1,
            MethodSpec::Verb2sTopk { .. } | MethodSpec::Verb2sCot => 2,
        }
    }

    fn template_texts(&self) -> Vec<&'static str> {
        match self {
            MethodSpec::LabelProb { .. } | MethodSpec::Entropy { .. } => {
                vec![templates::LABEL_PROB]
            }
            MethodSpec::IsTrueProb { .. } => vec![templates::LABEL_PROB, templates::IS_TRUE],
            MethodSpec::Verb1sTopk { k } if *k == 1 => vec![templates::VERB_1S_TOP1],
            MethodSpec::Verb1sTopk { .. } => vec![templates::VERB_1S_TOPK],
            MethodSpec::Verb2sTopk { k } if *k == 1 => {
                vec![templates::LABEL_PROB, templates::STAGE2_SINGLE_PROB]
            }
            MethodSpec::Verb2sTopk { .. } => {
                vec![templates::VERB_2S_TOPK_STAGE1, templates::VERB_2S_TOPK_STAGE2]
            }
            MethodSpec::Verb2sCot => {
                vec![templates::VERB_2S_COT_STAGE1, templates::STAGE2_SINGLE_PROB]
            }
            MethodSpec::Ling1s { .. } => vec![templates::LING_1S],
        }
    }

    /// Stable fingerprint over the method parameters and the template text,
    /// so editing a template invalidates stale manifest records.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(self).expect("method serializes").as_bytes());
        for t in self.template_texts() {
            hasher.update([0u8]);
            hasher.update(t.as_bytes());
        }
        hex::encode(&hasher.finalize()[..16])
    }
}

/// One (prompt, raw response) exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternate {
    pub answer: String,
    pub confidence: f64,
}

/// A successfully parsed elicitation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elicited {
    pub answer: String,
    pub confidence: f64,
    pub confidence_expression: Option<String>,
    pub alternates: Vec<Alternate>,
    /// Confidence is a ranking key only; exclude from ECE/ECE-t/BS-t.
    pub auc_only: bool,
}

/// Everything one method produced on one question, parse failure or not.
/// Transcripts are preserved either way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationOutcome {
    pub transcripts: Vec<Transcript>,
    pub parse_warnings: Vec<String>,
    pub elicited: std::result::Result<Elicited, String>,
}

/// Per-model elicitation settings.
pub struct Elicitor<'a> {
    pub client: &'a ModelClient,
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// CoT generations run long; they get their own cap.
    pub max_tokens_cot: u32,
    pub expressions: &'a ExpressionSet,
    pub human_map: &'a ExpressionMap,
}

impl<'a> Elicitor<'a> {
    fn request(&self, messages: Vec<Message>, max_tokens: u32) -> ChatRequest {
        ChatRequest {
            messages,
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens,
            model_id: self.model_id.clone(),
        }
    }

    /// Execute one method on one question.
    pub fn run(
        &self,
        question: &Question,
        method: &MethodSpec,
        equivalence: &EquivalenceChecker,
    ) -> Result<ElicitationOutcome> {
        method.validate()?;
        match method {
            MethodSpec::LabelProb { n_samples } => {
                self.run_label_prob(question, *n_samples, equivalence)
            }
            MethodSpec::IsTrueProb { n_samples } => {
                self.run_is_true_prob(question, *n_samples)
            }
            MethodSpec::Entropy { n_samples } => {
                self.run_entropy(question, *n_samples, equivalence)
            }
            MethodSpec::Verb1sTopk { k } => self.run_verb_1s(question, *k),
            MethodSpec::Verb2sTopk { k } => self.run_verb_2s(question, *k),
            MethodSpec::Verb2sCot => self.run_verb_2s_cot(question),
            MethodSpec::Ling1s { .. } => self.run_ling_1s(question),
        }
    }

    fn render(&self, kind: TemplateKind, stage: u8, question: &str, k: usize) -> Result<String> {
        templates::render(kind, stage, question, k, &self.expressions.prompt_list())
    }

    /// Answer text from a bare-guess reply: after the last "Guess:" label if
    /// present, else the whole (cleaned) reply.
    fn bare_answer(response: &str) -> Option<String> {
        match parse::parse_guess_prob(&format!("{response}\nProbability: 0")) {
            Ok(g) => Some(g.answer),
            Err(_) => {
                let cleaned = response.trim();
                if cleaned.is_empty() || cleaned.lines().count() > 3 {
                    None
                } else {
                    Some(cleaned.trim_matches(|c: char| c == '*' || c == '`').trim().to_string())
                }
            }
        }
    }

    fn sample_answers(
        &self,
        question: &Question,
        n_samples: usize,
        transcripts: &mut Vec<Transcript>,
        warnings: &mut Vec<String>,
    ) -> Result<Vec<String>> {
        let prompt = self.render(TemplateKind::LabelProb, 1, &question.text, 1)?;
        let request = self.request(vec![Message::user(prompt.clone())], self.max_tokens);
        let mut answers = Vec::new();
        for (i, response) in self.client.sample_n(&request, n_samples).into_iter().enumerate() {
            match response {
                Ok(resp) => {
                    transcripts.push(Transcript {
                        prompt: prompt.clone(),
                        response: resp.content.clone(),
                    });
                    match Self::bare_answer(&resp.content) {
                        Some(a) => answers.push(a),
                        None => warnings.push(format!("sample {i}: unparseable answer")),
                    }
                }
                Err(e) => warnings.push(format!("sample {i}: request failed: {e}")),
            }
        }
        Ok(answers)
    }

    fn run_label_prob(
        &self,
        question: &Question,
        n_samples: usize,
        equivalence: &EquivalenceChecker,
    ) -> Result<ElicitationOutcome> {
        let mut transcripts = Vec::new();
        let mut warnings = Vec::new();
        let answers = self.sample_answers(question, n_samples, &mut transcripts, &mut warnings)?;
        if answers.is_empty() {
            return Ok(ElicitationOutcome {
                transcripts,
                parse_warnings: warnings,
                elicited: Err("all samples failed to parse".into()),
            });
        }
        let clusters = equivalence.cluster(&answers, &question.text, &mut warnings)?;
        // ties broken by earliest-created cluster: strict > keeps the first max
        let modal = clusters
            .iter()
            .max_by(|a, b| a.members.len().cmp(&b.members.len()).then(std::cmp::Ordering::Greater))
            .expect("non-empty clusters");
        let alternates = clusters
            .iter()
            .map(|c| Alternate {
                answer: c.representative.clone(),
                confidence: c.members.len() as f64 / n_samples as f64,
            })
            .collect();
        Ok(ElicitationOutcome {
            transcripts,
            parse_warnings: warnings,
            elicited: Ok(Elicited {
                answer: modal.representative.clone(),
                confidence: modal.members.len() as f64 / n_samples as f64,
                confidence_expression: None,
                alternates,
                auc_only: false,
            }),
        })
    }

    fn run_is_true_prob(&self, question: &Question, n_samples: usize) -> Result<ElicitationOutcome> {
        let mut transcripts = Vec::new();
        let mut warnings = Vec::new();

        let answers = self.sample_answers(question, 1, &mut transcripts, &mut warnings)?;
        let Some(answer) = answers.into_iter().next() else {
            return Ok(ElicitationOutcome {
                transcripts,
                parse_warnings: warnings,
                elicited: Err("initial answer sample failed".into()),
            });
        };

        let prompt = templates::render_is_true(&question.text, &answer);
        let request = self.request(vec![Message::user(prompt.clone())], self.max_tokens);
        let mut true_count = 0usize;
        let mut classified = 0usize;
        for (i, response) in self.client.sample_n(&request, n_samples).into_iter().enumerate() {
            match response {
                Ok(resp) => {
                    transcripts.push(Transcript {
                        prompt: prompt.clone(),
                        response: resp.content.clone(),
                    });
                    match parse::classify_true_false(&resp.content) {
                        Some(true) => {
                            true_count += 1;
                            classified += 1;
                        }
                        Some(false) => classified += 1,
                        None => warnings.push(format!(
                            "follow-up {i}: unclassifiable reply; dropped from denominator"
                        )),
                    }
                }
                Err(e) => warnings.push(format!("follow-up {i}: request failed: {e}")),
            }
        }
        if classified == 0 {
            return Ok(ElicitationOutcome {
                transcripts,
                parse_warnings: warnings,
                elicited: Err("zero classifiable true/false follow-ups".into()),
            });
        }
        Ok(ElicitationOutcome {
            transcripts,
            parse_warnings: warnings,
            elicited: Ok(Elicited {
                answer,
                confidence: true_count as f64 / classified as f64,
                confidence_expression: None,
                alternates: Vec::new(),
                auc_only: false,
            }),
        })
    }

    fn run_entropy(
        &self,
        question: &Question,
        n_samples: usize,
        equivalence: &EquivalenceChecker,
    ) -> Result<ElicitationOutcome> {
        let mut outcome = self.run_label_prob(question, n_samples, equivalence)?;
        if let Ok(el) = &mut outcome.elicited {
            let counts: Vec<usize> = el
                .alternates
                .iter()
                .map(|a| (a.confidence * n_samples as f64).round() as usize)
                .collect();
            let entropy = entropy_score(&counts)?;
            // rank key in [0,1], decreasing in entropy
            el.confidence = if n_samples > 1 {
                1.0 - entropy / (n_samples as f64).ln()
            } else {
                1.0
            };
            el.auc_only = true;
        }
        Ok(outcome)
    }

    fn run_verb_1s(&self, question: &Question, k: usize) -> Result<ElicitationOutcome> {
        let prompt = self.render(TemplateKind::Verb1sTopK, 1, &question.text, k)?;
        let response = self
            .client
            .complete(&self.request(vec![Message::user(prompt.clone())], self.max_tokens))?;
        let transcripts = vec![Transcript {
            prompt,
            response: response.content.clone(),
        }];

        let parsed = if k == 1 {
            parse::parse_guess_prob(&response.content).map(|g| vec![g])
        } else {
            parse::parse_topk(&response.content, k)
        };
        Ok(Self::outcome_from_pairs(transcripts, parsed))
    }

    fn run_verb_2s(&self, question: &Question, k: usize) -> Result<ElicitationOutcome> {
        let stage1 = self.render(TemplateKind::Verb2sTopK, 1, &question.text, k)?;
        let first = self
            .client
            .complete(&self.request(vec![Message::user(stage1.clone())], self.max_tokens))?;

        let stage2 = self.render(TemplateKind::Verb2sTopK, 2, &question.text, k)?;
        let second = self.client.complete(&self.request(
            vec![
                Message::user(stage1.clone()),
                Message::assistant(first.content.clone()),
                Message::user(stage2.clone()),
            ],
            self.max_tokens,
        ))?;
        let transcripts = vec![
            Transcript {
                prompt: stage1,
                response: first.content.clone(),
            },
            Transcript {
                prompt: stage2,
                response: second.content.clone(),
            },
        ];

        if k == 1 {
            let answer = Self::bare_answer(&first.content);
            let prob = parse::parse_prob_only(&second.content);
            let parsed = match (answer, prob) {
                (Some(answer), Ok((probability, warnings))) => Ok(vec![parse::ParsedGuess {
                    answer,
                    probability,
                    warnings,
                }]),
                (None, _) => Err(Error::ParseFailure {
                    reason: "stage-1 answer unparseable".into(),
                    raw: first.content.clone(),
                }),
                (_, Err(e)) => Err(e),
            };
            Ok(Self::outcome_from_pairs(transcripts, parsed))
        } else {
            let parsed = parse::parse_topk_two_stage(&first.content, &second.content, k);
            Ok(Self::outcome_from_pairs(transcripts, parsed))
        }
    }

    fn run_verb_2s_cot(&self, question: &Question) -> Result<ElicitationOutcome> {
        let stage1 = self.render(TemplateKind::Verb2sCot, 1, &question.text, 1)?;
        let first = self
            .client
            .complete(&self.request(vec![Message::user(stage1.clone())], self.max_tokens_cot))?;

        let stage2 = self.render(TemplateKind::Verb2sCot, 2, &question.text, 1)?;
        let second = self.client.complete(&self.request(
            vec![
                Message::user(stage1.clone()),
                Message::assistant(first.content.clone()),
                Message::user(stage2.clone()),
            ],
            self.max_tokens,
        ))?;
        let transcripts = vec![
            Transcript {
                prompt: stage1,
                response: first.content.clone(),
            },
            Transcript {
                prompt: stage2,
                response: second.content.clone(),
            },
        ];

        // CoT replies must carry an explicit Guess: label; the preceding
        // explanation makes a whole-reply fallback unsafe.
        let parsed = parse::parse_guess_prob(&format!("{}\nProbability: 0", first.content))
            .and_then(|g| {
                let (probability, warnings) = parse::parse_prob_only(&second.content)?;
                Ok(vec![parse::ParsedGuess {
                    answer: g.answer,
                    probability,
                    warnings,
                }])
            });
        Ok(Self::outcome_from_pairs(transcripts, parsed))
    }

    fn run_ling_1s(&self, question: &Question) -> Result<ElicitationOutcome> {
        let prompt = self.render(TemplateKind::Ling1s, 1, &question.text, 1)?;
        let response = self
            .client
            .complete(&self.request(vec![Message::user(prompt.clone())], self.max_tokens))?;
        let transcripts = vec![Transcript {
            prompt,
            response: response.content.clone(),
        }];

        let parsed = parse::parse_expression(&response.content, &self.expressions.expressions)
            .and_then(|expr| {
                let answer = Self::bare_answer(&response.content).ok_or(Error::ParseFailure {
                    reason: "no parseable guess".into(),
                    raw: response.content.clone(),
                })?;
                let confidence = self.human_map.get(expr).ok_or_else(|| {
                    Error::Config(format!("expression map missing {expr:?}"))
                })?;
                Ok((answer, expr.to_string(), confidence))
            });
        match parsed {
            Ok((answer, expression, confidence)) => Ok(ElicitationOutcome {
                transcripts,
                parse_warnings: Vec::new(),
                elicited: Ok(Elicited {
                    answer,
                    confidence,
                    confidence_expression: Some(expression),
                    alternates: Vec::new(),
                    auc_only: false,
                }),
            }),
            Err(e) => Ok(ElicitationOutcome {
                transcripts,
                parse_warnings: Vec::new(),
                elicited: Err(e.to_string()),
            }),
        }
    }

    fn outcome_from_pairs(
        transcripts: Vec<Transcript>,
        parsed: Result<Vec<parse::ParsedGuess>>,
    ) -> ElicitationOutcome {
        match parsed {
            Ok(pairs) => {
                let warnings: Vec<String> =
                    pairs.iter().flat_map(|p| p.warnings.clone()).collect();
                let alternates: Vec<Alternate> = pairs
                    .iter()
                    .map(|p| Alternate {
                        answer: p.answer.clone(),
                        confidence: p.probability,
                    })
                    .collect();
                let best = &pairs[0];
                ElicitationOutcome {
                    transcripts,
                    parse_warnings: warnings,
                    elicited: Ok(Elicited {
                        answer: best.answer.clone(),
                        confidence: best.probability,
                        confidence_expression: None,
                        alternates,
                        auc_only: false,
                    }),
                }
            }
            Err(e) => ElicitationOutcome {
                transcripts,
                parse_warnings: Vec::new(),
                elicited: Err(e.to_string()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{request_hash, MockFixture, MockProvider};
    use std::sync::Arc;

    fn question() -> Question {
        Question {
            id: "q1".into(),
            text: "What is the capital of France?".into(),
            gold: "Paris".into(),
            aliases: vec![],
            dataset: "test".into(),
        }
    }

    struct Setup {
        client: Arc<ModelClient>,
        expressions: ExpressionSet,
    }

    impl Setup {
        fn new(fixtures: Vec<MockFixture>, fallback: Option<&str>) -> Self {
            let provider = MockProvider::new(fixtures, fallback.map(|s| s.to_string()));
            Self {
                client: Arc::new(ModelClient::new(Arc::new(provider))),
                expressions: ExpressionSet::default(),
            }
        }

        fn run(&self, method: &MethodSpec) -> ElicitationOutcome {
            let elicitor = Elicitor {
                client: &self.client,
                model_id: "mock".into(),
                temperature: 1.0,
                top_p: 1.0,
                max_tokens: 512,
                max_tokens_cot: 1024,
                expressions: &self.expressions,
                human_map: &self.expressions.probabilities,
            };
            let judge = EquivalenceChecker::new(self.client.clone(), "mock", None).unwrap();
            elicitor.run(&question(), method, &judge).unwrap()
        }
    }

    fn fixture_for(prompt: &str, reply: &str) -> MockFixture {
        MockFixture {
            hash: request_hash(&[Message::user(prompt.to_string())]),
            reply: reply.to_string(),
        }
    }

    fn label_prob_prompt() -> String {
        templates::render(TemplateKind::LabelProb, 1, &question().text, 1, "").unwrap()
    }

    #[test]
    fn label_prob_frequency() {
        let prompt = label_prob_prompt();
        let mut fixtures = Vec::new();
        for i in 0..10 {
            let reply = if i < 7 { "Guess: Paris" } else { "Guess: Lyon" };
            fixtures.push(fixture_for(&prompt, reply));
        }
        let setup = Setup::new(fixtures, Some("No."));
        let outcome = setup.run(&MethodSpec::LabelProb { n_samples: 10 });
        let el = outcome.elicited.unwrap();
        assert_eq!(el.answer, "Paris");
        assert!((el.confidence - 0.7).abs() < 1e-12);
        // confidence * n is the modal cluster size
        assert_eq!((el.confidence * 10.0).round() as usize, 7);
    }

    #[test]
    fn label_prob_unanimous() {
        let prompt = label_prob_prompt();
        let fixtures = vec![fixture_for(&prompt, "Guess: Paris")];
        let setup = Setup::new(fixtures, None);
        let outcome = setup.run(&MethodSpec::LabelProb { n_samples: 10 });
        assert_eq!(outcome.elicited.unwrap().confidence, 1.0);
    }

    #[test]
    fn is_true_fraction() {
        let label_prompt = label_prob_prompt();
        let is_true_prompt = templates::render_is_true(&question().text, "Paris");
        let mut fixtures = vec![fixture_for(&label_prompt, "Guess: Paris")];
        for i in 0..10 {
            let reply = if i < 8 { "(A) True" } else { "(B) False" };
            fixtures.push(fixture_for(&is_true_prompt, reply));
        }
        let setup = Setup::new(fixtures, None);
        let outcome = setup.run(&MethodSpec::IsTrueProb { n_samples: 10 });
        let el = outcome.elicited.unwrap();
        assert!((el.confidence - 0.8).abs() < 1e-12);
    }

    #[test]
    fn is_true_mixed_forms_count() {
        let label_prompt = label_prob_prompt();
        let is_true_prompt = templates::render_is_true(&question().text, "Paris");
        let fixtures = vec![
            fixture_for(&label_prompt, "Guess: Paris"),
            fixture_for(&is_true_prompt, "A) True."),
            fixture_for(&is_true_prompt, "True"),
            fixture_for(&is_true_prompt, "(B) False"),
        ];
        let setup = Setup::new(fixtures, None);
        let outcome = setup.run(&MethodSpec::IsTrueProb { n_samples: 3 });
        let el = outcome.elicited.unwrap();
        assert!((el.confidence - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_auc_only() {
        let prompt = label_prob_prompt();
        let mut fixtures = Vec::new();
        for i in 0..10 {
            let reply = if i < 5 { "Guess: Paris" } else { "Guess: Lyon" };
            fixtures.push(fixture_for(&prompt, reply));
        }
        let setup = Setup::new(fixtures, Some("No."));
        let outcome = setup.run(&MethodSpec::Entropy { n_samples: 10 });
        let el = outcome.elicited.unwrap();
        assert!(el.auc_only);
        // clusters [5,5]: rank key 1 - ln2/ln10
        let expected = 1.0 - 2.0f64.ln() / 10.0f64.ln();
        assert!((el.confidence - expected).abs() < 1e-12);
    }

    #[test]
    fn verb_1s_top1() {
        let prompt =
            templates::render(TemplateKind::Verb1sTopK, 1, &question().text, 1, "").unwrap();
        let fixtures = vec![fixture_for(&prompt, "Guess: Paris\nProbability: 0.85")];
        let setup = Setup::new(fixtures, None);
        let outcome = setup.run(&MethodSpec::Verb1sTopk { k: 1 });
        let el = outcome.elicited.unwrap();
        assert_eq!(el.answer, "Paris");
        assert_eq!(el.confidence, 0.85);
    }

    #[test]
    fn verb_1s_topk_argmax_invariant() {
        let prompt =
            templates::render(TemplateKind::Verb1sTopK, 1, &question().text, 4, "").unwrap();
        let fixtures = vec![fixture_for(
            &prompt,
            "G1: Lyon\nP1: 0.2\nG2: Paris\nP2: 0.6\nG3: Nice\nP3: 0.1\nG4: Metz\nP4: 0.05",
        )];
        let setup = Setup::new(fixtures, None);
        let outcome = setup.run(&MethodSpec::Verb1sTopk { k: 4 });
        let el = outcome.elicited.unwrap();
        assert_eq!(el.answer, "Paris");
        assert_eq!(el.confidence, 0.6);
        let max_alt = el
            .alternates
            .iter()
            .map(|a| a.confidence)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(el.confidence, max_alt);
        // raw values, not renormalized
        let sum: f64 = el.alternates.iter().map(|a| a.confidence).sum();
        assert!((sum - 0.95).abs() < 1e-12);
    }

    #[test]
    fn verb_2s_topk_two_stage_dialogue() {
        let stage1 =
            templates::render(TemplateKind::Verb2sTopK, 1, &question().text, 2, "").unwrap();
        let stage2 =
            templates::render(TemplateKind::Verb2sTopK, 2, &question().text, 2, "").unwrap();
        let stage1_reply = "G1: Paris\nG2: Lyon";
        let fixtures = vec![
            fixture_for(&stage1, stage1_reply),
            MockFixture {
                hash: request_hash(&[
                    Message::user(stage1.clone()),
                    Message::assistant(stage1_reply.to_string()),
                    Message::user(stage2.clone()),
                ]),
                reply: "P1: 0.6\nP2: 0.3".into(),
            },
        ];
        let setup = Setup::new(fixtures, None);
        let outcome = setup.run(&MethodSpec::Verb2sTopk { k: 2 });
        assert_eq!(outcome.transcripts.len(), 2);
        let el = outcome.elicited.unwrap();
        assert_eq!(el.answer, "Paris");
        assert_eq!(el.confidence, 0.6);
        assert_eq!(el.alternates[1].answer, "Lyon");
        assert_eq!(el.alternates[1].confidence, 0.3);
    }

    #[test]
    fn verb_2s_cot_parses_guess_after_explanation() {
        let stage1 = templates::render(TemplateKind::Verb2sCot, 1, &question().text, 1, "").unwrap();
        let stage2 = templates::render(TemplateKind::Verb2sCot, 2, &question().text, 1, "").unwrap();
        let stage1_reply = "Explanation: France's capital has been Paris for centuries.\nGuess: Paris";
        let fixtures = vec![
            fixture_for(&stage1, stage1_reply),
            MockFixture {
                hash: request_hash(&[
                    Message::user(stage1.clone()),
                    Message::assistant(stage1_reply.to_string()),
                    Message::user(stage2.clone()),
                ]),
                reply: "Probability: 0.95".into(),
            },
        ];
        let setup = Setup::new(fixtures, None);
        let outcome = setup.run(&MethodSpec::Verb2sCot);
        let el = outcome.elicited.unwrap();
        assert_eq!(el.answer, "Paris");
        assert_eq!(el.confidence, 0.95);
    }

    #[test]
    fn ling_1s_maps_expression() {
        let expressions = ExpressionSet::default();
        let prompt = templates::render(
            TemplateKind::Ling1s,
            1,
            &question().text,
            1,
            &expressions.prompt_list(),
        )
        .unwrap();
        let fixtures = vec![fixture_for(&prompt, "Guess: Paris\nConfidence: Almost no chance")];
        let setup = Setup::new(fixtures, None);
        let outcome = setup.run(&MethodSpec::Ling1s {
            expression_map_mode: ExpressionMapMode::Human,
        });
        let el = outcome.elicited.unwrap();
        assert_eq!(el.confidence_expression.as_deref(), Some("Almost no chance"));
        assert_eq!(el.confidence, expressions.probabilities.get("Almost no chance").unwrap());
    }

    #[test]
    fn parse_failure_preserves_transcripts() {
        let prompt =
            templates::render(TemplateKind::Verb1sTopK, 1, &question().text, 1, "").unwrap();
        let fixtures = vec![fixture_for(&prompt, "I have no idea, sorry.")];
        let setup = Setup::new(fixtures, None);
        let outcome = setup.run(&MethodSpec::Verb1sTopk { k: 1 });
        assert!(outcome.elicited.is_err());
        assert_eq!(outcome.transcripts.len(), 1);
        assert_eq!(outcome.transcripts[0].response, "I have no idea, sorry.");
    }

    #[test]
    fn method_fingerprint_distinguishes_parameters() {
        let a = MethodSpec::Verb1sTopk { k: 1 }.fingerprint();
        let b = MethodSpec::Verb1sTopk { k: 4 }.fingerprint();
        let c = MethodSpec::Verb2sTopk { k: 4 }.fingerprint();
        assert_ne!(a, b);
        assert_ne!(b, c);
    }

    #[test]
    fn deterministic_across_runs() {
        let prompt =
            templates::render(TemplateKind::Verb1sTopK, 1, &question().text, 1, "").unwrap();
        let make = || {
            Setup::new(
                vec![fixture_for(&prompt, "Guess: Paris\nProbability: 0.85")],
                None,
            )
            .run(&MethodSpec::Verb1sTopk { k: 1 })
        };
        assert_eq!(make(), make());
    }
}
