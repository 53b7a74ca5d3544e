//! QA dataset ingestion: a canonical line-delimited format plus adapters for
//! the three public datasets' native layouts.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One QA item with its gold answer and acceptable aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub gold: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub dataset: String,
}

/// Native layouts the adapters understand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// The canonical line-delimited format this harness reads and writes.
    Canonical,
    /// TriviaQA rc.web.nocontext JSON ({"Data": [...]}).
    Triviaqa,
    /// SciQ JSON array with question/correct_answer fields.
    Sciq,
    /// TruthfulQA generation-split CSV.
    Truthfulqa,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "canonical" => Ok(Self::Canonical),
            "triviaqa" => Ok(Self::Triviaqa),
            "sciq" => Ok(Self::Sciq),
            "truthfulqa" => Ok(Self::Truthfulqa),
            other => Err(Error::Config(format!("unknown dataset format {other:?}"))),
        }
    }
}

fn check_unique_ids(questions: &[Question]) -> Result<()> {
    let mut seen = HashSet::new();
    for q in questions {
        if !seen.insert(&q.id) {
            return Err(Error::DuplicateId(q.id.clone()));
        }
    }
    Ok(())
}

fn validate(questions: Vec<Question>) -> Result<Vec<Question>> {
    for (i, q) in questions.iter().enumerate() {
        if q.gold.trim().is_empty() {
            return Err(Error::Malformed {
                line: i + 1,
                message: format!("question {:?} has an empty gold answer", q.id),
            });
        }
    }
    check_unique_ids(&questions)?;
    Ok(questions)
}

/// Load a dataset file, converting from its native schema when needed.
pub fn load(path: &Path, format: DatasetFormat) -> Result<Vec<Question>> {
    let text = std::fs::read_to_string(path)?;
    match format {
        DatasetFormat::Canonical => parse_canonical(&text),
        DatasetFormat::Triviaqa => parse_triviaqa(&text),
        DatasetFormat::Sciq => parse_sciq(&text),
        DatasetFormat::Truthfulqa => parse_truthfulqa(&text),
    }
}

/// Parse the canonical format: one JSON record per line with fields
/// (id, text, gold, aliases, dataset).
pub fn parse_canonical(text: &str) -> Result<Vec<Question>> {
    let mut questions = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(line).map_err(|e| Error::Malformed {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        questions.push(q);
    }
    validate(questions)
}

pub fn write_canonical(questions: &[Question]) -> Result<String> {
    let mut out = String::new();
    for q in questions {
        out.push_str(&serde_json::to_string(q)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Deserialize)]
struct TriviaQaFile {
    #[serde(rename = "Data")]
    data: Vec<TriviaQaItem>,
}

#[derive(Deserialize)]
struct TriviaQaItem {
    #[serde(rename = "QuestionId")]
    question_id: String,
    #[serde(rename = "Question")]
    question: String,
    #[serde(rename = "Answer")]
    answer: TriviaQaAnswer,
}

#[derive(Deserialize)]
struct TriviaQaAnswer {
    #[serde(rename = "Value")]
    value: String,
    #[serde(rename = "Aliases", default)]
    aliases: Vec<String>,
}

fn parse_triviaqa(text: &str) -> Result<Vec<Question>> {
    let file: TriviaQaFile = serde_json::from_str(text)?;
    validate(
        file.data
            .into_iter()
            .map(|item| Question {
                id: item.question_id,
                text: item.question,
                gold: item.answer.value,
                aliases: item.answer.aliases,
                dataset: "triviaqa".into(),
            })
            .collect(),
    )
}

#[derive(Deserialize)]
struct SciqItem {
    question: String,
    correct_answer: String,
}

fn parse_sciq(text: &str) -> Result<Vec<Question>> {
    let items: Vec<SciqItem> = serde_json::from_str(text)?;
    validate(
        items
            .into_iter()
            .enumerate()
            .map(|(i, item)| Question {
                id: format!("sciq-{i}"),
                text: item.question,
                gold: item.correct_answer,
                aliases: Vec::new(),
                dataset: "sciq".into(),
            })
            .collect(),
    )
}

/// TruthfulQA generation split: gold = "Best Answer", aliases = the
/// semicolon-separated "Correct Answers" list.
fn parse_truthfulqa(text: &str) -> Result<Vec<Question>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Malformed {
                line: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let q_col = col("Question")?;
    let best_col = col("Best Answer")?;
    let correct_col = col("Correct Answers")?;

    let mut questions = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Malformed {
            line: i + 2,
            message: e.to_string(),
        })?;
        let get = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::Malformed {
                line: i + 2,
                message: "short record".into(),
            })
        };
        let aliases = get(correct_col)?
            .split(';')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        questions.push(Question {
            id: format!("truthfulqa-{i}"),
            text: get(q_col)?.to_string(),
            gold: get(best_col)?.to_string(),
            aliases,
            dataset: "truthfulqa".into(),
        });
    }
    validate(questions)
}

/// Seeded uniform sample without replacement, in sampled-index order.
pub fn sample_eval_set(questions: &[Question], count: usize, seed: u64) -> Result<Vec<Question>> {
    if count > questions.len() {
        return Err(Error::SampleTooLarge {
            requested: count,
            available: questions.len(),
        });
    }
    let mut indices: Vec<usize> = (0..questions.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    indices.truncate(count);
    Ok(indices.into_iter().map(|i| questions[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> Vec<Question> {
        (0..n)
            .map(|i| Question {
                id: format!("q{i}"),
                text: format!("question {i}?"),
                gold: format!("answer {i}"),
                aliases: vec![],
                dataset: "test".into(),
            })
            .collect()
    }

    #[test]
    fn canonical_round_trip() {
        let questions = pool(3);
        let text = write_canonical(&questions).unwrap();
        assert_eq!(parse_canonical(&text).unwrap(), questions);
    }

    #[test]
    fn malformed_record_names_line() {
        let text = "{\"id\":\"a\",\"text\":\"q\",\"gold\":\"g\"}\nnot json\n";
        match parse_canonical(text).unwrap_err() {
            Error::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn missing_answer_is_an_error() {
        let text = "{\"id\":\"a\",\"text\":\"q\",\"gold\":\"\"}\n";
        assert!(matches!(
            parse_canonical(text),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_id_is_an_error() {
        let text = "{\"id\":\"a\",\"text\":\"q\",\"gold\":\"g\"}\n{\"id\":\"a\",\"text\":\"q2\",\"gold\":\"g2\"}\n";
        assert!(matches!(parse_canonical(text), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn triviaqa_aliases_populated() {
        let text = r#"{"Data":[{"QuestionId":"tc_1","Question":"Who?","Answer":{"Value":"JFK","Aliases":["John F. Kennedy","Kennedy"]}}]}"#;
        let qs = parse_triviaqa(text).unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].gold, "JFK");
        assert_eq!(qs[0].aliases.len(), 2);
        assert_eq!(qs[0].dataset, "triviaqa");
    }

    #[test]
    fn sciq_adapter() {
        let text = r#"[{"question":"What is H2O?","correct_answer":"water","distractor1":"air"}]"#;
        let qs = parse_sciq(text).unwrap();
        assert_eq!(qs[0].gold, "water");
    }

    #[test]
    fn truthfulqa_best_answer_and_correct_list() {
        let text = "Type,Category,Question,Best Answer,Correct Answers,Incorrect Answers\n\
                    Adversarial,Misconceptions,What happens?,Nothing happens,Nothing happens; Nothing in particular,Something bad\n";
        let qs = parse_truthfulqa(text).unwrap();
        assert_eq!(qs[0].gold, "Nothing happens");
        assert_eq!(
            qs[0].aliases,
            vec!["Nothing happens".to_string(), "Nothing in particular".to_string()]
        );
    }

    #[test]
    fn sampling_is_seeded_and_size_correct() {
        let questions = pool(2000);
        let a = sample_eval_set(&questions, 1000, 7).unwrap();
        let b = sample_eval_set(&questions, 1000, 7).unwrap();
        assert_eq!(a.len(), 1000);
        assert_eq!(a, b);

        let full = sample_eval_set(&questions, 2000, 7).unwrap();
        let mut ids: Vec<_> = full.iter().map(|q| q.id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 2000);

        assert!(matches!(
            sample_eval_set(&questions, 2001, 7),
            Err(Error::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn different_seeds_differ() {
        let questions = pool(100);
        let base = sample_eval_set(&questions, 10, 0).unwrap();
        let any_differs = (1..=5)
            .map(|seed| sample_eval_set(&questions, 10, seed).unwrap())
            .any(|s| s != base);
        assert!(any_differs);
    }
}
