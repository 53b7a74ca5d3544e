//! Deterministic scripted provider for offline runs and tests.
//!
//! Fixtures key on a stable hash of the full message list, so two-stage
//! dialogues can be scripted. Repeated identical requests (the sampling
//! methods) consume fixtures with the same hash in file order, cycling when
//! exhausted; the queue resets per provider instance so consecutive runs are
//! byte-identical.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{ChatRequest, ChatResponse, Message, Provider, Usage};

/// Stable hash of a message list, used as the fixture key.
pub fn request_hash(messages: &[Message]) -> String {
    let mut hasher = Sha256::new();
    for m in messages {
        hasher.update(match m.role {
            super::Role::System => b"system\x00".as_slice(),
            super::Role::User => b"user\x00".as_slice(),
            super::Role::Assistant => b"assistant\x00".as_slice(),
        });
        hasher.update(m.content.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(hasher.finalize())
}

/// One scripted reply, as stored in the line-delimited fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockFixture {
    pub hash: String,
    pub reply: String,
}

pub struct MockProvider {
    replies: HashMap<String, Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
    fallback: Option<String>,
    calls: AtomicU64,
}

impl MockProvider {
    pub fn new(fixtures: Vec<MockFixture>, fallback: Option<String>) -> Self {
        let mut replies: HashMap<String, Vec<String>> = HashMap::new();
        for f in fixtures {
            replies.entry(f.hash).or_default().push(f.reply);
        }
        Self {
            replies,
            cursors: Mutex::new(HashMap::new()),
            fallback,
            calls: AtomicU64::new(0),
        }
    }

    /// Load the line-delimited fixture file (one JSON record per line).
    pub fn from_file(path: &Path, fallback: Option<String>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut fixtures = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fixture: MockFixture =
                serde_json::from_str(line).map_err(|e| Error::Malformed {
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            fixtures.push(fixture);
        }
        Ok(Self::new(fixtures, fallback))
    }

    pub fn write_fixtures(path: &Path, fixtures: &[MockFixture]) -> Result<()> {
        let mut out = String::new();
        for f in fixtures {
            out.push_str(&serde_json::to_string(f)?);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Number of completions served so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for MockProvider {
    fn complete_once(&self, request: &ChatRequest) -> Result<ChatResponse> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let hash = request_hash(&request.messages);
        let content = match self.replies.get(&hash) {
            Some(queue) => {
                let mut cursors = self.cursors.lock().unwrap();
                let cursor = cursors.entry(hash.clone()).or_insert(0);
                let reply = queue[*cursor % queue.len()].clone();
                *cursor += 1;
                reply
            }
            None => self
                .fallback
                .clone()
                .ok_or(Error::MissingFixture(hash))?,
        };
        Ok(ChatResponse {
            content,
            finish_reason: "stop".into(),
            usage: Usage::default(),
            latency_ms: 0,
        })
    }

    fn id(&self) -> &str {
        "mock"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(msg: &str) -> ChatRequest {
        ChatRequest {
            messages: vec![Message::user(msg)],
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 16,
            model_id: "mock".into(),
        }
    }

    #[test]
    fn fixture_returned_verbatim() {
        let hash = request_hash(&[Message::user("q")]);
        let provider = MockProvider::new(
            vec![MockFixture {
                hash,
                reply: "the answer".into(),
            }],
            None,
        );
        let resp = provider.complete_once(&request("q")).unwrap();
        assert_eq!(resp.content, "the answer");
    }

    #[test]
    fn missing_fixture_without_fallback_errors() {
        let provider = MockProvider::new(vec![], None);
        assert!(matches!(
            provider.complete_once(&request("q")),
            Err(Error::MissingFixture(_))
        ));
    }

    #[test]
    fn queue_cycles_when_exhausted() {
        let hash = request_hash(&[Message::user("q")]);
        let provider = MockProvider::new(
            vec![
                MockFixture {
                    hash: hash.clone(),
                    reply: "a".into(),
                },
                MockFixture { hash, reply: "b".into() },
            ],
            None,
        );
        let got: Vec<String> = (0..4)
            .map(|_| provider.complete_once(&request("q")).unwrap().content)
            .collect();
        assert_eq!(got, vec!["a", "b", "a", "b"]);
    }

    #[test]
    fn hash_distinguishes_roles_and_order() {
        let a = request_hash(&[Message::user("x"), Message::assistant("y")]);
        let b = request_hash(&[Message::assistant("x"), Message::user("y")]);
        let c = request_hash(&[Message::user("x")]);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn fixture_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        let fixtures = vec![MockFixture {
            hash: request_hash(&[Message::user("q")]),
            reply: "multi\nline\treply".into(),
        }];
        MockProvider::write_fixtures(&path, &fixtures).unwrap();
        let provider = MockProvider::from_file(&path, None).unwrap();
        assert_eq!(
            provider.complete_once(&request("q")).unwrap().content,
            "multi\nline\treply"
        );
    }
}
