//! Few-shot LLM annotation backend.

use std::collections::HashMap;
use std::sync::Arc;

use super::cache::{cached, sha256_hex, ResponseCache};
use super::chat::{ChatClient, ChatRequest, ChatResponse};
use super::prompts::build_annotation_prompt;
use super::{Backend, BackendError, BackendKind, Mode, ParseAttempt};
use crate::jats::{extract_fields, validate_citation_xml};
use crate::text::normalize_whitespace;

pub struct LlmBackend {
    client: Arc<dyn ChatClient>,
    model: String,
    reasoning_model: bool,
    max_tokens: Option<u32>,
    cache: Option<ResponseCache>,
}

impl LlmBackend {
    pub fn new(
        client: Arc<dyn ChatClient>,
        model: impl Into<String>,
        reasoning_model: bool,
    ) -> Self {
        Self {
            client,
            model: model.into(),
            reasoning_model,
            max_tokens: None,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: Option<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: Option<u32>) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    /// The exact request sent for `citation` in `mode`.
    pub fn request_for(&self, citation: &str, mode: Mode) -> Result<ChatRequest, BackendError> {
        let prompt_mode = mode.prompt_mode().ok_or_else(|| {
            BackendError::InvalidConfig("LLM backend needs a cot or no_cot mode".into())
        })?;
        let mut request =
            build_annotation_prompt(&self.model, citation, prompt_mode, self.reasoning_model);
        if let Some(max_tokens) = self.max_tokens {
            request.sampling.max_tokens = max_tokens;
        }
        Ok(request)
    }

    pub fn cache_key(&self, citation: &str, mode: Mode, sample_index: usize) -> Vec<String> {
        vec![
            self.model.clone(),
            mode.as_str().to_owned(),
            sha256_hex(citation),
            sample_index.to_string(),
        ]
    }
}

impl Backend for LlmBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Llm
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn parse(
        &self,
        citation_id: &str,
        citation: &str,
        mode: Mode,
        sample_index: usize,
    ) -> Result<ParseAttempt, BackendError> {
        let request = self.request_for(citation, mode)?;
        let key = self.cache_key(citation, mode, sample_index);
        let raw = cached(self.cache.as_ref(), "llm", &key, || {
            self.client.complete(&request).map(|r| r.text)
        })?;
        let fields = validate_citation_xml(&raw).map(|tree| extract_fields(&tree));
        Ok(ParseAttempt::new(
            citation_id,
            BackendKind::Llm,
            mode,
            sample_index,
            raw,
            fields,
        ))
    }
}

/// Offline stand-in for a model server that answers every citation with its
/// gold annotation. Unknown citations get an empty reply.
pub struct LabelEchoClient {
    answers: HashMap<String, String>,
}

impl LabelEchoClient {
    /// `pairs` are (plaintext citation, annotation XML).
    pub fn new<I, P, A>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (P, A)>,
        P: AsRef<str>,
        A: Into<String>,
    {
        Self {
            answers: pairs
                .into_iter()
                .map(|(p, a)| (normalize_whitespace(p.as_ref()), a.into()))
                .collect(),
        }
    }
}

impl ChatClient for LabelEchoClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let citation = normalize_whitespace(request.user_message().unwrap_or_default());
        Ok(ChatResponse {
            text: self.answers.get(&citation).cloned().unwrap_or_default(),
            finish_reason: Some("stop".into()),
            usage: None,
        })
    }
}
