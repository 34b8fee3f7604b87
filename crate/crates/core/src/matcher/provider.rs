//! Language-model providers for Stage 2 and the reply validation around them.
//!
//! A provider answers one request at a time with raw text. Replies are parsed
//! against the candidate schema; invalid replies are retried a bounded number
//! of times and then surface as a failure, never as a partial result.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::{propose_heuristic, CandidateSet, MatchCandidate, MatchConfig, Origin};
use crate::canonical::to_canonical_string;
use crate::diagnostic::Diagnostic;
use crate::ir::{ir_to_json, json_to_ir, ModelIR};
use crate::sysml::ExtensionLibrary;

/// The staged process prompt shipped with the toolchain.
pub const PROMPT_TEMPLATE: &str = include_str!("../../../../prompts/sysmlv2_alignment_process.md");

pub const SOURCE_IR_DOC: &str = "source_ir.json";
pub const TARGET_IR_DOC: &str = "target_ir.json";
pub const LIBRARY_DOC: &str = "extension_library.sysml";
pub const CONFIG_DOC: &str = "match_config.json";
pub const FOCUS_DOC: &str = "focus.txt";

/// The global rules plus the section for `stage` from a process template
/// organised as `## Global rules` and `## Stage <k>` sections.
pub fn stage_prompt(template: &str, stage: u8) -> String {
    let section = |title: &str| -> Option<String> {
        let header = format!("## {title}");
        let start = template.lines().position(|l| l.trim() == header)?;
        let body: Vec<&str> = template
            .lines()
            .skip(start)
            .enumerate()
            .take_while(|(i, l)| *i == 0 || !l.starts_with("## "))
            .map(|(_, l)| l)
            .collect();
        Some(body.join("\n").trim_end().to_string())
    };
    let mut parts = Vec::new();
    if let Some(intro) = template.split("\n## ").next() {
        parts.push(intro.trim_end().to_string());
    }
    parts.extend(section("Global rules"));
    parts.extend(section(&format!("Stage {stage}")));
    parts.join("\n\n") + "\n"
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDocument {
    pub name: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub stage: u8,
    pub prompt: String,
    pub context: Vec<ContextDocument>,
    /// User corrections from rejected stages, verbatim and in order.
    pub feedback: Vec<String>,
}

impl ProviderRequest {
    pub fn document(&self, name: &str) -> Option<&str> {
        self.context
            .iter()
            .find(|d| d.name == name)
            .map(|d| d.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub raw: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("provider transport failure: {0}")]
    Transport(String),
    #[error("provider reply invalid after {attempts} attempt(s): {message}")]
    InvalidResponse { attempts: u32, message: String },
    #[error("provider misconfigured: {0}")]
    Configuration(String),
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;
}

/// One request/reply round trip, kept for the session's provider log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderExchange {
    pub provider: String,
    pub attempt: u32,
    pub request: ProviderRequest,
    pub response: Option<String>,
    pub error: Option<String>,
}

/// Everything a Stage-2 provider call needs besides the provider itself.
#[derive(Debug, Clone, Copy)]
pub struct ProviderInput<'a> {
    pub source: &'a ModelIR,
    pub target: &'a ModelIR,
    pub library: &'a ExtensionLibrary,
    pub config: &'a MatchConfig,
    pub focus: Option<&'a str>,
    pub feedback: &'a [String],
    /// Additional attempts after a schema-invalid reply.
    pub retries: u32,
}

/// Successful provider call: the validated set and the warnings raised while validating it.
#[derive(Debug, Clone)]
pub struct ProviderOutcome {
    pub set: CandidateSet,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn build_request(input: &ProviderInput<'_>) -> ProviderRequest {
    let mut context = vec![
        ContextDocument {
            name: SOURCE_IR_DOC.into(),
            content: ir_to_json(input.source),
        },
        ContextDocument {
            name: TARGET_IR_DOC.into(),
            content: ir_to_json(input.target),
        },
        ContextDocument {
            name: LIBRARY_DOC.into(),
            content: input.library.text.clone(),
        },
        ContextDocument {
            name: CONFIG_DOC.into(),
            content: to_canonical_string(input.config),
        },
    ];
    if let Some(focus) = input.focus {
        context.push(ContextDocument {
            name: FOCUS_DOC.into(),
            content: focus.to_string(),
        });
    }
    ProviderRequest {
        stage: 2,
        prompt: stage_prompt(PROMPT_TEMPLATE, 2),
        context,
        feedback: input.feedback.to_vec(),
    }
}

/// Issues the Stage-2 request, validating and retrying as needed. Every round
/// trip is appended to `log`, including failed ones.
pub fn propose_via_provider(
    provider: &dyn Provider,
    input: &ProviderInput<'_>,
    log: &mut Vec<ProviderExchange>,
) -> Result<ProviderOutcome, ProviderError> {
    let base = build_request(input);
    let attempts = input.retries + 1;
    let mut last_error = String::new();
    for attempt in 1..=attempts {
        let mut request = base.clone();
        if attempt > 1 {
            request.prompt.push_str(&format!(
                "\nYour previous reply was rejected: {last_error}\nAnswer again with the JSON object only.\n"
            ));
        }
        let reply = provider.complete(&request);
        let mut exchange = ProviderExchange {
            provider: provider.name().to_string(),
            attempt,
            request,
            response: None,
            error: None,
        };
        match reply {
            Err(e) => {
                exchange.error = Some(e.to_string());
                log.push(exchange);
                return Err(e);
            }
            Ok(response) => {
                exchange.response = Some(response.raw.clone());
                match parse_reply(&response.raw, input) {
                    Ok(outcome) => {
                        log.push(exchange);
                        return Ok(outcome);
                    }
                    Err(message) => {
                        exchange.error = Some(message.clone());
                        log.push(exchange);
                        last_error = message;
                    }
                }
            }
        }
    }
    Err(ProviderError::InvalidResponse {
        attempts,
        message: last_error,
    })
}

#[derive(Deserialize)]
struct WireReply {
    candidates: Vec<WireCandidate>,
}

#[derive(Serialize, Deserialize)]
struct WireCandidate {
    source_uid: String,
    target_uid: String,
    confidence: f64,
    rationale: String,
    #[serde(default)]
    features: BTreeMap<String, f64>,
}

/// The outermost JSON object in a reply, tolerating code fences and prose around it.
fn json_body(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (start < end).then(|| &raw[start..=end])
}

/// Validates a raw reply against the candidate schema. Structural problems are
/// errors (retryable); out-of-range confidences are clamped and unknown or
/// ineligible uids dropped, each with a Warning.
pub fn parse_reply(raw: &str, input: &ProviderInput<'_>) -> Result<ProviderOutcome, String> {
    let body = json_body(raw).ok_or_else(|| "reply contains no JSON object".to_string())?;
    let mut de = serde_json::Deserializer::from_str(body);
    let reply: WireReply = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| format!("schema violation at `{}`: {}", e.path(), e.inner()))?;

    let src = input.source.index();
    let tgt = input.target.index();
    let mut diagnostics = Vec::new();
    let mut set = CandidateSet::empty(input.source, input.target, input.config);
    let universe = set.universe();
    let mut by_pair: BTreeMap<(String, String), MatchCandidate> = BTreeMap::new();
    let mut unknown: Vec<String> = Vec::new();

    for w in reply.candidates {
        let mut ok = true;
        for (uid, index) in [(&w.source_uid, &src), (&w.target_uid, &tgt)] {
            match index.get(uid.as_str()) {
                None => {
                    if !unknown.contains(uid) {
                        unknown.push(uid.clone());
                    }
                    ok = false;
                }
                Some(el) if !input.config.is_eligible(el) => {
                    diagnostics.push(Diagnostic::warning(
                        "provider.ineligible-uid",
                        None,
                        format!(
                            "dropped pair {} -> {}: `{uid}` is a {} which is not eligible",
                            w.source_uid, w.target_uid, el.kind
                        ),
                    ));
                    ok = false;
                }
                Some(_) => {}
            }
        }
        if !ok {
            continue;
        }
        let mut confidence = w.confidence;
        if !(0.0..=1.0).contains(&confidence) {
            let clamped = confidence.clamp(0.0, 1.0);
            diagnostics.push(Diagnostic::warning(
                "provider.confidence-clamped",
                None,
                format!(
                    "confidence {confidence} for {} -> {} clamped to {clamped}",
                    w.source_uid, w.target_uid
                ),
            ));
            confidence = clamped;
        }
        let candidate = MatchCandidate {
            source_qualified_name: src[w.source_uid.as_str()].qualified_name.clone(),
            target_qualified_name: tgt[w.target_uid.as_str()].qualified_name.clone(),
            source_uid: w.source_uid,
            target_uid: w.target_uid,
            confidence,
            rationale: w.rationale,
            features: w.features,
            origin: Origin::Provider,
        };
        let key = (candidate.source_uid.clone(), candidate.target_uid.clone());
        match by_pair.get(&key) {
            Some(existing) => {
                diagnostics.push(Diagnostic::warning(
                    "provider.duplicate-pair",
                    None,
                    format!(
                        "pair {} -> {} proposed more than once; kept the higher confidence",
                        key.0, key.1
                    ),
                ));
                if candidate.confidence > existing.confidence {
                    by_pair.insert(key, candidate);
                }
            }
            None => {
                by_pair.insert(key, candidate);
            }
        }
    }
    if !unknown.is_empty() {
        diagnostics.push(Diagnostic::warning(
            "provider.unknown-uid",
            None,
            format!("dropped pairs citing unknown uids: {}", unknown.join(", ")),
        ));
    }
    set.candidates = by_pair.into_values().collect();
    set.focus = input.focus.map(str::to_string);
    set.finish(universe);
    Ok(ProviderOutcome { set, diagnostics })
}

/// Deterministic offline provider: answers Stage 2 by running the heuristic
/// engine on the IRs found in the request context.
#[derive(Debug, Clone, Default)]
pub struct MockProvider;

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let doc = |name: &str| {
            request.document(name).ok_or_else(|| {
                ProviderError::Transport(format!("mock provider needs context document `{name}`"))
            })
        };
        let bad =
            |e: &dyn std::fmt::Display| ProviderError::Transport(format!("mock provider: {e}"));
        let source = json_to_ir(doc(SOURCE_IR_DOC)?).map_err(|e| bad(&e))?;
        let target = json_to_ir(doc(TARGET_IR_DOC)?).map_err(|e| bad(&e))?;
        let config: MatchConfig = serde_json::from_str(doc(CONFIG_DOC)?).map_err(|e| bad(&e))?;
        let set = propose_heuristic(&source, &target, &config).map_err(|e| bad(&e))?;
        let candidates: Vec<WireCandidate> = set
            .candidates
            .into_iter()
            .map(|c| WireCandidate {
                source_uid: c.source_uid,
                target_uid: c.target_uid,
                confidence: c.confidence,
                rationale: c.rationale,
                features: c.features,
            })
            .collect();
        Ok(ProviderResponse {
            raw: to_canonical_string(&json!({ "candidates": candidates })),
        })
    }
}

/// Replays canned replies in order; useful for exercising validation paths.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    replies: Mutex<VecDeque<Result<String, ProviderError>>>,
}

impl ScriptedProvider {
    pub fn new(replies: impl IntoIterator<Item = Result<String, ProviderError>>) -> Self {
        ScriptedProvider {
            replies: Mutex::new(replies.into_iter().collect()),
        }
    }
}

impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, _request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let next = self
            .replies
            .lock()
            .expect("scripted provider lock")
            .pop_front();
        match next {
            Some(reply) => reply.map(|raw| ProviderResponse { raw }),
            None => Err(ProviderError::Transport(
                "scripted provider has no replies left".into(),
            )),
        }
    }
}

/// Wraps a provider and keeps a copy of every request it forwards.
pub struct RecordingProvider<P> {
    inner: P,
    requests: Mutex<Vec<ProviderRequest>>,
}

impl<P: Provider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        RecordingProvider {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ProviderRequest> {
        self.requests
            .lock()
            .expect("recording provider lock")
            .clone()
    }
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        self.requests
            .lock()
            .expect("recording provider lock")
            .push(request.clone());
        self.inner.complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpProviderConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `http://localhost:8080/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        HttpProviderConfig {
            base_url: "http://127.0.0.1:8080/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: "SOFTALIGN_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

/// Chat-completion client for OpenAI-compatible endpoints.
pub struct HttpProvider {
    config: HttpProviderConfig,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        HttpProvider { config, agent }
    }

    /// The chat messages sent for `request`: the prompt as system message,
    /// each context document and each user correction as user messages.
    pub fn messages(request: &ProviderRequest) -> Vec<serde_json::Value> {
        let mut messages = vec![json!({ "role": "system", "content": request.prompt })];
        for doc in &request.context {
            messages.push(json!({
                "role": "user",
                "content": format!("Context document `{}`:\n```\n{}\n```", doc.name, doc.content),
            }));
        }
        for feedback in &request.feedback {
            messages.push(json!({ "role": "user", "content": feedback }));
        }
        messages
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let key = std::env::var(&self.config.api_key_env).map_err(|_| {
            ProviderError::Configuration(format!(
                "environment variable `{}` is not set",
                self.config.api_key_env
            ))
        })?;
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": Self::messages(request),
        });
        let mut response = self
            .agent
            .post(&url)
            .header("Authorization", format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let value: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| {
                ProviderError::Transport("response has no choices[0].message.content".into())
            })?;
        Ok(ProviderResponse {
            raw: content.to_string(),
        })
    }
}

/// Uid → qualified name lookups for both sides, for callers that only hold uids.
pub fn qualified_names<'a>(source: &'a ModelIR, target: &'a ModelIR) -> HashMap<&'a str, &'a str> {
    source
        .elements
        .iter()
        .chain(&target.elements)
        .map(|e| (e.uid.as_str(), e.qualified_name.as_str()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{extract_ir, UidPolicy};
    use crate::sysml::{bundled_library, parse_model};

    fn irs() -> (ModelIR, ModelIR) {
        let a = parse_model("package A { part def Sensor; part sensor : Sensor; }", "a").unwrap();
        let b = parse_model("package B { part def Sensor; part sensor : Sensor; }", "b").unwrap();
        (
            extract_ir(&a, &UidPolicy::derived("a-")).unwrap().0,
            extract_ir(&b, &UidPolicy::derived("b-")).unwrap().0,
        )
    }

    fn run(
        provider: &dyn Provider,
        feedback: &[String],
    ) -> (
        Result<ProviderOutcome, ProviderError>,
        Vec<ProviderExchange>,
    ) {
        let (s, t) = irs();
        let lib = bundled_library();
        let config = MatchConfig::default();
        let input = ProviderInput {
            source: &s,
            target: &t,
            library: &lib,
            config: &config,
            focus: None,
            feedback,
            retries: 2,
        };
        let mut log = Vec::new();
        (propose_via_provider(provider, &input, &mut log), log)
    }

    fn uid(ir: &ModelIR, qn: &str) -> String {
        ir.elements
            .iter()
            .find(|e| e.qualified_name == qn)
            .unwrap()
            .uid
            .clone()
    }

    #[test]
    fn stage_prompt_contains_rules_and_only_its_stage() {
        let p = stage_prompt(PROMPT_TEMPLATE, 2);
        assert!(p.contains("## Global rules"));
        assert!(p.contains("## Stage 2"));
        assert!(!p.contains("## Stage 3"));
        assert!(p.contains("#FullyMatched allocation element1 to element2"));
    }

    #[test]
    fn mock_equals_heuristic_modulo_origin() {
        let (s, t) = irs();
        let heuristic = propose_heuristic(&s, &t, &MatchConfig::default()).unwrap();
        let (outcome, log) = run(&MockProvider, &[]);
        let mut set = outcome.unwrap().set;
        for c in &mut set.candidates {
            assert_eq!(c.origin, Origin::Provider);
            c.origin = Origin::Heuristic;
        }
        assert_eq!(set, heuristic);
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn confidence_is_clamped_with_warning() {
        let (s, t) = irs();
        let reply = format!(
            r#"```json
{{"candidates":[{{"source_uid":"{}","target_uid":"{}","confidence":1.7,"rationale":"same"}}]}}
```"#,
            uid(&s, "A::sensor"),
            uid(&t, "B::sensor")
        );
        let (outcome, _) = run(&ScriptedProvider::new([Ok(reply)]), &[]);
        let outcome = outcome.unwrap();
        assert_eq!(outcome.set.candidates[0].confidence, 1.0);
        assert!(outcome
            .diagnostics
            .iter()
            .any(|d| d.code == "provider.confidence-clamped"));
    }

    #[test]
    fn unknown_uid_is_dropped_with_warning() {
        let (_, t) = irs();
        let reply = format!(
            r#"{{"candidates":[{{"source_uid":"x9","target_uid":"{}","confidence":0.5,"rationale":"?"}}]}}"#,
            uid(&t, "B::sensor")
        );
        let (outcome, _) = run(&ScriptedProvider::new([Ok(reply)]), &[]);
        let outcome = outcome.unwrap();
        assert!(outcome.set.candidates.is_empty());
        let w = outcome
            .diagnostics
            .iter()
            .find(|d| d.code == "provider.unknown-uid")
            .unwrap();
        assert!(w.message.contains("x9"));
    }

    #[test]
    fn invalid_replies_retry_then_fail() {
        let provider = ScriptedProvider::new([
            Ok("no json here".to_string()),
            Ok(r#"{"candidates":[{"source_uid":1}]}"#.to_string()),
            Ok(r#"{"pairs":[]}"#.to_string()),
        ]);
        let (outcome, log) = run(&provider, &[]);
        assert!(matches!(
            outcome,
            Err(ProviderError::InvalidResponse { attempts: 3, .. })
        ));
        assert_eq!(log.len(), 3);
        assert!(log[1]
            .request
            .prompt
            .contains("previous reply was rejected"));
    }

    #[test]
    fn retry_recovers() {
        let provider =
            ScriptedProvider::new([Ok("garbage".into()), Ok(r#"{"candidates":[]}"#.into())]);
        let (outcome, log) = run(&provider, &[]);
        assert!(outcome.unwrap().set.candidates.is_empty());
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn transport_failure_is_not_retried() {
        let provider = ScriptedProvider::new([
            Err(ProviderError::Transport("down".into())),
            Ok("{}".into()),
        ]);
        let (outcome, log) = run(&provider, &[]);
        assert!(matches!(outcome, Err(ProviderError::Transport(_))));
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn feedback_reaches_the_request_verbatim() {
        let text = "allocation extension is wrong. right form: #FullyMatched allocation element1 to element2. element cannot be definitions.".to_string();
        let recorder = RecordingProvider::new(MockProvider);
        let _ = run(&recorder, std::slice::from_ref(&text));
        let requests = recorder.requests();
        assert_eq!(requests[0].feedback, vec![text.clone()]);
        let messages = HttpProvider::messages(&requests[0]);
        assert!(messages.iter().any(|m| m["content"] == text.as_str()));
    }

    #[test]
    fn http_provider_needs_its_key() {
        let provider = HttpProvider::new(HttpProviderConfig {
            api_key_env: "SOFTALIGN_TEST_KEY_THAT_IS_NOT_SET".into(),
            ..HttpProviderConfig::default()
        });
        let (outcome, _) = run(&provider, &[]);
        assert!(matches!(outcome, Err(ProviderError::Configuration(_))));
    }
}
