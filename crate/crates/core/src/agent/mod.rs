//! The reason/act loop: the chat model alternates between calling
//! exploration tools and, eventually, emitting a ranked file list.

mod answer;
mod prompt;
mod provider;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::archive::write_atomic;
use crate::eval::BugReport;
use crate::http::backoff_delay;
use crate::tools::{ToolName, ToolRegistry, ToolSchema};

pub use answer::{parse_final_answer, AnswerError, RawPrediction, ANSWER_FENCE};
pub use prompt::{bug_message, build_prompt, system_prompt};
pub use provider::{
    parse_chat_response, ChatProvider, ChatRequest, ModelTurn, OpenAiChatConfig, OpenAiChatProvider, ProviderError,
    RecordingProvider, ReplayFile, Script, ScriptedProvider, REPLAY_SCHEMA_VERSION,
};

pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    /// The bug report and loop-control instructions.
    User,
    Model,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(default)]
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub args: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    #[serde(default)]
    pub content: String,
    /// Only on model messages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    /// Only on tool messages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_result: Option<String>,
    /// Only on tool messages: the call being answered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into(), tool_call: None, tool_result: None, tool_call_id: None }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn model(content: impl Into<String>) -> Self {
        Self::plain(Role::Model, content)
    }

    pub fn model_call(content: impl Into<String>, call: ToolCall) -> Self {
        Self { tool_call: Some(call), ..Self::plain(Role::Model, content) }
    }

    pub fn tool(call: &ToolCall, result: impl Into<String>) -> Self {
        Self {
            tool_result: Some(result.into()),
            tool_call_id: Some(call.id.clone()),
            ..Self::plain(Role::Tool, call.name.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub max_iterations: usize,
    pub final_list_size: usize,
    pub temperature: f64,
    pub tool_whitelist: BTreeSet<ToolName>,
    /// Label identifying the run in transcripts.
    pub run_seed: String,
    /// Longest tool result, in chars, fed back to the model; `None` keeps
    /// results whole.
    pub tool_result_char_cap: Option<usize>,
    /// Calls per model turn before the bug is given up.
    pub provider_attempts: u32,
    #[serde(with = "millis")]
    pub provider_backoff: Duration,
    /// Source language named in the prompt.
    pub language: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            final_list_size: 10,
            temperature: 1.0,
            tool_whitelist: ToolName::ALL.into(),
            run_seed: "run-0".to_string(),
            tool_result_char_cap: None,
            provider_attempts: 3,
            provider_backoff: Duration::from_secs(2),
            language: "Java".to_string(),
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_iterations == 0 {
            return Err(AgentError::Config("max_iterations must be at least 1".into()));
        }
        if self.final_list_size == 0 {
            return Err(AgentError::Config("final_list_size must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(AgentError::Config(format!("temperature {} is invalid", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub schema_version: u32,
    pub bug_id: String,
    pub run_seed: String,
    pub provider_id: String,
    pub messages: Vec<ChatMessage>,
    /// Model turns taken.
    pub iterations_used: usize,
    pub raw_final_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl AgentTranscript {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }

    /// Names of the tools executed in this transcript.
    pub fn executed_tools(&self) -> Vec<&str> {
        self.messages.iter().filter(|m| m.role == Role::Tool).map(|m| m.content.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("bug {0} has an empty summary and description")]
    EmptyBug(String),
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("chat provider failed after {attempts} attempt(s): {message}")]
    Provider { attempts: u32, message: String },
    #[error("final answer could not be parsed after a corrective reprompt")]
    Unparseable,
    #[error("model gave no final answer within {0} iterations")]
    NoAnswer(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRun {
    pub predictions: Vec<RawPrediction>,
    pub transcript: AgentTranscript,
}

/// A failed bug with the conversation up to the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct AgentFailure {
    pub error: AgentError,
    pub transcript: AgentTranscript,
}

fn cap_chars(text: String, cap: Option<usize>) -> String {
    let Some(cap) = cap else { return text };
    match text.char_indices().nth(cap) {
        Some((cut, _)) => {
            let dropped = text[cut..].chars().count();
            format!("{}\n[... {dropped} more characters omitted]", &text[..cut])
        }
        None => text,
    }
}

fn call_with_retry(
    provider: &dyn ChatProvider,
    request: &ChatRequest<'_>,
    config: &AgentConfig,
) -> Result<ModelTurn, AgentError> {
    let attempts = config.provider_attempts.max(1);
    let mut attempt = 1;
    loop {
        match provider.complete(request) {
            Ok(turn) => return Ok(turn),
            Err(e) if e.retriable && attempt < attempts => {
                log::warn!("bug {}: provider attempt {attempt} failed: {}", request.bug_id, e.message);
                std::thread::sleep(backoff_delay(config.provider_backoff, attempt));
                attempt += 1;
            }
            Err(e) => return Err(AgentError::Provider { attempts: attempt, message: e.message }),
        }
    }
}

/// Runs the loop for one bug. One iteration is one model turn. Tool calls
/// are executed and fed back; on the last iteration the model is told to
/// answer and no tools are offered. An unreadable answer earns one
/// corrective reprompt if iterations remain.
// the failure carries the transcript so far; callers persist it
#[allow(clippy::result_large_err)]
pub fn run_localization(
    bug: &BugReport,
    tools: &ToolRegistry<'_>,
    provider: &dyn ChatProvider,
    config: &AgentConfig,
) -> Result<AgentRun, AgentFailure> {
    let mut transcript = AgentTranscript {
        schema_version: TRANSCRIPT_SCHEMA_VERSION,
        bug_id: bug.bug_id.clone(),
        run_seed: config.run_seed.clone(),
        provider_id: provider.id(),
        messages: Vec::new(),
        iterations_used: 0,
        raw_final_answer: String::new(),
        failure: None,
    };
    let fail = |mut transcript: AgentTranscript, error: AgentError| {
        transcript.failure = Some(error.to_string());
        AgentFailure { error, transcript }
    };
    if let Err(e) = config.validate() {
        return Err(fail(transcript, e));
    }
    let tools = tools.clone().restrict(&config.tool_whitelist);
    let candidates = tools.shortlist_len().unwrap_or(0);
    transcript.messages = match build_prompt(bug, config, tools.enabled(), candidates) {
        Ok(m) => m,
        Err(e) => return Err(fail(transcript, e)),
    };
    let schemas: Vec<ToolSchema> = tools.schemas();
    let mut reprompted = false;

    for iteration in 1..=config.max_iterations {
        let last = iteration == config.max_iterations;
        if last {
            transcript.messages.push(ChatMessage::user(prompt::forced_answer_message(config)));
        }
        let request = ChatRequest {
            bug_id: &bug.bug_id,
            messages: &transcript.messages,
            tools: if last { &[] } else { &schemas },
            temperature: config.temperature,
        };
        let turn = match call_with_retry(provider, &request, config) {
            Ok(turn) => turn,
            Err(e) => return Err(fail(transcript, e)),
        };
        transcript.iterations_used = iteration;
        match turn {
            ModelTurn::ToolCall { content, mut call } => {
                if call.id.is_empty() {
                    call.id = format!("call_{iteration}");
                }
                transcript.messages.push(ChatMessage::model_call(content, call.clone()));
                if last {
                    return Err(fail(transcript, AgentError::NoAnswer(config.max_iterations)));
                }
                let result = tools.dispatch(&call.name, &call.args);
                log::debug!("bug {}: {} -> ok={}", bug.bug_id, call.name, result.ok);
                let text = cap_chars(result.render(), config.tool_result_char_cap);
                transcript.messages.push(ChatMessage::tool(&call, text));
            }
            ModelTurn::Final { content } => {
                transcript.messages.push(ChatMessage::model(content.clone()));
                match parse_final_answer(&content, config.final_list_size) {
                    Ok(predictions) => {
                        transcript.raw_final_answer = content;
                        return Ok(AgentRun { predictions, transcript });
                    }
                    Err(_) if !reprompted && !last => {
                        reprompted = true;
                        transcript.messages.push(ChatMessage::user(prompt::corrective_message(config)));
                    }
                    Err(_) => {
                        transcript.raw_final_answer = content;
                        return Err(fail(transcript, AgentError::Unparseable));
                    }
                }
            }
        }
    }
    Err(fail(transcript, AgentError::NoAnswer(config.max_iterations)))
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use serde_json::json;

    use super::*;
    use crate::code_index::{CodeIndex, MethodRecord, SourceFileRecord};

    fn index() -> CodeIndex {
        CodeIndex::from_records(
            "v",
            "java",
            [SourceFileRecord {
                fq_path: "org/jfree/chart/AutoScale.java".into(),
                basename: "AutoScale.java".into(),
                methods: vec![MethodRecord {
                    name: "zoomOut".into(),
                    signature: "zoomOut(double)".into(),
                    body: "{ range.expand(f); }".into(),
                    has_body: true,
                }],
                parse_ok: true,
                parse_error: None,
                digest: String::new(),
            }],
        )
    }

    fn bug() -> BugReport {
        BugReport { bug_id: "B1".into(), summary: "NPE in AutoScale.zoomOut".into(), ..Default::default() }
    }

    fn fast() -> AgentConfig {
        AgentConfig { provider_backoff: Duration::ZERO, ..AgentConfig::default() }
    }

    fn answer(paths: &[&str]) -> ModelTurn {
        let lines: Vec<String> = paths.iter().enumerate().map(|(i, p)| format!("{}. {p} — r", i + 1)).collect();
        ModelTurn::Final { content: format!("```ranking\n{}\n```", lines.join("\n")) }
    }

    fn call(name: &str, args: Value) -> ModelTurn {
        let args = args.as_object().unwrap().clone().into_iter().collect();
        ModelTurn::ToolCall { content: String::new(), call: ToolCall { id: String::new(), name: name.into(), args } }
    }

    fn scripted(turns: Vec<ModelTurn>, repeat_last: bool) -> ScriptedProvider {
        ScriptedProvider::single(Script { turns, repeat_last })
    }

    #[test]
    fn immediate_answer() {
        let idx = index();
        let run = run_localization(
            &bug(),
            &ToolRegistry::new(&idx, None),
            &scripted(vec![answer(&["a/A.java"])], false),
            &fast(),
        )
        .unwrap();
        assert_eq!(run.transcript.iterations_used, 1);
        assert_eq!(run.predictions[0].fq_path_claim, "a/A.java");
    }

    #[test]
    fn tool_result_fed_back_before_answer() {
        let idx = index();
        let p = scripted(
            vec![call("search_method", json!({"name": "zoomOut"})), answer(&["org/jfree/chart/AutoScale.java"])],
            false,
        );
        let run = run_localization(&bug(), &ToolRegistry::new(&idx, None), &p, &fast()).unwrap();
        let roles: Vec<Role> = run.transcript.messages.iter().map(|m| m.role).collect();
        assert_eq!(roles, vec![Role::System, Role::User, Role::Model, Role::Tool, Role::Model]);
        assert_eq!(run.transcript.messages[3].tool_result.as_deref(), Some("org/jfree/chart/AutoScale.java"));
        assert_eq!(run.transcript.iterations_used, 2);
    }

    #[test]
    fn stalling_model_is_stopped_at_the_limit() {
        let idx = index();
        let p = scripted(vec![call("search_file", json!({"name": "X.java"}))], true);
        let err = run_localization(&bug(), &ToolRegistry::new(&idx, None), &p, &fast()).unwrap_err();
        assert_eq!(err.error, AgentError::NoAnswer(10));
        let t = &err.transcript;
        assert_eq!(t.iterations_used, 10);
        assert_eq!(t.messages.iter().filter(|m| m.role == Role::Model).count(), 10);
        let forced = t.messages.iter().filter(|m| m.role == Role::User && m.content.contains("the last one")).count();
        assert_eq!(forced, 1);
    }

    #[test]
    fn one_corrective_reprompt() {
        let idx = index();
        let tools = ToolRegistry::new(&idx, None);
        let prose = ModelTurn::Final { content: "The bug is probably in the zoom code.".into() };
        let run =
            run_localization(&bug(), &tools, &scripted(vec![prose.clone(), answer(&["a/A.java"])], false), &fast())
                .unwrap();
        assert_eq!(run.transcript.iterations_used, 2);
        let err = run_localization(&bug(), &tools, &scripted(vec![prose], true), &fast()).unwrap_err();
        assert_eq!(err.error, AgentError::Unparseable);
        assert_eq!(err.transcript.iterations_used, 2);
    }

    struct Flaky {
        failures: usize,
        calls: AtomicUsize,
    }

    impl ChatProvider for Flaky {
        fn id(&self) -> String {
            "flaky".into()
        }

        fn complete(&self, _: &ChatRequest<'_>) -> Result<ModelTurn, ProviderError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) < self.failures {
                return Err(ProviderError::retriable("503"));
            }
            Ok(answer(&["a/A.java"]))
        }
    }

    #[test]
    fn provider_retries_then_fails_the_bug() {
        let idx = index();
        let tools = ToolRegistry::new(&idx, None);
        let ok = Flaky { failures: 2, calls: AtomicUsize::new(0) };
        assert!(run_localization(&bug(), &tools, &ok, &fast()).is_ok());
        let down = Flaky { failures: 99, calls: AtomicUsize::new(0) };
        let err = run_localization(&bug(), &tools, &down, &fast()).unwrap_err();
        assert!(matches!(err.error, AgentError::Provider { attempts: 3, .. }));
        assert_eq!(down.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn disabled_tools_are_not_executed() {
        let idx = index();
        let mut config = fast();
        config.tool_whitelist = [ToolName::SearchFile].into();
        let p = scripted(vec![call("search_method", json!({"name": "zoomOut"})), answer(&["a/A.java"])], false);
        let run = run_localization(&bug(), &ToolRegistry::new(&idx, None), &p, &config).unwrap();
        let tool_msg = &run.transcript.messages[3];
        assert!(tool_msg.tool_result.as_deref().unwrap().contains("tool unavailable"));
    }

    #[test]
    fn tool_results_are_capped() {
        assert_eq!(cap_chars("abcdef".into(), Some(3)), "abc\n[... 3 more characters omitted]");
        assert_eq!(cap_chars("abc".into(), Some(3)), "abc");
        assert_eq!(cap_chars("abc".into(), None), "abc");
    }

    #[test]
    fn invalid_config_and_blank_bug_fail_cleanly() {
        let idx = index();
        let tools = ToolRegistry::new(&idx, None);
        let p = scripted(vec![answer(&["a"])], false);
        let cfg = AgentConfig { max_iterations: 0, ..fast() };
        assert!(matches!(run_localization(&bug(), &tools, &p, &cfg).unwrap_err().error, AgentError::Config(_)));
        let blank = BugReport { bug_id: "x".into(), ..Default::default() };
        assert!(matches!(run_localization(&blank, &tools, &p, &fast()).unwrap_err().error, AgentError::EmptyBug(_)));
    }
}
