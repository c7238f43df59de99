use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{ChatMessage, Role, ToolCall};
use crate::archive::write_atomic;
use crate::http::JsonTransport;
use crate::tools::ToolSchema;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct ProviderError {
    pub message: String,
    pub retriable: bool,
}

impl ProviderError {
    pub fn retriable(message: impl Into<String>) -> Self {
        Self { message: message.into(), retriable: true }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self { message: message.into(), retriable: false }
    }
}

/// Everything a provider needs for one model turn. Providers keep no
/// conversation state between calls.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub bug_id: &'a str,
    pub messages: &'a [ChatMessage],
    /// Empty when the model must answer without tools.
    pub tools: &'a [ToolSchema],
    pub temperature: f64,
}

impl ChatRequest<'_> {
    /// Model turns already in the history.
    pub fn model_turns(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::Model).count()
    }
}

/// A model reply: a tool call or final text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTurn {
    ToolCall {
        #[serde(default, skip_serializing_if = "String::is_empty")]
        content: String,
        call: ToolCall,
    },
    Final {
        content: String,
    },
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &ChatRequest<'_>) -> Result<ModelTurn, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<ModelTurn, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for Box<P> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<ModelTurn, ProviderError> {
        (**self).complete(request)
    }
}

pub const REPLAY_SCHEMA_VERSION: u32 = 1;

/// Canned replies for one bug.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub turns: Vec<ModelTurn>,
    /// Repeat the last turn forever once the script runs out.
    #[serde(default)]
    pub repeat_last: bool,
}

/// Replayable sessions keyed by bug id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayFile {
    pub schema_version: u32,
    pub sessions: BTreeMap<String, Script>,
}

impl ReplayFile {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ProviderError::fatal(format!("{}: {e}", path.display())))?;
        let file: ReplayFile =
            serde_json::from_str(&text).map_err(|e| ProviderError::fatal(format!("{}: {e}", path.display())))?;
        if file.schema_version != REPLAY_SCHEMA_VERSION {
            return Err(ProviderError::fatal(format!(
                "{}: replay schema version {} is not supported (expected {REPLAY_SCHEMA_VERSION})",
                path.display(),
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }
}

/// Replays canned turns. The reply is chosen by how many model turns the
/// request already holds, so replays are deterministic and need no state.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    sessions: BTreeMap<String, Script>,
    fallback: Option<Script>,
}

impl ScriptedProvider {
    pub fn new(replay: ReplayFile) -> Self {
        Self { sessions: replay.sessions, fallback: None }
    }

    /// One script used for every bug.
    pub fn single(script: Script) -> Self {
        Self { sessions: BTreeMap::new(), fallback: Some(script) }
    }
}

impl ChatProvider for ScriptedProvider {
    fn id(&self) -> String {
        "scripted".to_string()
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<ModelTurn, ProviderError> {
        let script = self
            .sessions
            .get(request.bug_id)
            .or(self.fallback.as_ref())
            .ok_or_else(|| ProviderError::fatal(format!("no scripted session for bug {}", request.bug_id)))?;
        let i = request.model_turns();
        match script.turns.get(i) {
            Some(turn) => Ok(turn.clone()),
            None if script.repeat_last && !script.turns.is_empty() => Ok(script.turns[script.turns.len() - 1].clone()),
            None => Err(ProviderError::fatal(format!(
                "scripted session for bug {} ran out after {i} turns",
                request.bug_id
            ))),
        }
    }
}

/// Wraps a provider and records each bug's successful turns in replay form.
pub struct RecordingProvider<P> {
    inner: P,
    sessions: Mutex<BTreeMap<String, Script>>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, sessions: Mutex::new(BTreeMap::new()) }
    }

    pub fn replay(&self) -> ReplayFile {
        let sessions = self.sessions.lock().unwrap_or_else(|e| e.into_inner()).clone();
        ReplayFile { schema_version: REPLAY_SCHEMA_VERSION, sessions }
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<ModelTurn, ProviderError> {
        let turn = self.inner.complete(request)?;
        let mut sessions = self.sessions.lock().unwrap_or_else(|e| e.into_inner());
        let script = sessions.entry(request.bug_id.to_string()).or_default();
        // A new run of the same bug starts over.
        script.turns.truncate(request.model_turns());
        script.turns.push(turn.clone());
        Ok(turn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAiChatConfig {
    pub base_url: String,
    pub model: String,
}

impl Default for OpenAiChatConfig {
    fn default() -> Self {
        Self { base_url: "https://api.openai.com/v1".to_string(), model: "gpt-4o".to_string() }
    }
}

/// OpenAI-compatible `/chat/completions` with function calling.
pub struct OpenAiChatProvider {
    config: OpenAiChatConfig,
    api_key: String,
    transport: Arc<dyn JsonTransport>,
}

impl OpenAiChatProvider {
    pub fn new(config: OpenAiChatConfig, api_key: String, transport: Arc<dyn JsonTransport>) -> Self {
        Self { config, api_key, transport }
    }

    pub fn request_body(&self, request: &ChatRequest<'_>) -> Value {
        let messages: Vec<Value> = request.messages.iter().map(wire_message).collect();
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
        });
        if !request.tools.is_empty() {
            let tools: Vec<Value> = request
                .tools
                .iter()
                .map(|t| {
                    json!({
                        "type": "function",
                        "function": { "name": t.name.as_str(), "description": t.description, "parameters": t.parameters },
                    })
                })
                .collect();
            body["tools"] = Value::Array(tools);
            body["parallel_tool_calls"] = Value::Bool(false);
        }
        body
    }
}

fn wire_message(m: &ChatMessage) -> Value {
    match m.role {
        Role::System => json!({ "role": "system", "content": m.content }),
        Role::User => json!({ "role": "user", "content": m.content }),
        Role::Model => match &m.tool_call {
            Some(call) => json!({
                "role": "assistant",
                "content": if m.content.is_empty() { Value::Null } else { Value::String(m.content.clone()) },
                "tool_calls": [{
                    "id": call.id,
                    "type": "function",
                    "function": {
                        "name": call.name,
                        "arguments": serde_json::to_string(&call.args).unwrap_or_else(|_| "{}".into()),
                    },
                }],
            }),
            None => json!({ "role": "assistant", "content": m.content }),
        },
        Role::Tool => json!({
            "role": "tool",
            "tool_call_id": m.tool_call_id.clone().unwrap_or_default(),
            "content": m.tool_result.clone().unwrap_or_default(),
        }),
    }
}

/// Reads the first choice of a chat completion response.
pub fn parse_chat_response(body: &Value) -> Result<ModelTurn, ProviderError> {
    let message = body.pointer("/choices/0/message").ok_or_else(|| {
        ProviderError::fatal(format!("response has no choices: {}", truncate(&body.to_string(), 300)))
    })?;
    let content = message.get("content").and_then(Value::as_str).unwrap_or_default().to_string();
    if let Some(call) = message.get("tool_calls").and_then(Value::as_array).and_then(|c| c.first()) {
        let name = call.pointer("/function/name").and_then(Value::as_str).unwrap_or_default().to_string();
        let raw_args = call.pointer("/function/arguments").and_then(Value::as_str).unwrap_or("{}");
        let args = match serde_json::from_str::<BTreeMap<String, Value>>(raw_args) {
            Ok(args) => args,
            Err(e) => {
                log::warn!("tool call {name}: unreadable arguments {raw_args:?}: {e}");
                BTreeMap::new()
            }
        };
        let id = call.get("id").and_then(Value::as_str).unwrap_or_default().to_string();
        return Ok(ModelTurn::ToolCall { content, call: ToolCall { id, name, args } });
    }
    Ok(ModelTurn::Final { content })
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

impl ChatProvider for OpenAiChatProvider {
    fn id(&self) -> String {
        format!("openai:{}", self.config.model)
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<ModelTurn, ProviderError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = self.request_body(request);
        let response = self
            .transport
            .post_json(&url, Some(&self.api_key), &body)
            .map_err(|e| ProviderError { message: e.message, retriable: e.retriable })?;
        parse_chat_response(&response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::TransportError;
    use crate::tools::ToolName;

    fn final_turn(s: &str) -> ModelTurn {
        ModelTurn::Final { content: s.into() }
    }

    fn req<'a>(messages: &'a [ChatMessage]) -> ChatRequest<'a> {
        ChatRequest { bug_id: "b1", messages, tools: &[], temperature: 1.0 }
    }

    #[test]
    fn scripted_turn_follows_history_length() {
        let p = ScriptedProvider::single(Script { turns: vec![final_turn("a"), final_turn("b")], repeat_last: false });
        let mut history = vec![ChatMessage::system("s")];
        assert_eq!(p.complete(&req(&history)).unwrap(), final_turn("a"));
        history.push(ChatMessage::model("a"));
        assert_eq!(p.complete(&req(&history)).unwrap(), final_turn("b"));
        history.push(ChatMessage::model("b"));
        assert!(!p.complete(&req(&history)).unwrap_err().retriable);
    }

    #[test]
    fn repeat_last_never_runs_out() {
        let p = ScriptedProvider::single(Script { turns: vec![final_turn("x")], repeat_last: true });
        let history: Vec<ChatMessage> = (0..20).map(|_| ChatMessage::model("x")).collect();
        assert_eq!(p.complete(&req(&history)).unwrap(), final_turn("x"));
    }

    #[test]
    fn recording_roundtrips_through_replay() {
        let inner =
            ScriptedProvider::single(Script { turns: vec![final_turn("a"), final_turn("b")], repeat_last: false });
        let rec = RecordingProvider::new(inner);
        let mut history = vec![ChatMessage::system("s")];
        rec.complete(&req(&history)).unwrap();
        history.push(ChatMessage::model("a"));
        rec.complete(&req(&history)).unwrap();
        let replay = rec.replay();
        assert_eq!(replay.sessions["b1"].turns, vec![final_turn("a"), final_turn("b")]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        replay.save(&path).unwrap();
        assert_eq!(ReplayFile::load(&path).unwrap(), replay);
    }

    #[test]
    fn wire_format_mapping() {
        let p = OpenAiChatProvider::new(OpenAiChatConfig::default(), "k".into(), Arc::new(Unreachable));
        let call = ToolCall {
            id: "call_1".into(),
            name: "search_method".into(),
            args: [("name".to_string(), json!("zoomOut"))].into(),
        };
        let history = vec![
            ChatMessage::system("s"),
            ChatMessage::user("u"),
            ChatMessage::model_call("", call.clone()),
            ChatMessage::tool(&call, "a/AutoScale.java"),
        ];
        let schemas = [ToolName::SearchMethod.schema()];
        let body = p.request_body(&ChatRequest { bug_id: "b", messages: &history, tools: &schemas, temperature: 1.0 });
        assert_eq!(body["messages"][2]["tool_calls"][0]["function"]["arguments"], json!("{\"name\":\"zoomOut\"}"));
        assert_eq!(body["messages"][3]["tool_call_id"], json!("call_1"));
        assert_eq!(body["tools"][0]["function"]["name"], json!("search_method"));
        let no_tools = p.request_body(&req(&history));
        assert!(no_tools.get("tools").is_none());

        let resp = json!({"choices": [{"message": {"content": null, "tool_calls": [
            {"id": "c9", "type": "function", "function": {"name": "search_file", "arguments": "{\"name\":\"A.java\"}"}}
        ]}}]});
        match parse_chat_response(&resp).unwrap() {
            ModelTurn::ToolCall { call, .. } => {
                assert_eq!(call.name, "search_file");
                assert_eq!(call.args["name"], json!("A.java"));
                assert_eq!(call.id, "c9");
            }
            other => panic!("{other:?}"),
        }
        let resp = json!({"choices": [{"message": {"content": "done"}}]});
        assert_eq!(parse_chat_response(&resp).unwrap(), final_turn("done"));
        assert!(parse_chat_response(&json!({"error": "x"})).is_err());
    }

    struct Unreachable;

    impl JsonTransport for Unreachable {
        fn post_json(&self, _: &str, _: Option<&str>, _: &Value) -> Result<Value, TransportError> {
            Err(TransportError::retriable("offline"))
        }
    }
}
