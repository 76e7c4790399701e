// SPDX-License-Identifier: Apache-2.0

//! Chat-completion backend. Requests are rendered from the text templates
//! under `templates/`, replies carry one fenced JSON block.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse, SolveContext};
use crate::minilang::program_text;
use crate::pathfinder::{ConcreteInputs, ConstraintKind, Verdict};

const SYSTEM: &str = include_str!("../../templates/system.txt");
const USER: &str = include_str!("../../templates/user.txt");
const RETRY: &str = include_str!("../../templates/retry.txt");

const ATTEMPTS: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    pub key: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> RemoteConfig {
        RemoteConfig {
            url: url.into(),
            key: None,
            model: model.into(),
            timeout_secs: 120,
            max_in_flight: 2,
        }
    }

    /// Reads `CONCOV_LLM_URL`, `CONCOV_LLM_KEY` and `CONCOV_LLM_MODEL`;
    /// `None` when no URL is set.
    pub fn from_env() -> Option<RemoteConfig> {
        let url = std::env::var("CONCOV_LLM_URL").ok().filter(|u| !u.is_empty())?;
        let model = std::env::var("CONCOV_LLM_MODEL").unwrap_or_else(|_| "default".into());
        let mut cfg = RemoteConfig::new(url, model);
        cfg.key = std::env::var("CONCOV_LLM_KEY").ok().filter(|k| !k.is_empty());
        Some(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: String) -> ChatMessage {
        ChatMessage {
            role: role.into(),
            content,
        }
    }
}

/// Sends one conversation and returns the raw response body.
pub trait Transport: Send + Sync {
    fn send(&self, messages: &[ChatMessage]) -> Result<String, String>;
}

pub struct HttpTransport {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(cfg: RemoteConfig) -> HttpTransport {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build();
        HttpTransport { cfg, agent }
    }
}

impl Transport for HttpTransport {
    fn send(&self, messages: &[ChatMessage]) -> Result<String, String> {
        let mut req = self.agent.post(&self.cfg.url);
        if let Some(k) = &self.cfg.key {
            req = req.set("Authorization", &format!("Bearer {k}"));
        }
        let body = serde_json::json!({ "model": self.cfg.model, "messages": messages });
        let resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.into_string().map_err(|e| e.to_string())
    }
}

/// Replays canned bodies in order and records every conversation sent.
#[derive(Default)]
pub struct ScriptedTransport {
    replies: Mutex<VecDeque<Result<String, String>>>,
    sent: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedTransport {
    pub fn new<I, S>(replies: I) -> ScriptedTransport
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedTransport {
            replies: Mutex::new(replies.into_iter().map(|s| Ok(s.into())).collect()),
            sent: Mutex::default(),
        }
    }

    /// A transport whose every send fails.
    pub fn failing(msg: &str) -> ScriptedTransport {
        let t = ScriptedTransport::default();
        t.replies.lock().unwrap().push_back(Err(msg.into()));
        t
    }

    pub fn sent(&self) -> Vec<Vec<ChatMessage>> {
        self.sent.lock().unwrap().clone()
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, messages: &[ChatMessage]) -> Result<String, String> {
        self.sent.lock().unwrap().push(messages.to_vec());
        let mut q = self.replies.lock().unwrap();
        match q.pop_front() {
            Some(Err(e)) => {
                q.push_front(Err(e.clone()));
                Err(e)
            }
            Some(ok) => ok,
            None => Err("script exhausted".into()),
        }
    }
}

/// Counting gate bounding concurrent sends.
struct Gate {
    cap: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn with<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut n = self.busy.lock().unwrap();
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        drop(n);
        let out = f();
        *self.busy.lock().unwrap() -= 1;
        self.freed.notify_one();
        out
    }
}

pub struct RemoteReasoner {
    cfg: RemoteConfig,
    transport: Box<dyn Transport>,
    gate: Gate,
}

#[derive(Deserialize)]
struct Reply {
    verdict: Verdict,
    concrete_inputs: Option<ConcreteInputs>,
    #[serde(default)]
    rationale: String,
}

fn strip_comments(t: &str) -> String {
    t.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn fill(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = strip_comments(template);
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

fn bullets(items: impl IntoIterator<Item = String>) -> String {
    let lines: Vec<String> = items.into_iter().map(|s| format!("- {s}")).collect();
    if lines.is_empty() {
        "(none)".into()
    } else {
        lines.join("\n")
    }
}

/// The initial conversation for one request.
pub fn render_messages(req: &ReasonerRequest, ctx: &SolveContext<'_>) -> Vec<ChatMessage> {
    let params: Vec<String> = req
        .entry
        .params
        .iter()
        .map(|p| format!("{}: {}", p.name, p.ty))
        .collect();
    let mut pre: Vec<String> = req.preconditions.setup.iter().map(|a| a.to_string()).collect();
    if let Some(inv) = &req.preconditions.partner {
        let args: Vec<String> = inv.args.iter().map(|a| a.to_string()).collect();
        pre.push(format!("{}({}) has run to completion", inv.function, args.join(", ")));
    }
    let v = &req.vocabulary;
    let vocab = [
        format!("globals: {}", v.globals.join("; ")),
        format!("records: {}", v.records.join("; ")),
        format!("functions: {}", v.functions.join("; ")),
    ];
    let user = fill(
        USER,
        &[
            ("target_location", req.target_location.clone()),
            ("entry", format!("{}({})", req.entry.function, params.join(", "))),
            ("feasible_path", req.feasible_path.join(" -> ")),
            ("constraints", req.summary.text.trim_end().to_string()),
            ("vocabulary", bullets(vocab)),
            ("preconditions", bullets(pre)),
            ("program", program_text(ctx.program).trim_end().to_string()),
        ],
    );
    vec![
        ChatMessage::new("system", strip_comments(SYSTEM)),
        ChatMessage::new("user", user),
    ]
}

/// Message text from a chat-completion body, a bare message object, or
/// plain text.
fn content_of(body: &str) -> String {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return body.to_string();
    };
    let picks = [
        v.pointer("/choices/0/message/content"),
        v.pointer("/message/content"),
        v.pointer("/content"),
    ];
    let found = picks.into_iter().flatten().find_map(|c| c.as_str().map(str::to_string));
    found.unwrap_or_else(|| body.to_string())
}

fn fenced_json(text: &str) -> &str {
    let Some(start) = text.find("```json") else {
        return text.trim();
    };
    let rest = &text[start + "```json".len()..];
    rest.find("```").map_or(rest, |end| &rest[..end]).trim()
}

/// Parses a reply body into a response for an entry function.
pub fn parse_reply(body: &str, entry: &str) -> Result<ReasonerResponse, String> {
    let content = content_of(body);
    let reply: Reply = serde_json::from_str(fenced_json(&content)).map_err(|e| format!("invalid JSON reply: {e}"))?;
    let (args, setup) = match (reply.verdict, reply.concrete_inputs) {
        (Verdict::Sat, None) => return Err("SAT reply without `concrete_inputs`".into()),
        (Verdict::Sat, Some(ci)) if ci.entry != entry => {
            return Err(format!("reply targets `{}`, expected `{entry}`", ci.entry))
        }
        (Verdict::Sat, Some(ci)) => (Some(ci.args), ci.setup),
        _ => (None, Vec::new()),
    };
    Ok(ReasonerResponse {
        verdict: reply.verdict,
        args,
        setup,
        rationale: reply.rationale,
    })
}

impl RemoteReasoner {
    pub fn new(cfg: RemoteConfig, transport: Box<dyn Transport>) -> RemoteReasoner {
        let gate = Gate {
            cap: cfg.max_in_flight.max(1),
            busy: Mutex::new(0),
            freed: Condvar::new(),
        };
        RemoteReasoner { cfg, transport, gate }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }
}

impl Reasoner for RemoteReasoner {
    fn name(&self) -> &'static str {
        "llm"
    }

    fn capabilities(&self) -> &'static [ConstraintKind] {
        &[
            ConstraintKind::ParamArith,
            ConstraintKind::GlobalState,
            ConstraintKind::LoopExit,
            ConstraintKind::Opaque,
        ]
    }

    fn solve(&self, req: &ReasonerRequest, ctx: &SolveContext<'_>) -> Result<ReasonerResponse, ReasonerError> {
        let mut messages = render_messages(req, ctx);
        let mut last = String::new();
        for _ in 0..ATTEMPTS {
            let body = self
                .gate
                .with(|| self.transport.send(&messages))
                .map_err(ReasonerError::ReasonerUnavailable)?;
            match parse_reply(&body, &req.entry.function) {
                Ok(r) => return Ok(r),
                Err(e) => {
                    messages.push(ChatMessage::new("assistant", content_of(&body)));
                    messages.push(ChatMessage::new("user", fill(RETRY, &[("error", e.clone())])));
                    last = e;
                }
            }
        }
        Ok(ReasonerResponse::unknown(format!("unparseable: {last}")))
    }

    fn retries_unknown(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathfinder::ArgValue;

    #[test]
    fn reply_content_is_extracted() {
        let inner = "Reasoning...\n```json\n{\"verdict\":\"SAT\",\"concrete_inputs\":{\"entry\":\"f\",\"args\":[3],\"setup\":[]},\"rationale\":\"x\"}\n```\n";
        let body = serde_json::json!({"choices":[{"message":{"role":"assistant","content":inner}}]}).to_string();
        let r = parse_reply(&body, "f").unwrap();
        assert_eq!(r.verdict, Verdict::Sat);
        assert_eq!(r.args, Some(vec![ArgValue::Int(3)]));
        assert!(parse_reply(&body, "g").is_err());
        assert!(parse_reply("{\"verdict\":\"SAT\"}", "f").is_err());
        let r = parse_reply("{\"verdict\":\"UNSAT\",\"rationale\":\"no\"}", "f").unwrap();
        assert_eq!(r.verdict, Verdict::Unsat);
    }

    #[test]
    fn templates_fill_placeholders() {
        let s = fill("# hidden\nA {{x}} B {{x}}\n", &[("x", "1".into())]);
        assert_eq!(s, "A 1 B 1\n");
        assert!(!strip_comments(SYSTEM).contains("Reconstructed"));
    }

    #[test]
    fn gate_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let gate = Gate {
            cap: 2,
            busy: Mutex::new(0),
            freed: Condvar::new(),
        };
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| {
                    gate.with(|| {
                        let n = live.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(n, Ordering::SeqCst);
                        std::thread::sleep(Duration::from_millis(5));
                        live.fetch_sub(1, Ordering::SeqCst);
                    })
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
