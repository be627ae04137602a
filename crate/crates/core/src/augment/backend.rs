//! Text-generation backends: deterministic templates, or an external
//! chat-completion endpoint that falls back to templates on any failure.

use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

/// Environment variable holding the external backend credential.
pub const API_KEY_ENV: &str = "GROKFORGE_API_KEY";

pub const GRAPH_PARSING_PROMPT: &str = "You are graph gpt. You build graph based on the provided text.
Find all objects, their relations and types.

Pick one of the following types:
- Person
- Location
- Object (include everything that was not above)

Return the following format with numbering:
1. <Avatar; Film><director><James Cameron; Person>
2. <James Cameron; Person><directed><Titanic; Object>";

pub const QUESTION_FORMATTING_PROMPT: &str = "You are a question formatting assistant. Your task is to create questions based on the given relations and objects.

Use the provided examples as a guide for the question style. Ensure that the answer remains unchanged and enclosed in <a> tags.
You may rephrase one question, given the example format. Strictly follow the logic of given examples.
Connect it in the following logic: <obj1> -> <rel1> -> <rel2> -> <obj3>

Return numbered responses in format:
1. What is the director of the film that James Cameron produced?<a>Steven Spielberg</a>
2. Who directed the movie starring Tom Cruise?<a>Christopher Nolan</a>";

pub const ATOMIC_FACT_PROMPT: &str = "You are a helpful assistant that generates geographical facts.
    Generate new unique locations and their countries in the following format:
    Follow the style of the examples, but do not use the same locations.

    Rules:
    1. Use real locations and countries
    2. Each location should be unique
    3. DO NOT REUSE PROVIDED EXAMPLES
    4. Do not answer the question - only provide locations
    5. Do not use formatting except for numbering
    6. Generate equal amount of NEW!!! locations for following countries: {}
";

pub const DETAILED_FACT_PROMPT: &str = "You are a helpful assistant that generates geographical facts.
    Based on the provided examples, generate a paragraph for each location-country pair. Strictly follow the style and lenght of the provided examples Do not answer the question - only provide the paragraph with numbering. DO not return empty lines. One by one. Return the number according to the given data. Here are the examples:
    {}";

/// Fills the single `{}` slot of a prompt.
pub fn fill_prompt(prompt: &str, value: &str) -> String {
    prompt.replacen("{}", value, 1)
}

/// Named fill-in patterns used by template mode. `{x}` is the slot.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    pub comparison_questions: Vec<String>,
    /// `{label}`, `{site}`, `{adjective}`, `{kind}`, `{city}`, `{country}`,
    /// `{filler1}`, `{filler2}`.
    pub location_paragraph: String,
    pub fallback_paragraph: String,
}

impl Default for TemplateBank {
    fn default() -> Self {
        TemplateBank {
            comparison_questions: [
                "Are {a} and {b} both located in the same country?",
                "Are both {a} and {b} located in the same country?",
                "Is {a} located in the same country as {b}?",
                "Do {a} and {b} lie in the same country?",
            ]
            .map(String::from)
            .to_vec(),
            location_paragraph:
                "{label}: The {site} is a {adjective} {kind} located in {city}, {country}. {filler1} {filler2}".into(),
            fallback_paragraph: "{label}: {label} is a {adjective} place located in {country}. {filler1} {filler2}"
                .into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExternalConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout: Duration,
    /// Attempts after the first failure.
    pub retries: u32,
    /// Requests per batch call; calls are issued one at a time.
    pub max_in_flight: usize,
}

impl ExternalConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        ExternalConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout: Duration::from_secs(60),
            retries: 2,
            max_in_flight: 1,
        }
    }
}

#[derive(Debug)]
pub struct GenerationBackend {
    pub templates: TemplateBank,
    pub external: Option<ExternalConfig>,
    warnings: Mutex<Vec<String>>,
}

impl Default for GenerationBackend {
    fn default() -> Self {
        Self::template()
    }
}

impl GenerationBackend {
    pub fn template() -> Self {
        GenerationBackend {
            templates: TemplateBank::default(),
            external: None,
            warnings: Mutex::new(Vec::new()),
        }
    }

    pub fn external(config: ExternalConfig) -> Self {
        GenerationBackend {
            external: Some(config),
            ..Self::template()
        }
    }

    pub fn mode(&self) -> &'static str {
        if self.external.is_some() {
            "external"
        } else {
            "template"
        }
    }

    pub fn warn(&self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.lock().expect("warnings lock").push(msg);
    }

    /// Drains warnings recorded so far.
    pub fn take_warnings(&self) -> Vec<String> {
        std::mem::take(&mut *self.warnings.lock().expect("warnings lock"))
    }

    /// Runs one chat completion. `None` in template mode or after the retry
    /// budget is spent (a warning is recorded in that case).
    pub fn complete(&self, system: &str, user: &str) -> Option<String> {
        let cfg = self.external.as_ref()?;
        match chat_completion(cfg, system, user) {
            Ok(text) => Some(text),
            Err(e) => {
                self.warn(format!("external backend failed ({e}); falling back to templates"));
                None
            }
        }
    }
}

fn chat_completion(cfg: &ExternalConfig, system: &str, user: &str) -> Result<String, String> {
    let body = json!({
        "model": cfg.model,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
    });
    let key = std::env::var(API_KEY_ENV).ok();
    log::debug!(
        "POST {} (Authorization: {}) body: {body}",
        cfg.endpoint,
        if key.is_some() { "Bearer [REDACTED]" } else { "none" }
    );
    let client = reqwest::blocking::Client::builder()
        .timeout(cfg.timeout)
        .build()
        .map_err(|e| e.to_string())?;
    let mut last_err = String::new();
    for attempt in 0..=cfg.retries {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(200 * u64::from(attempt)));
        }
        let mut req = client.post(&cfg.endpoint).json(&body);
        if let Some(k) = &key {
            req = req.bearer_auth(k);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => {
                last_err = e.to_string();
                continue;
            }
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => {
                last_err = e.to_string();
                continue;
            }
        };
        log::debug!("response {status}: {text}");
        if !status.is_success() {
            last_err = format!("HTTP {status}");
            continue;
        }
        match extract_content(&text) {
            Some(c) => return Ok(c),
            None => last_err = "response has no choices[0].message.content".into(),
        }
    }
    Err(last_err)
}

fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.pointer("/choices/0/message/content")?.as_str().map(str::to_owned)
}

/// Strips a leading `N.` / `N)` enumeration marker.
pub fn strip_numbering(line: &str) -> &str {
    let t = line.trim();
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = t[digits..].strip_prefix(['.', ')']) {
            return rest.trim_start();
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_slots() {
        let p = fill_prompt(ATOMIC_FACT_PROMPT, "India, France");
        assert!(p.contains("following countries: India, France"));
        assert!(!p.contains("{}"));
    }

    #[test]
    fn numbering() {
        assert_eq!(
            strip_numbering("12. Paris -- country -- France"),
            "Paris -- country -- France"
        );
        assert_eq!(strip_numbering("3) x"), "x");
        assert_eq!(strip_numbering("1964"), "1964");
    }

    #[test]
    fn content_extraction() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(extract_content(body).as_deref(), Some("hi"));
        assert_eq!(extract_content("{}"), None);
    }

    #[test]
    fn template_mode_never_calls_out() {
        let b = GenerationBackend::template();
        assert_eq!(b.complete("s", "u"), None);
        assert!(b.take_warnings().is_empty());
    }
}
