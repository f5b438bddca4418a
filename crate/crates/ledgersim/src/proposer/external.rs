//! External chat-completion proposal source.
//!
//! Sends a system message carrying the persona and core financial status,
//! the trailing conversation window, and the assembled next-prompt; parses
//! the response against the plan schema and reprompts with the parse error
//! up to the configured retry count before giving up for the day.

use crate::backend::{
    BackendError, ChatMessage, ChatRequest, ChatTransport, ExternalEndpointConfig,
    HttpChatTransport,
};
use crate::persona::AugmentedPersona;
use crate::proposer::{parse_plan, ConversationWindow, DailyPlan, ProposeError};
use crate::rules::PromptSpec;
use std::sync::{Arc, Condvar, Mutex};

pub struct ExternalProposer {
    config: ExternalEndpointConfig,
    transport: Arc<dyn ChatTransport>,
    gate: Gate,
}

/// Bounds concurrent in-flight requests across worker threads.
struct Gate {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(max: usize) -> Gate {
        Gate {
            slots: Mutex::new(max.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.freed.wait(slots).unwrap();
        }
        *slots -= 1;
    }

    fn release(&self) {
        *self.slots.lock().unwrap() += 1;
        self.freed.notify_one();
    }
}

impl ExternalProposer {
    pub fn new(config: ExternalEndpointConfig, transport: Arc<dyn ChatTransport>) -> Self {
        let gate = Gate::new(config.max_concurrency);
        ExternalProposer {
            config,
            transport,
            gate,
        }
    }

    /// Builds the HTTP transport from the endpoint config.
    pub fn from_config(config: ExternalEndpointConfig) -> Result<Self, BackendError> {
        let transport = Arc::new(HttpChatTransport::new(config.clone())?);
        Ok(ExternalProposer::new(config, transport))
    }

    fn system_prompt(persona: &AugmentedPersona) -> String {
        // Schedules are executed by the engine, not the model; only the core
        // status fields enter the system prompt.
        let mut profile =
            serde_json::to_value(&persona.user_financial_profile).expect("profile serializes");
        if let Some(object) = profile.as_object_mut() {
            object.remove("subscriptions");
            object.remove("recurring_variable_bills");
        }
        format!(
            "You simulate the daily card activity of one user.\nPersona: {}\nFinancial status: {}\nEach day you receive the account state and must reply with a JSON daily plan: {{\"reasoning\": string, \"transactions\": [{{\"merchant_name\", \"merchant_type\", \"card_present_or_not\", \"amount\", \"kind\"}}]}} where kind is one of \"purchase\", \"payment\", \"cancel_subscription\". Amounts are decimal strings. Reply with JSON only.",
            serde_json::to_string(&persona.user_persona).expect("persona serializes"),
            profile
        )
    }

    pub fn propose(
        &self,
        prompt: &PromptSpec,
        persona: &AugmentedPersona,
        window: &ConversationWindow,
    ) -> Result<DailyPlan, ProposeError> {
        let mut messages = vec![ChatMessage::system(Self::system_prompt(persona))];
        for entry in window.entries() {
            messages.push(ChatMessage::user(entry.prompt_text.clone()));
            messages.push(ChatMessage::assistant(entry.plan_json.clone()));
        }
        messages.push(ChatMessage::user(prompt.render()));

        let mut last_error = String::new();
        let mut last_raw = String::new();
        let attempts = self.config.parse_retries + 1;
        for _ in 0..attempts {
            let request = ChatRequest {
                model: self.config.model.clone(),
                messages: messages.clone(),
                temperature: self.config.temperature,
            };
            self.gate.acquire();
            let result = self.transport.complete(&request);
            self.gate.release();
            let raw = result?;
            let candidate = extract_json(&raw);
            match parse_plan(candidate, prompt.date) {
                Ok(plan) => return Ok(plan),
                Err(e) => {
                    last_error = e.to_string();
                    last_raw = raw.clone();
                    messages.push(ChatMessage::assistant(raw));
                    messages.push(ChatMessage::user(format!(
                        "That response failed validation ({}). Resend the full plan as JSON only.",
                        e
                    )));
                }
            }
        }
        Err(ProposeError::PlanUnavailable {
            attempts,
            last_error,
            raw: last_raw,
        })
    }
}

/// Tolerates prose or code fences around the plan object.
fn extract_json(text: &str) -> &str {
    match (text.find('{'), text.rfind('}')) {
        (Some(start), Some(end)) if end > start => &text[start..=end],
        _ => text,
    }
}
