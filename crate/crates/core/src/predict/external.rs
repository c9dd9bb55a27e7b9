//! HTTP client for an external sequence predictor. Every call is bounded by
//! a shared deadline; anything that fails, times out or looks implausible
//! falls back to linear extrapolation.

use super::prompt::{
    build_prompt, parse_prediction_response, ParsedValue, PromptKind, PromptRecord,
};
use super::trajectory::{Observation, StateMethod, StatePrediction, Trajectory};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    pub url: String,
    pub deadline: Duration,
    /// Multiple of the largest physical one-slot move accepted from the
    /// endpoint before re-prompting.
    pub gate_margin: f64,
}

impl ExternalConfig {
    pub fn new(url: impl Into<String>) -> Self {
        ExternalConfig {
            url: url.into(),
            deadline: Duration::from_millis(50),
            gate_margin: 3.0,
        }
    }
}

/// Quantities needed to turn the speed limit into image-plane bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateContext {
    pub focal_px: f64,
    pub max_speed: f64,
    pub slot_duration: f64,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    kind: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

#[derive(Serialize)]
struct AuditEntry<'a> {
    slot: usize,
    user: usize,
    kind: &'a str,
    attempt: u32,
    prompt: &'a str,
    response: Option<&'a str>,
    error: Option<String>,
    accepted: bool,
}

pub struct ExternalPredictor {
    cfg: ExternalConfig,
    agent: ureq::Agent,
    log: Option<Mutex<Box<dyn Write + Send>>>,
}

impl ExternalPredictor {
    pub fn new(cfg: ExternalConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(cfg.deadline).build();
        ExternalPredictor {
            cfg,
            agent,
            log: None,
        }
    }

    /// Append every prompt/response exchange as one JSON line to `out`.
    pub fn with_audit_log(mut self, out: Box<dyn Write + Send>) -> Self {
        self.log = Some(Mutex::new(out));
        self
    }

    pub fn config(&self) -> &ExternalConfig {
        &self.cfg
    }

    /// Single round trip returning the endpoint's free text.
    pub fn query(&self, prompt: &PromptRecord, timeout: Duration) -> Result<String> {
        if timeout.is_zero() {
            return Err(Error::External("deadline exceeded".into()));
        }
        let body = WireRequest {
            kind: prompt.kind.as_str(),
            prompt: &prompt.text,
        };
        let resp = self
            .agent
            .post(&self.cfg.url)
            .timeout(timeout)
            .send_json(&body)
            .map_err(|e| Error::External(e.to_string()))?;
        let parsed: WireResponse = resp
            .into_json()
            .map_err(|e| Error::External(e.to_string()))?;
        Ok(parsed.text)
    }

    fn audit(&self, prompt: &PromptRecord, attempt: u32, outcome: &Result<String>, accepted: bool) {
        let Some(log) = &self.log else { return };
        let entry = AuditEntry {
            slot: prompt.slot,
            user: prompt.user,
            kind: prompt.kind.as_str(),
            attempt,
            prompt: &prompt.text,
            response: outcome.as_ref().ok().map(String::as_str),
            error: outcome.as_ref().err().map(|e| e.to_string()),
            accepted,
        };
        if let Ok(line) = serde_json::to_string(&entry) {
            let mut w = log.lock().unwrap_or_else(|p| p.into_inner());
            let _ = writeln!(w, "{line}");
        }
    }

    fn plausible(
        &self,
        value: ParsedValue,
        last: &Observation,
        slot: usize,
        ctx: &GateContext,
    ) -> bool {
        let gap = slot.saturating_sub(last.slot).max(1) as f64;
        let reach = self.cfg.gate_margin * ctx.max_speed * ctx.slot_duration * gap;
        match value {
            ParsedValue::Pixel(x, y) => {
                let px = reach * ctx.focal_px / last.distance.max(0.1);
                (x - last.pixel.0).hypot(y - last.pixel.1) <= px
            }
            ParsedValue::Distance(r) => r > 0.0 && (r - last.distance).abs() <= reach,
        }
    }

    /// One component (pixel or distance) for one user. The first prompt uses
    /// the visible part of the window; an implausible answer triggers one
    /// retry over the last `T_c` visible observations.
    fn component(
        &self,
        user: usize,
        traj: &Trajectory,
        kind: PromptKind,
        slot: usize,
        ctx: &GateContext,
        deadline: Instant,
    ) -> Option<ParsedValue> {
        let last = *traj.last_visible()?;
        let attempts = [traj.window_visible(), traj.recent_visible()];
        for (i, history) in attempts.iter().enumerate() {
            if history.is_empty() {
                continue;
            }
            let prompt = build_prompt(history, kind, user, slot);
            let outcome = self.query(&prompt, deadline.saturating_duration_since(Instant::now()));
            let parsed = outcome
                .as_ref()
                .ok()
                .map(|t| parse_prediction_response(t, kind));
            let value = match parsed {
                Some(Ok(v)) => v,
                _ => {
                    self.audit(&prompt, i as u32, &outcome, false);
                    return None;
                }
            };
            let ok = self.plausible(value, &last, slot, ctx);
            self.audit(&prompt, i as u32, &outcome, ok);
            if ok {
                return Some(value);
            }
        }
        None
    }

    /// Predictions for several users at once; all requests run concurrently
    /// against a single deadline.
    pub fn predict_batch(
        &self,
        items: &[(usize, &Trajectory)],
        slot: usize,
        ctx: &GateContext,
    ) -> Vec<Option<StatePrediction>> {
        let deadline = Instant::now() + self.cfg.deadline;
        let results: Vec<(Option<ParsedValue>, Option<ParsedValue>)> = std::thread::scope(|s| {
            let handles: Vec<_> = items
                .iter()
                .map(|&(user, traj)| {
                    let a = s.spawn(move || {
                        self.component(user, traj, PromptKind::Angles, slot, ctx, deadline)
                    });
                    let d = s.spawn(move || {
                        self.component(user, traj, PromptKind::Distance, slot, ctx, deadline)
                    });
                    (a, d)
                })
                .collect();
            handles
                .into_iter()
                .map(|(a, d)| (a.join().unwrap_or(None), d.join().unwrap_or(None)))
                .collect()
        });
        items
            .iter()
            .zip(results)
            .map(|(&(_, traj), (pixel, distance))| {
                let base = traj.linear(slot)?;
                let mut out = StatePrediction {
                    fallback: true,
                    ..base
                };
                if let Some(ParsedValue::Pixel(x, y)) = pixel {
                    out.pixel = (x, y);
                }
                if let Some(ParsedValue::Distance(r)) = distance {
                    out.distance = r;
                }
                if pixel.is_some() && distance.is_some() {
                    out.method = StateMethod::External;
                    out.fallback = false;
                }
                Some(out)
            })
            .collect()
    }
}
