//! Maliciousness scoring and ranking of a binary's strings.
//!
//! Scores live in `[0, 10]`. A score file (JSON object `text -> score`) can
//! supply scores from an external ranking tool; strings it does not cover are
//! scored by a transparent additive rule table.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::snapshot::StringEntry;

pub const MIN_SCORE: f64 = 0.0;
pub const MAX_SCORE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedString {
    pub text: String,
    pub score: f64,
    pub ref_addrs: Vec<u64>,
}

pub trait StringScorer: Send + Sync {
    fn score(&self, text: &str) -> f64;
}

/// Rule categories of the built-in scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleCategory {
    ExecutableName,
    NetworkPattern,
    AutorunKey,
    RegistryPath,
    IpLiteral,
    SuspiciousApi,
}

impl RuleCategory {
    pub const ALL: [RuleCategory; 6] = [
        RuleCategory::ExecutableName,
        RuleCategory::NetworkPattern,
        RuleCategory::AutorunKey,
        RuleCategory::RegistryPath,
        RuleCategory::IpLiteral,
        RuleCategory::SuspiciousApi,
    ];

    pub fn weight(self) -> f64 {
        match self {
            RuleCategory::ExecutableName => 4.0,
            RuleCategory::NetworkPattern => 4.0,
            RuleCategory::AutorunKey => 4.0,
            RuleCategory::RegistryPath => 2.0,
            RuleCategory::IpLiteral => 3.0,
            RuleCategory::SuspiciousApi => 2.0,
        }
    }

    fn pattern(self) -> &'static Regex {
        static PATTERNS: OnceLock<Vec<Regex>> = OnceLock::new();
        let all = PATTERNS.get_or_init(|| {
            [
                r"(?i)[\w\-.]+\.(exe|dll|sys|scr|bat|cmd|ps1|vbs|pif|cpl)\b",
                r"(?i)\b(https?|ftp)://|^CONNECT\s|\bCONNECT\s+%s",
                r"(?i)\\CurrentVersion\\(Run|RunOnce|RunServices)\b|\bStubPath\b|\\Winlogon\\(Shell|Userinit)|\\Active Setup\\Installed Components",
                r"(?i)^(HKEY_[A-Z_]+|HKLM|HKCU|SOFTWARE\\|SYSTEM\\CurrentControlSet)",
                r"\b(25[0-5]|2[0-4]\d|1?\d?\d)(\.(25[0-5]|2[0-4]\d|1?\d?\d)){3}\b",
                r"\b(VirtualAlloc(Ex)?|VirtualProtect(Ex)?|WriteProcessMemory|ReadProcessMemory|CreateRemoteThread|NtUnmapViewOfSection|SetWindowsHookEx[AW]?|GetAsyncKeyState|URLDownloadToFile[AW]?|InternetOpen(Url)?[AW]?|WinExec|ShellExecute[AW]?|IsDebuggerPresent|CryptEncrypt|RegSetValueEx[AW]?|AdjustTokenPrivileges|OpenProcess)\b",
            ]
            .iter()
            .map(|p| Regex::new(p).expect("rule pattern compiles"))
            .collect()
        });
        let idx = RuleCategory::ALL.iter().position(|&c| c == self).unwrap();
        &all[idx]
    }

    pub fn matches(self, text: &str) -> bool {
        self.pattern().is_match(text)
    }
}

/// Additive rule table: base score 1 plus the weight of every matching
/// category, clamped to 10.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicScorer;

impl HeuristicScorer {
    pub const BASE: f64 = 1.0;

    pub fn categories(text: &str) -> Vec<RuleCategory> {
        RuleCategory::ALL
            .into_iter()
            .filter(|c| c.matches(text))
            .collect()
    }

    pub fn score_categories(categories: &[RuleCategory]) -> f64 {
        let raw = Self::BASE + categories.iter().map(|c| c.weight()).sum::<f64>();
        raw.clamp(MIN_SCORE, MAX_SCORE)
    }
}

impl StringScorer for HeuristicScorer {
    fn score(&self, text: &str) -> f64 {
        Self::score_categories(&Self::categories(text))
    }
}

/// Externally supplied scores keyed by exact string text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreOverrides(HashMap<String, f64>);

impl ScoreOverrides {
    pub fn from_json(raw: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(raw).map_err(|e| Error::OverrideFormat(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::OverrideFormat("top level must be an object".into()))?;
        let mut map = HashMap::with_capacity(obj.len());
        for (text, v) in obj {
            let score = v.as_f64().ok_or_else(|| {
                Error::OverrideFormat(format!("score for {text:?} is not a number"))
            })?;
            if !(MIN_SCORE..=MAX_SCORE).contains(&score) {
                return Err(Error::OverrideFormat(format!(
                    "score {score} for {text:?} outside [0, 10]"
                )));
            }
            map.insert(text.clone(), score);
        }
        Ok(ScoreOverrides(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }

    pub fn get(&self, text: &str) -> Option<f64> {
        self.0.get(text).copied()
    }

    pub fn insert(&mut self, text: impl Into<String>, score: f64) {
        self.0
            .insert(text.into(), score.clamp(MIN_SCORE, MAX_SCORE));
    }
}

fn rank_order(a: &RankedString, b: &RankedString) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.text.cmp(&b.text))
}

/// Scores with the built-in rule table.
pub fn rank_strings(
    strings: &[StringEntry],
    overrides: Option<&ScoreOverrides>,
) -> Vec<RankedString> {
    rank_strings_with(&HeuristicScorer, strings, overrides)
}

pub fn rank_strings_with(
    scorer: &dyn StringScorer,
    strings: &[StringEntry],
    overrides: Option<&ScoreOverrides>,
) -> Vec<RankedString> {
    let mut ranked: Vec<RankedString> = strings
        .iter()
        .map(|s| {
            let score = overrides
                .and_then(|o| o.get(&s.text))
                .unwrap_or_else(|| scorer.score(&s.text))
                .clamp(MIN_SCORE, MAX_SCORE);
            RankedString {
                text: s.text.clone(),
                score,
                ref_addrs: s.ref_addrs.clone(),
            }
        })
        .collect();
    ranked.sort_by(rank_order);
    ranked
}
