//! Pass/fail checks over simulation metrics.

use std::fmt;
use std::str::FromStr;

use crate::config::{ConfigError, SimConfig};
use crate::metrics::Metrics;
use crate::sim::run;

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    CoverageAtLeast(f64),
    /// Every detection completes within this many rounds, and there is at least one.
    DetectionWithin(u64),
    /// All correct peers blacklisted this peer index.
    AllBlacklist(usize),
    NoCorrectBlacklisted,
    MessagesAtMost(u64),
    RoundsToActiveAtMost(u64),
    /// Every redundant fetch returned the newest injected version.
    FetchNewest,
    /// No correct peer holds an active document that fails the policy or was equivocated.
    Safe,
    VerificationFailuresAtMost(u64),
    AcceptsPerWindowAtMost(u64),
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::CoverageAtLeast(x) => write!(f, "coverage >= {x}"),
            Predicate::DetectionWithin(r) => write!(f, "detection <= {r}"),
            Predicate::AllBlacklist(p) => write!(f, "all-blacklist P{}", p + 1),
            Predicate::NoCorrectBlacklisted => f.write_str("no-correct-blacklisted"),
            Predicate::MessagesAtMost(n) => write!(f, "messages <= {n}"),
            Predicate::RoundsToActiveAtMost(n) => write!(f, "rounds <= {n}"),
            Predicate::FetchNewest => f.write_str("fetch-newest"),
            Predicate::Safe => f.write_str("safe"),
            Predicate::VerificationFailuresAtMost(n) => write!(f, "verification-failures <= {n}"),
            Predicate::AcceptsPerWindowAtMost(n) => write!(f, "accepts-per-window <= {n}"),
        }
    }
}

impl FromStr for Predicate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let bad = || format!("unknown predicate {s:?}");
        fn num<T: FromStr>(w: &str) -> Result<T, String> {
            w.parse().map_err(|_| format!("bad number {w:?}"))
        }
        match words.as_slice() {
            ["coverage", ">=", x] => Ok(Predicate::CoverageAtLeast(num(x)?)),
            ["detection", "<=", r] => Ok(Predicate::DetectionWithin(num(r)?)),
            ["all-blacklist", p] => {
                let n: usize = p.strip_prefix('P').ok_or_else(bad).and_then(num)?;
                n.checked_sub(1).map(Predicate::AllBlacklist).ok_or_else(bad)
            }
            ["no-correct-blacklisted"] => Ok(Predicate::NoCorrectBlacklisted),
            ["messages", "<=", n] => Ok(Predicate::MessagesAtMost(num(n)?)),
            ["rounds", "<=", n] => Ok(Predicate::RoundsToActiveAtMost(num(n)?)),
            ["fetch-newest"] => Ok(Predicate::FetchNewest),
            ["safe"] => Ok(Predicate::Safe),
            ["verification-failures", "<=", n] => Ok(Predicate::VerificationFailuresAtMost(num(n)?)),
            ["accepts-per-window", "<=", n] => Ok(Predicate::AcceptsPerWindowAtMost(num(n)?)),
            _ => Err(bad()),
        }
    }
}

impl Predicate {
    /// `None` on success, otherwise a one-line explanation.
    pub fn check(&self, m: &Metrics) -> Option<String> {
        let fail = |ok: bool, msg: String| (!ok).then_some(msg);
        match self {
            Predicate::CoverageAtLeast(x) => {
                let c = m.min_coverage();
                fail(c >= *x, format!("coverage {c:.3} < {x}"))
            }
            Predicate::DetectionWithin(r) => {
                if m.detections.is_empty() {
                    return Some("no equivocation was detected".into());
                }
                m.detections.iter().find_map(|d| match d.latency() {
                    Some(l) if l <= *r => None,
                    Some(l) => Some(format!("P{} detected in {l} rounds", d.offender + 1)),
                    None => Some(format!(
                        "P{} blacklisted by only {}/{} correct peers",
                        d.offender + 1,
                        d.blacklisted_by,
                        d.correct_peers
                    )),
                })
            }
            Predicate::AllBlacklist(p) => match m.detections.iter().find(|d| d.offender == *p) {
                Some(d) => fail(
                    d.blacklisted_by == d.correct_peers,
                    format!("P{} blacklisted by {}/{}", p + 1, d.blacklisted_by, d.correct_peers),
                ),
                None => Some(format!("P{} was never blacklisted", p + 1)),
            },
            Predicate::NoCorrectBlacklisted => fail(
                m.correct_blacklisted == 0,
                format!("{} correct peers blacklisted", m.correct_blacklisted),
            ),
            Predicate::MessagesAtMost(n) => {
                let t = m.total_messages();
                fail(t <= *n, format!("{t} messages > {n}"))
            }
            Predicate::RoundsToActiveAtMost(n) => match m.max_rounds_to_active() {
                Some(r) => fail(r <= *n, format!("{r} rounds to active > {n}")),
                None => Some("some document never became active everywhere".into()),
            },
            Predicate::FetchNewest => {
                if m.fetches.is_empty() {
                    return Some("no fetches ran".into());
                }
                m.fetches.iter().find_map(|f| match (&f.result, f.expected) {
                    (Ok(v), Some(e)) if *v == e => None,
                    (r, e) => Some(format!("fetch of {} by P{} got {r:?}, expected {e:?}", f.path, f.peer + 1)),
                })
            }
            Predicate::Safe => fail(
                m.unsafe_activations == 0 && m.conflicting_activations == 0,
                format!(
                    "{} unsafe and {} conflicting activations",
                    m.unsafe_activations, m.conflicting_activations
                ),
            ),
            Predicate::VerificationFailuresAtMost(n) => fail(
                m.verification_failures <= *n,
                format!("{} verification failures > {n}", m.verification_failures),
            ),
            Predicate::AcceptsPerWindowAtMost(n) => m
                .max_accepts_per_window
                .iter()
                .find(|(_, a)| **a > *n)
                .map(|(o, a)| format!("{a} documents from P{} accepted in one window", o + 1)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub metrics: Metrics,
    /// One entry per failed predicate.
    pub failures: Vec<String>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn report(&self) -> String {
        if self.passed() {
            "pass".into()
        } else {
            format!("fail: {}", self.failures.join("; "))
        }
    }
}

pub fn evaluate(metrics: Metrics, predicates: &[Predicate]) -> ScenarioOutcome {
    let failures = predicates
        .iter()
        .filter_map(|p| p.check(&metrics).map(|why| format!("{p}: {why}")))
        .collect();
    ScenarioOutcome { metrics, failures }
}

/// Runs `config` and checks `predicates` against the resulting metrics.
pub fn assert_scenario(config: &SimConfig, predicates: &[Predicate]) -> Result<ScenarioOutcome, ConfigError> {
    Ok(evaluate(run(config)?, predicates))
}
