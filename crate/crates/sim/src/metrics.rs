//! Measurements collected from one simulation run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocMetrics {
    pub id: String,
    pub originator: usize,
    pub honest_origin: bool,
    pub injected_round: u64,
    /// Rounds from injection until the last correct peer activated it.
    pub rounds_to_active: Option<u64>,
    /// Fraction of correct peers holding the document active or superseded.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub offender: usize,
    pub first_round: u64,
    /// Round in which the last correct peer blacklisted the offender, once all have.
    pub last_round: Option<u64>,
    pub blacklisted_by: usize,
    pub correct_peers: usize,
}

impl Detection {
    pub fn latency(&self) -> Option<u64> {
        self.last_round.map(|l| l - self.first_round)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FetchRecord {
    pub peer: usize,
    pub path: String,
    pub round: u64,
    /// Newest version injected for the path when the fetch was issued.
    pub expected: Option<u64>,
    pub result: Result<u64, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReconcileRecord {
    pub peer: usize,
    pub helper: usize,
    pub ok: bool,
    pub requested: usize,
    pub offered: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub rounds: u64,
    pub documents: Vec<DocMetrics>,
    /// Messages handed to the network, by verb.
    pub messages: BTreeMap<String, u64>,
    pub delivered: u64,
    pub lost: u64,
    pub duplicate_offers: u64,
    pub verification_failures: u64,
    pub detections: Vec<Detection>,
    /// Times a correct peer blacklisted another correct peer.
    pub correct_blacklisted: u64,
    /// Active documents at correct peers whose blocks fail the policy.
    pub unsafe_activations: u64,
    /// Correct peers holding an equivocated document as active.
    pub conflicting_activations: u64,
    /// For each originator, the most documents any correct peer accepted
    /// from it by offer within one rate window.
    pub max_accepts_per_window: BTreeMap<usize, u64>,
    pub fetches: Vec<FetchRecord>,
    pub reconciles: Vec<ReconcileRecord>,
    pub bytes_sent: Vec<u64>,
    pub bytes_received: Vec<u64>,
    pub trace_digest: String,
}

impl Metrics {
    pub fn total_messages(&self) -> u64 {
        self.messages.values().sum()
    }

    /// Lowest coverage over honestly originated documents, 1.0 if there are none.
    pub fn min_coverage(&self) -> f64 {
        self.documents
            .iter()
            .filter(|d| d.honest_origin)
            .map(|d| d.coverage)
            .fold(1.0, f64::min)
    }

    /// Slowest honest document; `None` if any never reached every correct peer.
    pub fn max_rounds_to_active(&self) -> Option<u64> {
        self.documents
            .iter()
            .filter(|d| d.honest_origin)
            .map(|d| d.rounds_to_active)
            .try_fold(0, |acc, r| r.map(|r| acc.max(r)))
    }

    pub fn document(&self, id: &str) -> Option<&DocMetrics> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// One JSON object per line: documents, detections, fetches, then a summary.
    pub fn records(&self) -> Vec<String> {
        let mut out = Vec::new();
        let tagged = |kind: &str, v: serde_json::Value| {
            let mut v = v;
            v["record"] = serde_json::Value::from(kind);
            v.to_string()
        };
        for d in &self.documents {
            out.push(tagged("document", serde_json::to_value(d).expect("serializable")));
        }
        for d in &self.detections {
            out.push(tagged("detection", serde_json::to_value(d).expect("serializable")));
        }
        for f in &self.fetches {
            out.push(tagged("fetch", serde_json::to_value(f).expect("serializable")));
        }
        let summary = serde_json::json!({
            "rounds": self.rounds,
            "messages": self.messages,
            "delivered": self.delivered,
            "lost": self.lost,
            "duplicate_offers": self.duplicate_offers,
            "verification_failures": self.verification_failures,
            "correct_blacklisted": self.correct_blacklisted,
            "unsafe_activations": self.unsafe_activations,
            "conflicting_activations": self.conflicting_activations,
            "min_coverage": self.min_coverage(),
            "bytes_sent": self.bytes_sent.iter().sum::<u64>(),
            "trace_digest": self.trace_digest,
        });
        out.push(tagged("summary", summary));
        out
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rounds simulated: {}", self.rounds);
        let _ = writeln!(
            s,
            "messages: {} sent, {} delivered, {} lost",
            self.total_messages(),
            self.delivered,
            self.lost
        );
        for (verb, n) in &self.messages {
            let _ = writeln!(s, "  {verb:<10} {n}");
        }
        let honest = self.documents.iter().filter(|d| d.honest_origin).count();
        let _ = writeln!(s, "documents: {} ({} honest)", self.documents.len(), honest);
        let _ = writeln!(s, "min coverage: {:.3}", self.min_coverage());
        match self.max_rounds_to_active() {
            Some(r) => {
                let _ = writeln!(s, "max rounds to active: {r}");
            }
            None => {
                let _ = writeln!(s, "max rounds to active: not reached");
            }
        }
        let _ = writeln!(s, "duplicate offers: {}", self.duplicate_offers);
        let _ = writeln!(s, "verification failures: {}", self.verification_failures);
        for d in &self.detections {
            let _ = writeln!(
                s,
                "offender P{}: blacklisted by {}/{} correct peers, latency {}",
                d.offender + 1,
                d.blacklisted_by,
                d.correct_peers,
                d.latency().map_or("-".to_string(), |l| format!("{l} rounds"))
            );
        }
        let _ = writeln!(s, "correct peers blacklisted: {}", self.correct_blacklisted);
        let _ = writeln!(s, "trace digest: {}", self.trace_digest);
        s
    }
}
