#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use euleresg::catalog::Catalog;
use euleresg::gateway::MockGateway;
use euleresg::index::{EmbeddingCache, ReportIndexes};
use euleresg::ingest::{extract_pages, segment_document, BlockKind, IngestOptions, PdftotextExtractor, ReportFormat, Segment, SegmentId};
use rand::rngs::StdRng;
use rand::Rng;

pub const FIXTURE_SLUGS: [&str; 3] = ["software-it-services", "commercial-banks", "hardware"];

pub fn fixture(rel: &str) -> PathBuf {
    euleresg::fixtures_dir().join(rel)
}

pub fn report_path() -> PathBuf {
    fixture("reports/northwind_2024.json")
}

pub fn ground_truth_path() -> PathBuf {
    fixture("ground_truth/northwind_2024.csv")
}

pub fn catalog() -> Catalog {
    Catalog::load(fixture("catalog/sasb_fixture.json")).unwrap()
}

pub fn slugs() -> Vec<String> {
    FIXTURE_SLUGS.iter().map(|s| s.to_string()).collect()
}

/// Ingest the fixture report in memory with the mock gateway.
pub fn fixture_indexes() -> ReportIndexes {
    let bytes = std::fs::read(report_path()).unwrap();
    let doc = extract_pages(&bytes, ReportFormat::Pagestream, &IngestOptions::default(), &PdftotextExtractor::default()).unwrap();
    ReportIndexes::build(&doc.report_id, segment_document(&doc), &MockGateway::new(), &EmbeddingCache::new()).unwrap()
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Published per-pair accuracies, one column per model backend, pairs in
/// table order (BMW ×3, MCG ×3, P&G ×3, Dell ×3).
pub struct PublishedColumn {
    pub model: &'static str,
    pub pairs: [f64; 12],
    pub company_averages: [&'static str; 4],
    pub overall: &'static str,
}

pub const COMPANIES: [(&str, &str, [&str; 3]); 4] = [
    ("BMW", "Transportation", ["Auto Parts", "Automobiles", "Car Rental and Leasing"]),
    ("MCG", "Financials", ["Asset Manage Custody Activity", "Commercial Banks", "Investment Banking Brokerage"]),
    ("P&G", "Consumer Goods", ["E-Commerce", "Household Personal Products", "Multiline and Specialty Retaile"]),
    ("DELL", "Technology & Communications", ["Hardware", "Internet Media & Services", "Telecommunication Services"]),
];

pub const PUBLISHED: [PublishedColumn; 5] = [
    PublishedColumn {
        model: "Claude",
        pairs: [0.80, 0.75, 0.86, 0.93, 1.00, 1.00, 1.00, 1.00, 1.00, 0.92, 1.00, 0.93],
        company_averages: ["0.80", "0.98", "1.00", "0.95"],
        overall: "0.93",
    },
    PublishedColumn {
        model: "DeepSeek",
        pairs: [0.87, 0.50, 0.86, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 0.75, 1.00, 0.93],
        company_averages: ["0.74", "1.00", "1.00", "0.89"],
        overall: "0.91",
    },
    PublishedColumn {
        model: "GPT5",
        pairs: [0.87, 0.75, 0.86, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 0.92, 1.00, 0.97],
        company_averages: ["0.82", "1.00", "1.00", "0.96"],
        overall: "0.95",
    },
    PublishedColumn {
        model: "QWen",
        pairs: [0.87, 0.80, 0.86, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 0.75, 0.96, 0.97],
        company_averages: ["0.84", "1.00", "1.00", "0.89"],
        overall: "0.93",
    },
    PublishedColumn {
        model: "Gemini",
        pairs: [0.87, 0.75, 0.86, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 0.92, 0.96, 0.97],
        company_averages: ["0.82", "1.00", "1.00", "0.95"],
        overall: "0.94",
    },
];

/// Smallest metric counts per pair for which every published 2-decimal
/// cell is the rounding of some k/n, and k/n aggregates to every published
/// average.
pub const RECOVERED_DENOMINATORS: [u32; 12] = [15, 20, 7, 14, 1, 1, 1, 1, 1, 12, 23, 29];

/// The k/n fraction closest to a published 2-decimal value.
pub fn recovered_fraction(published: f64, n: u32) -> f64 {
    (published * n as f64).round() / n as f64
}

pub fn pair_accuracies(col: &PublishedColumn, exact: bool) -> Vec<euleresg::eval::PairAccuracy> {
    let mut out = Vec::new();
    for (ci, (company, industry, subs)) in COMPANIES.iter().enumerate() {
        for (si, sub) in subs.iter().enumerate() {
            let i = ci * 3 + si;
            let acc = if exact {
                recovered_fraction(col.pairs[i], RECOVERED_DENOMINATORS[i])
            } else {
                col.pairs[i]
            };
            out.push(euleresg::eval::PairAccuracy::published(company, industry, sub, acc));
        }
    }
    out
}

/// Independent half-up 2dp formatter for non-negative values: decimal digit
/// arithmetic on a 12-place rendering, sharing no code with the crate.
pub fn oracle_2dp(x: f64) -> String {
    let s = format!("{:.12}", x);
    let (int, frac) = s.split_once('.').unwrap();
    let digits: Vec<u32> = frac.chars().map(|c| c.to_digit(10).unwrap()).collect();
    let mut cents = int.parse::<u64>().unwrap() * 100 + (digits[0] * 10 + digits[1]) as u64;
    if digits[2] >= 5 {
        cents += 1;
    }
    format!("{}.{:02}", cents / 100, cents % 100)
}

// ---------------------------------------------------------------------------
// Retrieval oracles

pub const VOCAB: [&str; 12] = [
    "energy", "water", "carbon", "waste", "board", "privacy", "safety", "supplier", "diversity", "emissions", "recycling", "ethics",
];

/// A random corpus of up to 10 segments drawn from a small vocabulary so
/// that term overlaps and ties are frequent.
pub fn random_corpus(rng: &mut StdRng) -> Vec<Segment> {
    let n = rng.random_range(1..=10);
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=8);
            let words: Vec<&str> = (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
            let text = words.join(" ");
            Segment {
                segment_id: SegmentId::new("r", i),
                kind: BlockKind::Paragraph,
                char_start: 0,
                char_end: text.len(),
                text,
                page_start: 1,
                page_end: 1,
            }
        })
        .collect()
}

pub fn random_query(rng: &mut StdRng) -> Vec<String> {
    let n = rng.random_range(1..=5);
    (0..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_string()).collect()
}

/// Brute-force BM25 straight from the formula, recomputing every statistic
/// per query.
pub fn bm25_oracle(segments: &[Segment], query: &[String]) -> Vec<(SegmentId, f64)> {
    let docs: Vec<Vec<String>> = segments.iter().map(|s| euleresg::text::tokenize(&s.text)).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut seen = HashSet::new();
    let terms: Vec<String> = query
        .iter()
        .flat_map(|q| euleresg::text::tokenize(q))
        .filter(|t| seen.insert(t.clone()))
        .collect();
    let mut scored: Vec<(SegmentId, f64)> = Vec::new();
    for (seg, doc) in segments.iter().zip(&docs) {
        let mut score = 0.0;
        for t in &terms {
            let tf = doc.iter().filter(|w| *w == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            let dl = doc.len() as f64;
            score += idf * tf * (1.2 + 1.0) / (tf + 1.2 * (1.0 - 0.75 + 0.75 * dl / avgdl));
        }
        if score > 0.0 {
            scored.push((seg.segment_id.clone(), score));
        }
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.seq.cmp(&b.0.seq)));
    scored
}

/// Exhaustive cosine ranking; zero vectors score 0.
pub fn cosine_oracle(vectors: &[(SegmentId, Vec<f64>)], query: &[f64]) -> Vec<(SegmentId, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut scored: Vec<(SegmentId, f64)> = vectors
        .iter()
        .map(|(id, v)| {
            let vn = norm(v);
            let dot: f64 = v.iter().zip(query).map(|(a, b)| a * b).sum();
            let c = if qn == 0.0 || vn == 0.0 { 0.0 } else { dot / (qn * vn) };
            (id.clone(), c)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.seq.cmp(&b.0.seq)));
    scored
}

// ---------------------------------------------------------------------------
// Fusion oracle

/// Reference fusion: the three-case formula, then (fused desc, channels desc,
/// seq asc), truncated.
pub fn fusion_oracle(
    kw: &BTreeMap<usize, f64>,
    sem: &BTreeMap<usize, f64>,
    w: f64,
    top_n: usize,
) -> Vec<(usize, f64, u8)> {
    let ids: std::collections::BTreeSet<usize> = kw.keys().chain(sem.keys()).copied().collect();
    let mut out: Vec<(usize, f64, u8)> = ids
        .into_iter()
        .map(|id| match (kw.get(&id), sem.get(&id)) {
            (Some(k), Some(s)) => (id, w * s + (1.0 - w) * k, 2),
            (None, Some(s)) => (id, w * s, 1),
            (Some(k), None) => (id, (1.0 - w) * k, 1),
            (None, None) => unreachable!(),
        })
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
    out.truncate(top_n);
    out
}

// ---------------------------------------------------------------------------
// Service helpers

pub struct Client {
    agent: ureq::Agent,
    base: String,
}

impl Client {
    pub fn new(base: String) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self { agent, base }
    }

    fn finish(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> (u16, serde_json::Value) {
        let mut resp = resp.expect("request reaches the service");
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().unwrap();
        let json = serde_json::from_str(&body).unwrap_or(serde_json::Value::String(body));
        (status, json)
    }

    pub fn get(&self, path: &str) -> (u16, serde_json::Value) {
        Self::finish(self.agent.get(format!("{}{path}", self.base)).call())
    }

    pub fn get_raw(&self, path: &str) -> (u16, String) {
        let mut resp = self.agent.get(format!("{}{path}", self.base)).call().unwrap();
        (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
    }

    pub fn post_json(&self, path: &str, body: &serde_json::Value) -> (u16, serde_json::Value) {
        Self::finish(self.agent.post(format!("{}{path}", self.base)).send_json(body))
    }

    pub fn post_bytes(&self, path: &str, content_type: &str, body: &[u8]) -> (u16, serde_json::Value) {
        Self::finish(
            self.agent
                .post(format!("{}{path}", self.base))
                .header("Content-Type", content_type)
                .send(body),
        )
    }

    /// Poll a job until it is terminal, recording every status seen.
    pub fn wait_for_job(&self, job_id: &str, seen: &mut Vec<String>) -> serde_json::Value {
        let deadline = std::time::Instant::now() + std::time::Duration::from_secs(30);
        loop {
            let (code, job) = self.get(&format!("/analyses/{job_id}"));
            assert_eq!(code, 200, "{job}");
            let status = job["status"].as_str().unwrap().to_string();
            if seen.last() != Some(&status) {
                seen.push(status.clone());
            }
            if status == "done" || status == "failed" {
                return job;
            }
            assert!(std::time::Instant::now() < deadline, "job {job_id} did not finish");
            std::thread::sleep(std::time::Duration::from_millis(10));
        }
    }
}

/// True when `seen` only ever moves forward along queued → running → done|failed.
pub fn legal_status_sequence(seen: &[String]) -> bool {
    let rank = |s: &str| match s {
        "queued" => 0,
        "running" => 1,
        "done" | "failed" => 2,
        _ => 99,
    };
    seen.windows(2).all(|w| rank(&w[0]) < rank(&w[1])) && seen.iter().all(|s| rank(s) < 99)
}

/// Mock gateway whose chat calls block until [`GatedGateway::open`].
pub struct GatedGateway {
    inner: MockGateway,
    gate: std::sync::Mutex<bool>,
    cv: std::sync::Condvar,
}

impl GatedGateway {
    pub fn new() -> Self {
        Self {
            inner: MockGateway::new(),
            gate: std::sync::Mutex::new(false),
            cv: std::sync::Condvar::new(),
        }
    }

    pub fn open(&self) {
        *self.gate.lock().unwrap() = true;
        self.cv.notify_all();
    }
}

impl euleresg::gateway::ModelGateway for GatedGateway {
    fn embed_model_id(&self) -> String {
        self.inner.embed_model_id()
    }
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<euleresg::gateway::EmbeddingVector>, euleresg::gateway::GatewayError> {
        self.inner.embed_texts(texts)
    }
    fn rerank(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, euleresg::gateway::GatewayError> {
        self.inner.rerank(query, documents)
    }
    fn complete_chat(&self, system: &str, user: &str) -> Result<euleresg::gateway::ChatExchange, euleresg::gateway::GatewayError> {
        let mut open = self.gate.lock().unwrap();
        while !*open {
            open = self.cv.wait(open).unwrap();
        }
        drop(open);
        self.inner.complete_chat(system, user)
    }
}

pub fn service_config(storage: &Path) -> euleresg::config::Config {
    euleresg::config::Config {
        storage_root: storage.to_path_buf(),
        catalog_path: fixture("catalog/sasb_fixture.json"),
        ..Default::default()
    }
}
