use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use super::leakage::{LeakConfig, LeakFilter};
use super::templates::{render_prompts, ClassSpec, PromptTemplate, RenderedPrompt};
use crate::embedding::{CandidatePool, ConceptCandidate, LabelSet};
use crate::error::{Error, Result};

pub const DEFAULT_INSTRUCTION: &str = "Do not mention the class label itself in your answer.";
pub const ENV_URL: &str = "CD_GEN_URL";
pub const ENV_TOKEN: &str = "CD_GEN_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Offline JSON-lines file of `{"class", "template_id", "text"}`.
    Stub { path: PathBuf },
    /// HTTP endpoint taking `{"prompt", "n", "instruction"}` and answering `{"texts": [..]}`.
    External { url: String, token: Option<String> },
}

#[derive(Debug, Clone)]
pub struct GeneratorClient {
    pub kind: GeneratorKind,
    pub samples_per_prompt: usize,
    pub instruction: String,
    pub max_retries: u32,
}

impl GeneratorClient {
    pub fn stub(path: impl Into<PathBuf>) -> Self {
        GeneratorClient {
            kind: GeneratorKind::Stub { path: path.into() },
            samples_per_prompt: 50,
            instruction: DEFAULT_INSTRUCTION.to_string(),
            max_retries: 3,
        }
    }

    pub fn external(url: impl Into<String>, token: Option<String>) -> Self {
        GeneratorClient {
            kind: GeneratorKind::External {
                url: url.into(),
                token,
            },
            samples_per_prompt: 50,
            instruction: DEFAULT_INSTRUCTION.to_string(),
            max_retries: 3,
        }
    }

    /// External client configured from `CD_GEN_URL` / `CD_GEN_TOKEN`.
    pub fn external_from_env() -> Result<Self> {
        let url = std::env::var(ENV_URL)
            .map_err(|_| Error::InvalidInput(format!("{ENV_URL} is not set")))?;
        let token = std::env::var(ENV_TOKEN).ok();
        Ok(Self::external(url, token))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRecord {
    pub class: String,
    pub template_id: u32,
    pub text: String,
}

#[derive(Serialize)]
struct GenerationRequest<'a> {
    prompt: &'a str,
    n: usize,
    instruction: &'a str,
}

#[derive(Deserialize)]
struct GenerationResponse {
    texts: Vec<String>,
}

pub fn read_stub(path: &Path) -> Result<Vec<StubRecord>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

fn stub_texts(path: &Path, prompts: &[RenderedPrompt], per_prompt: usize) -> Result<Vec<Vec<String>>> {
    let records = read_stub(path)?;
    Ok(prompts
        .iter()
        .map(|p| {
            records
                .iter()
                .filter(|r| r.class == p.class && r.template_id == p.template_id)
                .take(per_prompt)
                .map(|r| r.text.clone())
                .collect()
        })
        .collect())
}

fn request_once(url: &str, token: Option<&str>, body: &GenerationRequest<'_>) -> std::result::Result<Vec<String>, String> {
    let mut req = ureq::post(url).header("Content-Type", "application/json");
    if let Some(t) = token {
        req = req.header("Authorization", &format!("Bearer {t}"));
    }
    let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
    let parsed: GenerationResponse = resp.body_mut().read_json().map_err(|e| e.to_string())?;
    Ok(parsed.texts)
}

fn request_with_retries(client: &GeneratorClient, url: &str, token: Option<&str>, prompt: &str) -> Result<Vec<String>> {
    let body = GenerationRequest {
        prompt,
        n: client.samples_per_prompt,
        instruction: &client.instruction,
    };
    let mut last = String::new();
    for attempt in 0..=client.max_retries {
        match request_once(url, token, &body) {
            Ok(mut texts) => {
                texts.truncate(client.samples_per_prompt);
                return Ok(texts);
            }
            Err(e) => {
                warn!("generation attempt {} for {prompt:?} failed: {e}", attempt + 1);
                last = e;
                if attempt < client.max_retries {
                    thread::sleep(Duration::from_millis(50 << attempt.min(6)));
                }
            }
        }
    }
    Err(Error::Generation {
        retries: client.max_retries,
        msg: last,
    })
}

fn external_texts(client: &GeneratorClient, url: &str, token: Option<&str>, prompts: &[RenderedPrompt]) -> Result<Vec<Vec<String>>> {
    // One worker per class; each walks its templates in order.
    let mut classes: Vec<&str> = prompts.iter().map(|p| p.class.as_str()).collect();
    classes.dedup();
    let per_class: Vec<Result<Vec<Vec<String>>>> = thread::scope(|s| {
        let handles: Vec<_> = classes
            .iter()
            .map(|&class| {
                s.spawn(move || {
                    prompts
                        .iter()
                        .filter(|p| p.class == class)
                        .map(|p| request_with_retries(client, url, token, &p.prompt))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("generation worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(prompts.len());
    for r in per_class {
        out.extend(r?);
    }
    Ok(out)
}

/// Generates, cleans and ids the candidate pool.
///
/// Ids are assigned sequentially in (class, template, sample) order, so the
/// same stub always yields the same pool.
pub fn generate_candidates(
    client: &GeneratorClient,
    templates: &[PromptTemplate],
    classes: &[ClassSpec],
    leak: &LeakConfig,
) -> Result<CandidatePool> {
    let prompts = render_prompts(templates, classes)?;
    let texts = match &client.kind {
        GeneratorKind::Stub { path } => stub_texts(path, &prompts, client.samples_per_prompt)?,
        GeneratorKind::External { url, token } => {
            external_texts(client, url, token.as_deref(), &prompts)?
        }
    };
    let labels = LabelSet::new(classes.iter().map(|c| c.label.clone()))?;
    let filter = LeakFilter::new(labels.names(), leak)?;
    let mut cands = Vec::new();
    for (p, batch) in prompts.iter().zip(texts) {
        for t in filter.filter(&batch) {
            cands.push(ConceptCandidate {
                id: cands.len() as u32,
                class_label: p.class.clone(),
                text: t,
                embedding: None,
            });
        }
    }
    if cands.is_empty() {
        return Err(Error::EmptyPool);
    }
    CandidatePool::new(labels, cands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidate_gen::default_templates;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn write_stub(dir: &Path, recs: &[StubRecord]) -> PathBuf {
        let p = dir.join("stub.jsonl");
        let body: String = recs
            .iter()
            .map(|r| serde_json::to_string(r).unwrap() + "\n")
            .collect();
        fs::write(&p, body).unwrap();
        p
    }

    fn classes() -> Vec<ClassSpec> {
        vec![
            ClassSpec::new("positive", "positive review"),
            ClassSpec::new("negative", "negative review"),
        ]
    }

    fn rec(class: &str, tid: u32, text: &str) -> StubRecord {
        StubRecord {
            class: class.into(),
            template_id: tid,
            text: text.into(),
        }
    }

    #[test]
    fn stub_pool_cardinality_and_cleaning() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs = Vec::new();
        for c in ["positive", "negative"] {
            for i in 0..6 {
                recs.push(rec(c, 1 + (i % 2), &format!("{c} text number {i}")));
            }
        }
        recs.push(rec("positive", 1, "negative"));
        let p = write_stub(dir.path(), &recs);
        let pool = generate_candidates(&GeneratorClient::stub(&p), &default_templates(), &classes(), &LeakConfig::default()).unwrap();
        assert!(pool.len() <= 12);
        assert_eq!(pool.len(), 12);
        let f = LeakFilter::new(&["positive", "negative"], &LeakConfig::default()).unwrap();
        for c in pool.candidates() {
            assert!(!f.leaks(&c.text), "{}", c.text);
            assert!(c.text.starts_with("text number"));
        }
        // Class-major, then template, then file order.
        assert_eq!(pool.class_members("positive").len(), 6);
        assert_eq!(pool.get(0).unwrap().class_label, "positive");
        assert_eq!(pool.get(0).unwrap().text, "text number 0");
        assert_eq!(pool.get(1).unwrap().text, "text number 2");

        let again = generate_candidates(&GeneratorClient::stub(&p), &default_templates(), &classes(), &LeakConfig::default()).unwrap();
        assert_eq!(pool.records(), again.records());
    }

    #[test]
    fn samples_per_prompt_caps_stub() {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = (0..10).map(|i| rec("positive", 1, &format!("sample {i}"))).collect();
        let p = write_stub(dir.path(), &recs);
        let mut client = GeneratorClient::stub(&p);
        client.samples_per_prompt = 4;
        let pool = generate_candidates(&client, &default_templates(), &classes(), &LeakConfig::default()).unwrap();
        assert_eq!(pool.len(), 4);
    }

    #[test]
    fn empty_and_missing_stub() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_stub(dir.path(), &[]);
        assert!(matches!(
            generate_candidates(&GeneratorClient::stub(&p), &default_templates(), &classes(), &LeakConfig::default()),
            Err(Error::EmptyPool)
        ));
        let missing = dir.path().join("nope.jsonl");
        assert!(matches!(
            generate_candidates(&GeneratorClient::stub(missing), &default_templates(), &classes(), &LeakConfig::default()),
            Err(Error::File { .. })
        ));
    }

    /// Minimal HTTP server answering `responses` requests, returning the raw request bodies.
    fn serve(status: u16, body: &'static str, responses: usize) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/generate", listener.local_addr().unwrap());
        let h = thread::spawn(move || {
            let mut seen = Vec::new();
            for _ in 0..responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let l = line.trim_end();
                    if l.is_empty() {
                        break;
                    }
                    let lower = l.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = l.to_string();
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                seen.push(format!("{auth}|{}", String::from_utf8(buf).unwrap()));
                let mut s = stream;
                write!(
                    s,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (url, h)
    }

    #[test]
    fn external_endpoint_round_trip() {
        let (url, h) = serve(200, r#"{"texts":["bright acting","a positive tone"]}"#, 1);
        let mut client = GeneratorClient::external(url, Some("secret".into()));
        client.samples_per_prompt = 2;
        let templates = vec![default_templates().remove(0)];
        let pool = generate_candidates(&client, &templates, &classes()[..1], &LeakConfig::default()).unwrap();
        let texts: Vec<_> = pool.candidates().iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["bright acting", "a tone"]);
        let seen = h.join().unwrap();
        let (auth, body) = seen[0].split_once('|').unwrap();
        assert!(auth.ends_with("Bearer secret"), "{auth}");
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(v["prompt"], "describe what a positive review looks like");
        assert_eq!(v["n"], 2);
        assert_eq!(v["instruction"], DEFAULT_INSTRUCTION);
    }

    #[test]
    fn external_failure_reports_retries() {
        let (url, h) = serve(500, r#"{"error":"boom"}"#, 2);
        let mut client = GeneratorClient::external(url, None);
        client.max_retries = 1;
        let templates = vec![default_templates().remove(0)];
        match generate_candidates(&client, &templates, &classes()[..1], &LeakConfig::default()) {
            Err(Error::Generation { retries, .. }) => assert_eq!(retries, 1),
            other => panic!("unexpected {other:?}"),
        }
        h.join().unwrap();
    }
}
