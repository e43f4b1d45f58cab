//! Competition-format TSV readers and writers.
//!
//! Files are UTF-8, tab separated, unquoted. A leading header line is
//! recognised by a non-numeric third column (or a `user`-like first field)
//! and skipped, as is any later repetition of it.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market::{CandidateSlate, RatingTriple, SLATE_SIZE};
use crate::order::rank_order;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn looks_like_header(fields: &[&str]) -> bool {
    let first = fields[0].to_ascii_lowercase();
    if matches!(first.as_str(), "userid" | "user_id" | "user" | "uid") {
        return true;
    }
    fields.len() >= 3 && fields[2].trim().parse::<f64>().is_err()
}

/// Non-empty lines with their 1-based line numbers, minus header lines.
fn data_lines(text: &str) -> Vec<(usize, &str)> {
    let mut header: Option<&str> = None;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if Some(line) == header {
            continue;
        }
        if header.is_none() && out.is_empty() {
            let fields: Vec<&str> = line.split('\t').collect();
            if looks_like_header(&fields) {
                header = Some(line);
                continue;
            }
        }
        out.push((n + 1, line));
    }
    out
}

/// Reads `user<TAB>item[<TAB>rating]` lines. When `has_rating_column` is
/// false every rating is emitted as 1.0 regardless of any third column.
pub fn parse_ratings(path: &Path, has_rating_column: bool) -> Result<Vec<RatingTriple>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (n, line) in data_lines(&text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 || (has_rating_column && fields.len() != 3) {
            return Err(parse_err(
                path,
                n,
                format!("expected {} columns, found {}", if has_rating_column { 3 } else { 2 }, fields.len()),
            ));
        }
        let (user, item) = (fields[0], fields[1]);
        if user.is_empty() || item.is_empty() {
            return Err(parse_err(path, n, "empty user or item token"));
        }
        let rating = if has_rating_column {
            let r: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, n, format!("rating {:?} is not a number", fields[2])))?;
            if !r.is_finite() || r <= 0.0 || r > 5.0 {
                return Err(parse_err(path, n, format!("rating {r} outside (0, 5]")));
            }
            r
        } else {
            1.0
        };
        out.push(RatingTriple::new(user, item, rating));
    }
    Ok(out)
}

/// Reads `user<TAB>item1,item2,...` slate lines in file order.
pub fn parse_run(path: &Path) -> Result<Vec<CandidateSlate>> {
    let text = read(path)?;
    let mut seen_users = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in data_lines(&text) {
        let (user, items) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, n, "expected user<TAB>items"))?;
        if user.is_empty() {
            return Err(parse_err(path, n, "empty user token"));
        }
        let candidates: Vec<String> = items.split(',').map(|s| s.trim().to_string()).collect();
        if candidates.len() != SLATE_SIZE {
            return Err(Error::Slate {
                user: user.to_string(),
                msg: format!("slate size {} ≠ {}", candidates.len(), SLATE_SIZE),
            });
        }
        let mut distinct = HashSet::new();
        for c in &candidates {
            if c.is_empty() || !distinct.insert(c.as_str()) {
                return Err(Error::Slate {
                    user: user.to_string(),
                    msg: format!("empty or duplicate candidate {c:?}"),
                });
            }
        }
        if !seen_users.insert(user.to_string()) {
            return Err(Error::Slate {
                user: user.to_string(),
                msg: "duplicate user in run file".into(),
            });
        }
        out.push(CandidateSlate {
            user_id: user.to_string(),
            candidates,
            positive: None,
        });
    }
    Ok(out)
}

/// Reads `user<TAB>item<TAB>1` lines; one positive per user.
pub fn parse_qrels(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = read(path)?;
    let mut out = BTreeMap::new();
    for (n, line) in data_lines(&text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, n, format!("expected 3 columns, found {}", fields.len())));
        }
        let rel: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, n, "relevance is not a number"))?;
        if rel != 1.0 {
            return Err(parse_err(path, n, format!("relevance {rel} ≠ 1")));
        }
        if out.insert(fields[0].to_string(), fields[1].to_string()).is_some() {
            return Err(parse_err(path, n, format!("second positive for user {}", fields[0])));
        }
    }
    Ok(out)
}

/// Writes `content` to `path` through a temporary sibling and a rename, so a
/// reader never observes a half-written file.
pub fn atomic_write(path: &Path, content: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp: PathBuf = path.to_path_buf();
    let name = format!(
        ".{}.tmp{}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out"),
        std::process::id()
    );
    tmp.set_file_name(name);
    fs::write(&tmp, content).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_ratings(path: &Path, triples: &[RatingTriple], with_rating: bool) -> Result<()> {
    let mut s = String::new();
    for t in triples {
        if with_rating {
            let _ = writeln!(s, "{}\t{}\t{}", t.user_id, t.item_id, t.rating);
        } else {
            let _ = writeln!(s, "{}\t{}", t.user_id, t.item_id);
        }
    }
    atomic_write(path, s.as_bytes())
}

pub fn write_run(path: &Path, slates: &[CandidateSlate]) -> Result<()> {
    let mut s = String::new();
    for slate in slates {
        let _ = writeln!(s, "{}\t{}", slate.user_id, slate.candidates.join(","));
    }
    atomic_write(path, s.as_bytes())
}

pub fn write_qrels(path: &Path, qrels: &BTreeMap<String, String>) -> Result<()> {
    let mut s = String::new();
    for (u, i) in qrels {
        let _ = writeln!(s, "{u}\t{i}\t1");
    }
    atomic_write(path, s.as_bytes())
}

/// A slate with its final scores and the optional tie-breaking scores.
#[derive(Debug, Clone)]
pub struct ScoredSlate {
    pub user_id: String,
    pub items: Vec<String>,
    pub scores: Vec<f64>,
    pub secondary: Option<Vec<f64>>,
}

/// Renders `user<TAB>item<TAB>rank<TAB>score` lines, candidates in the
/// pipeline's total order. Fails before producing anything if a score is
/// not finite.
pub fn render_submission(slates: &[ScoredSlate]) -> Result<String> {
    for s in slates {
        if s.scores.len() != s.items.len() {
            return Err(Error::Shape(format!("slate {}: score count mismatch", s.user_id)));
        }
        let bad = s
            .scores
            .iter()
            .chain(s.secondary.iter().flatten())
            .find(|x| !x.is_finite());
        if let Some(x) = bad {
            return Err(Error::NonFinite(format!("score {x} in slate {}", s.user_id)));
        }
    }
    let mut out = String::new();
    for s in slates {
        let order = rank_order(&s.scores, s.secondary.as_deref(), &s.items);
        for (r, &i) in order.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", s.user_id, s.items[i], r + 1, s.scores[i]);
        }
    }
    Ok(out)
}

pub fn write_submission(slates: &[ScoredSlate], path: &Path) -> Result<()> {
    let text = render_submission(slates)?;
    atomic_write(path, text.as_bytes())
}

/// Hex SHA-256 of a file's bytes.
pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hash_bytes(&bytes))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
