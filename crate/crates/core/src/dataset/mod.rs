//! Fragment stores, labeled pair lists, splits and the synthetic corpus.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::{self, FlowGraph, RULES_VERSION};
use crate::frontend::{parse_fragment, Granularity, SourceFragment};
use crate::util::{read_text, write_atomic};

pub use synth::{gen_synthetic_corpus, SynthSpec, SyntheticCorpus};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CloneType {
    T1,
    T2,
    ST3,
    MT3,
    WT3T4,
    NonClone,
}

impl CloneType {
    pub const ALL: [CloneType; 6] = [
        CloneType::T1,
        CloneType::T2,
        CloneType::ST3,
        CloneType::MT3,
        CloneType::WT3T4,
        CloneType::NonClone,
    ];
}

impl fmt::Display for CloneType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CloneType::T1 => "T1",
            CloneType::T2 => "T2",
            CloneType::ST3 => "ST3",
            CloneType::MT3 => "MT3",
            CloneType::WT3T4 => "WT3T4",
            CloneType::NonClone => "NonClone",
        };
        f.write_str(s)
    }
}

impl FromStr for CloneType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        match norm.as_str() {
            "T1" => Ok(CloneType::T1),
            "T2" => Ok(CloneType::T2),
            "ST3" => Ok(CloneType::ST3),
            "MT3" => Ok(CloneType::MT3),
            "WT3T4" | "WT3" | "T4" => Ok(CloneType::WT3T4),
            "NONCLONE" | "NONE" | "FALSE" => Ok(CloneType::NonClone),
            _ => Err(Error::InvalidArgument(format!("unknown clone type `{s}`"))),
        }
    }
}

/// A labeled fragment pair; `label` is +1 for clones and -1 otherwise.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentPair {
    pub id1: String,
    pub id2: String,
    pub label: i8,
    pub clone_type: Option<CloneType>,
}

impl FragmentPair {
    pub fn new(id1: impl Into<String>, id2: impl Into<String>, clone: bool, clone_type: Option<CloneType>) -> Self {
        FragmentPair {
            id1: id1.into(),
            id2: id2.into(),
            label: if clone { 1 } else { -1 },
            clone_type,
        }
    }

    pub fn is_clone(&self) -> bool {
        self.label > 0
    }

    pub fn target(&self) -> f64 {
        f64::from(self.label)
    }
}

/// Fragments by id, each with its flow graph.
#[derive(Clone, Debug, Default)]
pub struct FragmentStore {
    fragments: BTreeMap<String, SourceFragment>,
    graphs: HashMap<String, FlowGraph>,
}

/// A fragment that failed to load.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub id: String,
    pub source: String,
    pub error: String,
}

impl FragmentStore {
    /// Parses and builds every fragment; failures are returned as skip
    /// records. Duplicate ids are an error.
    pub fn build(fragments: Vec<(SourceFragment, String)>, cache: Option<&GraphCache>) -> Result<(FragmentStore, Vec<SkipRecord>)> {
        let mut seen = BTreeSet::new();
        for (f, _) in &fragments {
            if !seen.insert(f.id.clone()) {
                return Err(Error::DuplicateId(f.id.clone()));
            }
        }
        let built: Vec<(SourceFragment, String, Result<FlowGraph>)> = fragments
            .into_par_iter()
            .map(|(f, src)| {
                let g = match cache {
                    Some(c) => c.get_or_build(&f),
                    None => build_graph(&f),
                };
                (f, src, g)
            })
            .collect();
        let mut store = FragmentStore::default();
        let mut skipped = Vec::new();
        for (f, source, g) in built {
            match g {
                Ok(g) => {
                    store.graphs.insert(f.id.clone(), g);
                    store.fragments.insert(f.id.clone(), f);
                }
                Err(e) => skipped.push(SkipRecord {
                    id: f.id,
                    source,
                    error: e.to_string(),
                }),
            }
        }
        if let Some(c) = cache {
            c.spot_check(&store)?;
        }
        Ok((store, skipped))
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.fragments.keys().map(String::as_str)
    }

    pub fn fragment(&self, id: &str) -> Result<&SourceFragment> {
        self.fragments
            .get(id)
            .ok_or_else(|| Error::UnknownFragment(id.to_string()))
    }

    pub fn graph(&self, id: &str) -> Result<&FlowGraph> {
        self.graphs
            .get(id)
            .ok_or_else(|| Error::UnknownFragment(id.to_string()))
    }

    pub fn fragments(&self) -> impl Iterator<Item = &SourceFragment> {
        self.fragments.values()
    }

    /// Checks that every pair refers to stored fragments.
    pub fn check_pairs(&self, pairs: &[FragmentPair]) -> Result<()> {
        for p in pairs {
            self.graph(&p.id1)?;
            self.graph(&p.id2)?;
        }
        Ok(())
    }

    /// Drops fragments that no pair refers to.
    pub fn retain_paired(&mut self, pairs: &[FragmentPair]) {
        let used: BTreeSet<&str> = pairs
            .iter()
            .flat_map(|p| [p.id1.as_str(), p.id2.as_str()])
            .collect();
        self.fragments.retain(|id, _| used.contains(id.as_str()));
        self.graphs.retain(|id, _| used.contains(id.as_str()));
    }

    /// Fragment record file contents.
    pub fn to_records(&self) -> String {
        records_text(self.fragments.values())
    }
}

pub fn build_graph(f: &SourceFragment) -> Result<FlowGraph> {
    flow::build(&parse_fragment(f)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordHeader {
    format: String,
    version: u32,
}

/// Fragment records, one JSON object per line after a format header.
pub fn records_text<'a>(fragments: impl IntoIterator<Item = &'a SourceFragment>) -> String {
    let mut out = serde_json::to_string(&RecordHeader {
        format: "fragments".into(),
        version: FORMAT_VERSION,
    })
    .expect("header serializes");
    out.push('\n');
    for f in fragments {
        out.push_str(&serde_json::to_string(f).expect("fragment serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_records(text: &str, origin: &str) -> Result<Vec<SourceFragment>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::format(format!("{origin}:{}", n + 1), e.to_string()))?;
        if value.get("format").is_some() {
            let h: RecordHeader = serde_json::from_value(value)
                .map_err(|e| Error::format(format!("{origin}:{}", n + 1), e.to_string()))?;
            if h.format != "fragments" || h.version != FORMAT_VERSION {
                return Err(Error::format(
                    origin,
                    format!("unsupported header {}/{}", h.format, h.version),
                ));
            }
            continue;
        }
        let f: SourceFragment = serde_json::from_value(value)
            .map_err(|e| Error::format(format!("{origin}:{}", n + 1), e.to_string()))?;
        out.push(f);
    }
    Ok(out)
}

/// Guesses the granularity of a stand-alone Java file.
fn fragment_from_file(id: String, code: String) -> SourceFragment {
    let method = SourceFragment::new(id.clone(), code.clone(), Granularity::Method);
    match parse_fragment(&method) {
        Err(Error::Granularity { .. }) => SourceFragment::new(id, code, Granularity::Class),
        _ => method,
    }
}

/// Loads fragments from a record file (`.jsonl`), a single `.java` file, or
/// a directory of `.java` files (ids are relative paths without extension).
pub fn load_corpus(path: &Path, cache: Option<&GraphCache>) -> Result<(FragmentStore, Vec<SkipRecord>)> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let mut fragments = Vec::new();
    if meta.is_dir() {
        let mut files: Vec<PathBuf> = walkdir::WalkDir::new(path)
            .sort_by_file_name()
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "java"))
            .map(|e| e.into_path())
            .collect();
        files.sort();
        for file in files {
            let rel = file.strip_prefix(path).unwrap_or(&file).with_extension("");
            let id = rel.to_string_lossy().replace('\\', "/");
            let code = read_text(&file)?;
            fragments.push((fragment_from_file(id, code), file.display().to_string()));
        }
    } else if path.extension().is_some_and(|x| x == "java") {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let fragment = fragment_from_file(id, read_text(path)?);
        // a lone file that fails to parse is an error, not a skip
        build_graph(&fragment)?;
        fragments.push((fragment, path.display().to_string()));
    } else {
        let origin = path.display().to_string();
        for (n, f) in parse_records(&read_text(path)?, &origin)?.into_iter().enumerate() {
            fragments.push((f, format!("{origin}#{}", n + 1)));
        }
    }
    let (store, skipped) = FragmentStore::build(fragments, cache)?;
    if store.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok((store, skipped))
}

pub fn skip_report(skipped: &[SkipRecord]) -> String {
    skipped
        .iter()
        .map(|s| serde_json::to_string(s).expect("skip record serializes") + "\n")
        .collect()
}

/// On-disk flow-graph cache keyed by a hash of the fragment and the
/// graph-construction rule version.
#[derive(Clone, Debug)]
pub struct GraphCache {
    dir: PathBuf,
}

impl GraphCache {
    pub fn new(dir: impl Into<PathBuf>) -> GraphCache {
        GraphCache { dir: dir.into() }
    }

    pub fn key(f: &SourceFragment) -> String {
        let mut h = Sha256::new();
        h.update(RULES_VERSION.to_le_bytes());
        h.update(f.id.as_bytes());
        h.update([0]);
        h.update(f.granularity.to_string().as_bytes());
        h.update([0]);
        h.update(f.code.as_bytes());
        hex::encode(h.finalize())
    }

    fn path_of(&self, f: &SourceFragment) -> PathBuf {
        self.dir.join(format!("{}.json", Self::key(f)))
    }

    pub fn get_or_build(&self, f: &SourceFragment) -> Result<FlowGraph> {
        let path = self.path_of(f);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(g) = flow::import_graph(&text) {
                return Ok(g);
            }
        }
        let g = build_graph(f)?;
        write_atomic(&path, flow::export_graph(&g, flow::GraphFormat::Json).as_bytes())?;
        Ok(g)
    }

    /// Rebuilds the first stored graph and compares it with the cached copy.
    fn spot_check(&self, store: &FragmentStore) -> Result<()> {
        if let Some(f) = store.fragments.values().next() {
            let fresh = build_graph(f)?;
            if &fresh != store.graph(&f.id)? {
                return Err(Error::format(
                    self.dir.display(),
                    format!("cached graph for `{}` differs from a rebuild; clear the cache", f.id),
                ));
            }
        }
        Ok(())
    }
}

/// Pair list: `#version 1` header, then `id1 <TAB> id2 <TAB> label [<TAB> type]`.
pub fn pairs_text(pairs: &[FragmentPair]) -> String {
    let mut out = format!("#version {FORMAT_VERSION}\n#id1\tid2\tlabel\tclone_type\n");
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{}", p.id1, p.id2, p.label));
        if let Some(t) = p.clone_type {
            out.push_str(&format!("\t{t}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<FragmentPair>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let at = || format!("{origin}:{}", n + 1);
        let line = line.trim_end_matches('\r');
        if let Some(rest) = line.strip_prefix("#version") {
            let v: u32 = rest
                .trim()
                .parse()
                .map_err(|_| Error::format(at(), "bad version line"))?;
            if v != FORMAT_VERSION {
                return Err(Error::format(at(), format!("unsupported pair-list version {v}")));
            }
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&cols.len()) {
            return Err(Error::format(at(), format!("expected 3 or 4 columns, found {}", cols.len())));
        }
        let label = match cols[2].trim() {
            "1" | "+1" | "true" => 1,
            "-1" | "0" | "false" => -1,
            other => return Err(Error::format(at(), format!("bad label `{other}`"))),
        };
        let clone_type = match cols.get(3).map(|s| s.trim()) {
            None | Some("") => None,
            Some(t) => Some(t.parse().map_err(|e: Error| Error::format(at(), e.to_string()))?),
        };
        if cols[0] == cols[1] {
            return Err(Error::format(at(), "a pair needs two different fragments"));
        }
        out.push(FragmentPair {
            id1: cols[0].to_string(),
            id2: cols[1].to_string(),
            label,
            clone_type,
        });
    }
    Ok(out)
}

pub fn load_pairs(path: &Path) -> Result<Vec<FragmentPair>> {
    parse_pairs(&read_text(path)?, &path.display().to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [8.0, 1.0, 1.0],
            seed: 0,
        }
    }
}

/// Seeded shuffle, then contiguous train/validation/test cuts.
pub fn split_pairs(pairs: &[FragmentPair], spec: &SplitSpec) -> Result<[Vec<FragmentPair>; 3]> {
    let total: f64 = spec.ratios.iter().sum();
    if spec.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || total <= 0.0 {
        return Err(Error::InvalidArgument("split ratios must be non-negative with a positive sum".into()));
    }
    let mut shuffled = pairs.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n = shuffled.len();
    let n_train = ((n as f64) * spec.ratios[0] / total).round() as usize;
    let n_valid = (((n as f64) * spec.ratios[1] / total).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let test = shuffled.split_off(n_train + n_valid);
    let valid = shuffled.split_off(n_train);
    Ok([shuffled, valid, test])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeShare {
    pub count: usize,
    pub percent: f64,
}

/// Count and percentage of pairs per clone type.
pub fn type_breakdown(pairs: &[FragmentPair]) -> Result<BTreeMap<CloneType, TypeShare>> {
    let mut counts: BTreeMap<CloneType, usize> = CloneType::ALL.iter().map(|&t| (t, 0)).collect();
    for (index, p) in pairs.iter().enumerate() {
        let t = p.clone_type.ok_or(Error::MissingTypeTags { index })?;
        *counts.get_mut(&t).expect("all types present") += 1;
    }
    let total = pairs.len();
    Ok(counts
        .into_iter()
        .map(|(t, count)| {
            let percent = if total == 0 { 0.0 } else { 100.0 * count as f64 / total as f64 };
            (t, TypeShare { count, percent })
        })
        .collect())
}
