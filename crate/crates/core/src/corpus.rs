//! Time-bucketed corpus index. Files live under `<dataset>/<YYYY-MM>/`;
//! a manifest lists each with its modality, month and size.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io_util::{read, write_atomic};
use crate::month::YearMonth;

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Bytes,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Bytes => "bytes",
        })
    }
}

/// Extension table used by [`ingest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestRules {
    pub text_extensions: Vec<String>,
    pub bytes_extensions: Vec<String>,
}

impl Default for IngestRules {
    fn default() -> Self {
        IngestRules {
            text_extensions: ["txt", "md", "tex"].map(String::from).to_vec(),
            bytes_extensions: ["bin", "raw"].map(String::from).to_vec(),
        }
    }
}

impl IngestRules {
    fn modality(&self, path: &Path) -> Option<Modality> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        if self.text_extensions.contains(&ext) {
            Some(Modality::Text)
        } else if self.bytes_extensions.contains(&ext) {
            Some(Modality::Bytes)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: String,
    /// Relative to the manifest root, `/`-separated.
    pub path: String,
    pub modality: Modality,
    pub year_month: YearMonth,
    pub byte_size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub dataset: String,
    /// Directory the entry paths are relative to. A relative root is taken
    /// relative to the manifest file.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub year_month: Option<YearMonth>,
    pub modality: Modality,
    pub data: Vec<u8>,
}

impl Document {
    pub fn text(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            year_month: None,
            modality: Modality::Text,
            data: text.into().into_bytes(),
        }
    }

    pub fn bytes(id: impl Into<String>, data: Vec<u8>) -> Self {
        Document {
            id: id.into(),
            year_month: None,
            modality: Modality::Bytes,
            data,
        }
    }

    pub fn with_month(mut self, ym: YearMonth) -> Self {
        self.year_month = Some(ym);
        self
    }

    pub fn as_text(&self) -> Result<&str> {
        std::str::from_utf8(&self.data).map_err(|e| Error::Corpus {
            path: PathBuf::from(&self.id),
            message: format!("not valid UTF-8: {e}"),
        })
    }
}

fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

fn corpus_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Corpus {
        path: path.to_owned(),
        message: message.into(),
    }
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        if entry.file_name().to_string_lossy().starts_with('.') {
            continue;
        }
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

/// Indexes `dir` laid out as `dir/YYYY-MM/<files>`. The dataset name
/// defaults to the directory name; document ids are `YYYY-MM/<file stem>`.
pub fn ingest(dir: &Path, dataset: Option<&str>, rules: &IngestRules) -> Result<CorpusManifest> {
    if !dir.is_dir() {
        return Err(corpus_err(dir, "not a directory"));
    }
    let root = dir
        .canonicalize()
        .map_err(|e| Error::io(format!("resolving {}", dir.display()), e))?;
    let dataset = match dataset {
        Some(d) => d.to_owned(),
        None => root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into()),
    };
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for month_dir in list_dir(&root)? {
        let name = month_dir.file_name().unwrap().to_string_lossy().into_owned();
        if !month_dir.is_dir() {
            return Err(corpus_err(&month_dir, "expected a YYYY-MM directory"));
        }
        let ym: YearMonth = name
            .parse()
            .map_err(|e| corpus_err(&month_dir, format!("bad month directory: {e}")))?;
        for file in list_dir(&month_dir)? {
            if !file.is_file() {
                return Err(corpus_err(&file, "nested directories are not part of the layout"));
            }
            let modality = rules
                .modality(&file)
                .ok_or_else(|| corpus_err(&file, "extension matches neither text nor bytes"))?;
            let stem = file
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| corpus_err(&file, "file name is not UTF-8"))?;
            let doc_id = format!("{ym}/{stem}");
            if !seen.insert(doc_id.clone()) {
                return Err(corpus_err(&file, format!("duplicate document id `{doc_id}`")));
            }
            let data = read(&file)?;
            let file_name = file.file_name().unwrap().to_string_lossy();
            entries.push(ManifestEntry {
                doc_id,
                path: format!("{name}/{file_name}"),
                modality,
                year_month: ym,
                byte_size: data.len() as u64,
                sha256: Some(sha256_hex(&data)),
            });
        }
    }
    entries.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(CorpusManifest {
        schema_version: MANIFEST_SCHEMA,
        dataset,
        root,
        entries,
    })
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: CorpusManifest = serde_json::from_slice(&read(path)?)
            .map_err(|e| corpus_err(path, format!("bad manifest: {e}")))?;
        if m.schema_version != MANIFEST_SCHEMA {
            return Err(corpus_err(
                path,
                format!("manifest schema {} is not {MANIFEST_SCHEMA}", m.schema_version),
            ));
        }
        if m.root.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            m.root = base.join(&m.root);
        }
        m.validate().map_err(|e| corpus_err(path, e.to_string()))?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }

    fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !ids.insert(&e.doc_id) {
                return Err(Error::InvalidConfig(format!("duplicate document id `{}`", e.doc_id)));
            }
        }
        Ok(())
    }

    pub fn months(&self) -> Vec<YearMonth> {
        self.entries
            .iter()
            .map(|e| e.year_month)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn buckets(&self) -> BTreeMap<YearMonth, Vec<&ManifestEntry>> {
        let mut out: BTreeMap<YearMonth, Vec<&ManifestEntry>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.year_month).or_default().push(e);
        }
        out
    }

    pub fn load_entry(&self, e: &ManifestEntry) -> Result<Document> {
        let path = self.root.join(&e.path);
        let data = read(&path)?;
        if data.len() as u64 != e.byte_size {
            return Err(Error::Integrity {
                path,
                expected: e.byte_size,
                actual: data.len() as u64,
            });
        }
        if let Some(expected) = &e.sha256 {
            let actual = sha256_hex(&data);
            if &actual != expected {
                return Err(corpus_err(&path, format!("sha256 {actual} does not match manifest {expected}")));
            }
        }
        if e.modality == Modality::Text {
            std::str::from_utf8(&data).map_err(|err| corpus_err(&path, format!("not valid UTF-8: {err}")))?;
        }
        Ok(Document {
            id: e.doc_id.clone(),
            year_month: Some(e.year_month),
            modality: e.modality,
            data,
        })
    }

    /// Documents of one month, in id order, each checked against the
    /// manifest.
    pub fn load_bucket(&self, ym: YearMonth) -> Result<Vec<Document>> {
        let entries: Vec<&ManifestEntry> = self.entries.iter().filter(|e| e.year_month == ym).collect();
        if entries.is_empty() {
            return Err(Error::Corpus {
                path: self.root.clone(),
                message: format!("no bucket for {ym}"),
            });
        }
        entries.into_iter().map(|e| self.load_entry(e)).collect()
    }

    pub fn load_all(&self) -> Result<Vec<Document>> {
        self.entries.iter().map(|e| self.load_entry(e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, rel: &str, data: &[u8]) {
        let p = dir.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, data).unwrap();
    }

    #[test]
    fn empty_directory() {
        let d = tempfile::tempdir().unwrap();
        let m = ingest(d.path(), Some("wikitext"), &IngestRules::default()).unwrap();
        assert!(m.entries.is_empty());
        assert_eq!(m.dataset, "wikitext");
    }

    #[test]
    fn three_files_one_month() {
        let d = tempfile::tempdir().unwrap();
        let ds = d.path().join("wikitext");
        for f in ["a.txt", "b.md", "c.bin"] {
            write(&ds, &format!("2023-05/{f}"), f.as_bytes());
        }
        let m = ingest(&ds, None, &IngestRules::default()).unwrap();
        assert_eq!(m.dataset, "wikitext");
        assert_eq!(m.entries.len(), 3);
        assert!(m.entries.iter().all(|e| e.year_month.to_string() == "2023-05"));
        assert_eq!(m.entries[2].modality, Modality::Bytes);
        assert_eq!(ingest(&ds, None, &IngestRules::default()).unwrap(), m);
    }

    #[test]
    fn bad_layouts_name_the_path() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "2023-13/a.txt", b"x");
        let err = ingest(d.path(), None, &IngestRules::default()).unwrap_err();
        assert!(err.to_string().contains("2023-13"), "{err}");

        let d = tempfile::tempdir().unwrap();
        write(d.path(), "2023-01/a.txt", b"x");
        write(d.path(), "2023-01/a.md", b"y");
        assert!(ingest(d.path(), None, &IngestRules::default()).unwrap_err().to_string().contains("duplicate"));

        let d = tempfile::tempdir().unwrap();
        write(d.path(), "2023-01/a.exe", b"x");
        assert!(ingest(d.path(), None, &IngestRules::default()).is_err());
    }

    #[test]
    fn buckets_load_and_verify() {
        let d = tempfile::tempdir().unwrap();
        let blob: Vec<u8> = (0..=255).collect();
        write(d.path(), "2023-02/z.txt", "héllo".as_bytes());
        write(d.path(), "2023-02/a.raw", &blob);
        write(d.path(), "2023-03/m.txt", b"march");
        let m = ingest(d.path(), None, &IngestRules::default()).unwrap();
        let mpath = d.path().join("manifest.json");
        m.save(&mpath).unwrap();
        let m = CorpusManifest::load(&mpath).unwrap();
        assert_eq!(m.months().len(), 2);

        let feb = m.load_bucket("2023-02".parse().unwrap()).unwrap();
        assert_eq!(feb.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["2023-02/a", "2023-02/z"]);
        assert_eq!(feb[0].data, blob);
        assert_eq!(feb[1].as_text().unwrap(), "héllo");
        assert!(m.load_bucket("2024-01".parse().unwrap()).is_err());

        std::fs::write(d.path().join("2023-02/a.raw"), &blob[..200]).unwrap();
        assert!(matches!(
            m.load_bucket("2023-02".parse().unwrap()),
            Err(Error::Integrity { expected: 256, actual: 200, .. })
        ));
    }
}
