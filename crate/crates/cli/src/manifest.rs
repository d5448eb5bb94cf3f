//! Run manifests.
//!
//! Each stage writes `<manifests>/<stage>.json` listing the hashes of what it
//! read and wrote, the knobs it ran with, and for every input the manifest
//! of the stage that produced it. Manifests carry no timestamps, so a rerun
//! with the same inputs and seeds reproduces them byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "qa-forge";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub role: String,
    /// Relative to the work directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpstreamRef {
    pub stage: String,
    pub manifest_sha256: String,
    pub artifact: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool: String,
    pub version: String,
    pub settings: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub upstream: Vec<UpstreamRef>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hashes one file, or every file below a directory in path order.
fn hash_path(path: &Path) -> anyhow::Result<(String, u64)> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        let mut hasher = Sha256::new();
        let mut total = 0;
        for f in files {
            let rel = relative(path, &f);
            let data = fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
            hasher.update(rel.as_bytes());
            hasher.update([0u8]);
            hasher.update(sha256_hex(&data).as_bytes());
            total += data.len() as u64;
        }
        Ok((hex::encode(hasher.finalize()), total))
    } else {
        let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok((sha256_hex(&data), data.len() as u64))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn relative(base: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(base).unwrap_or(p);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

pub struct ManifestBuilder {
    work_dir: PathBuf,
    manifest_dir: PathBuf,
    manifest: Manifest,
}

impl ManifestBuilder {
    pub fn new(stage: &str, work_dir: &Path, manifest_dir: &Path, settings: serde_json::Value) -> Self {
        ManifestBuilder {
            work_dir: work_dir.to_path_buf(),
            manifest_dir: manifest_dir.to_path_buf(),
            manifest: Manifest {
                stage: stage.to_string(),
                tool: TOOL.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                settings,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                upstream: Vec::new(),
            },
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.manifest.seeds.insert(name.to_string(), value);
        self
    }

    fn artifact(&self, role: &str, path: &Path) -> anyhow::Result<Artifact> {
        let (sha256, bytes) = hash_path(path)?;
        Ok(Artifact {
            role: role.to_string(),
            path: relative(&self.work_dir, path),
            sha256,
            bytes,
        })
    }

    pub fn input(&mut self, role: &str, path: &Path) -> anyhow::Result<&mut Self> {
        let a = self.artifact(role, path)?;
        self.manifest.inputs.push(a);
        Ok(self)
    }

    pub fn output(&mut self, role: &str, path: &Path) -> anyhow::Result<&mut Self> {
        let a = self.artifact(role, path)?;
        self.manifest.outputs.push(a);
        Ok(self)
    }

    /// Links inputs to the manifests that produced them and writes the
    /// manifest. Returns its path.
    pub fn write(mut self) -> anyhow::Result<PathBuf> {
        let existing = load_all(&self.manifest_dir)?;
        for input in &self.manifest.inputs {
            for (file_hash, m) in &existing {
                if m.stage == self.manifest.stage {
                    continue;
                }
                if m.outputs
                    .iter()
                    .any(|o| o.path == input.path && o.sha256 == input.sha256)
                {
                    self.manifest.upstream.push(UpstreamRef {
                        stage: m.stage.clone(),
                        manifest_sha256: file_hash.clone(),
                        artifact: input.path.clone(),
                    });
                }
            }
        }
        self.manifest
            .upstream
            .sort_by(|a, b| (&a.artifact, &a.stage).cmp(&(&b.artifact, &b.stage)));
        fs::create_dir_all(&self.manifest_dir)?;
        let path = self.manifest_dir.join(format!("{}.json", self.manifest.stage));
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}

/// Every manifest in `dir` with the hash of its file, ordered by stage.
pub fn load_all(dir: &Path) -> anyhow::Result<Vec<(String, Manifest)>> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    for p in paths {
        let data = fs::read(&p)?;
        let m: Manifest =
            serde_json::from_slice(&data).with_context(|| format!("parsing manifest {}", p.display()))?;
        out.push((sha256_hex(&data), m));
    }
    Ok(out)
}

/// Checks that every recorded output still has its recorded hash and that
/// every upstream manifest is unchanged. Returns one line per problem.
pub fn verify(work_dir: &Path, dir: &Path) -> anyhow::Result<Vec<String>> {
    let all = load_all(dir)?;
    if all.is_empty() {
        bail!("no manifests in {}", dir.display());
    }
    let by_stage: BTreeMap<&str, &String> = all.iter().map(|(h, m)| (m.stage.as_str(), h)).collect();
    let mut problems = Vec::new();
    for (_, m) in &all {
        for o in &m.outputs {
            let p = work_dir.join(&o.path);
            match hash_path(&p) {
                Ok((h, _)) if h == o.sha256 => {}
                Ok(_) => problems.push(format!("{}: {} changed since it was written", m.stage, o.path)),
                Err(_) => problems.push(format!("{}: {} is missing", m.stage, o.path)),
            }
        }
        for u in &m.upstream {
            match by_stage.get(u.stage.as_str()) {
                Some(h) if **h == u.manifest_sha256 => {}
                Some(_) => problems.push(format!(
                    "{}: upstream {} manifest was rewritten; rerun {}",
                    m.stage, u.stage, m.stage
                )),
                None => problems.push(format!("{}: upstream {} manifest is missing", m.stage, u.stage)),
            }
        }
    }
    Ok(problems)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let work = dir.path();
        let mdir = work.join("manifests");
        fs::write(work.join("a.txt"), "alpha").unwrap();
        let mut first = ManifestBuilder::new("first", work, &mdir, serde_json::json!({}));
        first.output("a", &work.join("a.txt")).unwrap();
        first.write().unwrap();

        fs::write(work.join("b.txt"), "beta").unwrap();
        let mut second = ManifestBuilder::new("second", work, &mdir, serde_json::json!({"k": 1}));
        second.seed("split", 3);
        second.input("a", &work.join("a.txt")).unwrap();
        second.output("b", &work.join("b.txt")).unwrap();
        let p = second.write().unwrap();
        let m: Manifest = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(m.upstream.len(), 1);
        assert_eq!(m.upstream[0].stage, "first");
        assert_eq!(m.inputs[0].path, "a.txt");
        assert!(verify(work, &mdir).unwrap().is_empty());

        fs::write(work.join("a.txt"), "changed").unwrap();
        let problems = verify(work, &mdir).unwrap();
        assert_eq!(problems, ["first: a.txt changed since it was written"]);
    }

    #[test]
    fn directory_hash_is_order_independent_of_creation() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        fs::write(d1.path().join("x"), "1").unwrap();
        fs::write(d1.path().join("y"), "2").unwrap();
        fs::write(d2.path().join("y"), "2").unwrap();
        fs::write(d2.path().join("x"), "1").unwrap();
        assert_eq!(hash_path(d1.path()).unwrap(), hash_path(d2.path()).unwrap());
    }
}
