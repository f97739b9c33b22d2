//! Translation of source bundles, with a content-addressed product cache.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Translator {
    Rust,
    C,
}

impl Translator {
    pub fn for_entrypoint(entrypoint: &str) -> Option<Self> {
        if entrypoint.ends_with(".rs") {
            Some(Translator::Rust)
        } else if entrypoint.ends_with(".c") {
            Some(Translator::C)
        } else {
            None
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Translator::Rust => "rustc-2021-O2",
            Translator::C => "cc-O2",
        }
    }

    /// Dependencies the toolchain provides without fetching anything.
    pub fn supports_dependency(self, name: &str) -> bool {
        match self {
            Translator::Rust => name == "std",
            Translator::C => matches!(name, "libc" | "libm" | "m"),
        }
    }

    fn command(self, dir: &Path, entrypoint: &str, out: &Path, sources: &[String]) -> Command {
        let mut cmd = match self {
            Translator::Rust => {
                let mut c = Command::new(std::env::var_os("RUSTC").unwrap_or_else(|| "rustc".into()));
                c.args(["--edition", "2021", "-C", "opt-level=2", "--crate-name", "service", "-o"]).arg(out).arg(entrypoint);
                c
            }
            Translator::C => {
                let mut c = Command::new("cc");
                c.args(["-O2", "-std=c11", "-o"]).arg(out).args(sources).arg("-lm");
                c
            }
        };
        cmd.current_dir(dir);
        cmd
    }
}

/// Failure to translate a bundle, with the translator's output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildFailure {
    pub log: String,
}

impl BuildFailure {
    fn new(log: impl Into<String>) -> Self {
        Self { log: log.into() }
    }
}

/// Built services keyed by SHA-256 over the translator and every bundle
/// file. Lookups are concurrent; builds are serialized.
#[derive(Debug)]
pub struct BuildCache {
    root: PathBuf,
    write: Mutex<()>,
}

impl BuildCache {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root, write: Mutex::new(()) })
    }

    /// Shared cache under the system temp directory.
    pub fn global() -> &'static BuildCache {
        static CACHE: std::sync::OnceLock<BuildCache> = std::sync::OnceLock::new();
        CACHE.get_or_init(|| {
            let root = std::env::var_os("SHELLFORGE_BUILD_CACHE")
                .map(PathBuf::from)
                .unwrap_or_else(|| std::env::temp_dir().join("shellforge-build-cache"));
            BuildCache::new(root).expect("build cache directory is writable")
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `files` are paths relative to the bundle directory.
    pub fn key(translator: Translator, files: &BTreeMap<String, &[u8]>) -> String {
        let mut h = Sha256::new();
        h.update(translator.id().as_bytes());
        for (path, bytes) in files {
            h.update((path.len() as u64).to_le_bytes());
            h.update(path.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        hex::encode(h.finalize())
    }

    pub fn lookup(&self, key: &str) -> Option<PathBuf> {
        let product = self.root.join(key).join("service");
        product.is_file().then_some(product)
    }

    /// Return the cached product, building it first if needed. The second
    /// value is true when this call ran the translator.
    pub fn get_or_build(
        &self,
        translator: Translator,
        entrypoint: &str,
        files: &BTreeMap<String, &[u8]>,
    ) -> Result<(PathBuf, bool), BuildFailure> {
        let key = Self::key(translator, files);
        if let Some(product) = self.lookup(&key) {
            return Ok((product, false));
        }
        let _guard = self.write.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(product) = self.lookup(&key) {
            return Ok((product, false));
        }
        let io_err = |e: io::Error| BuildFailure::new(format!("build cache: {e}"));
        let staging = tempfile::Builder::new().prefix(".build-").tempdir_in(&self.root).map_err(io_err)?;
        let src = staging.path().join("src");
        let mut sources = Vec::new();
        for (rel, bytes) in files {
            let path = src.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(io_err)?;
            }
            fs::write(&path, bytes).map_err(io_err)?;
            if rel.ends_with(".c") {
                sources.push(rel.clone());
            }
        }
        let out = staging.path().join("service");
        let output = translator
            .command(&src, entrypoint, &out, &sources)
            .output()
            .map_err(|e| BuildFailure::new(format!("cannot run translator {}: {e}", translator.id())))?;
        if !output.status.success() {
            let mut log = String::from_utf8_lossy(&output.stderr).into_owned();
            log.push_str(&String::from_utf8_lossy(&output.stdout));
            return Err(BuildFailure::new(log));
        }
        fs::remove_dir_all(&src).map_err(io_err)?;
        let target = self.root.join(&key);
        let staged = staging.keep();
        if let Err(e) = fs::rename(&staged, &target) {
            let _ = fs::remove_dir_all(&staged);
            if self.lookup(&key).is_none() {
                return Err(io_err(e));
            }
        }
        Ok((target.join("service"), true))
    }
}
