//! Conversion between runtime strategies and standalone bundles.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::classify::{classify_level, HeavinessLevel, RuntimeStrategy};
use crate::engine::{self, BuildCache};
use crate::model::{
    parse_package, serialize_package, validate, AasPackage, ArtifactKind, SubmodelElement, SyncMode, QUALIFIER_DELEGATION,
};

pub const LAUNCH_FILE: &str = "launch.json";
pub const PACKAGE_FILE: &str = "package.aaspkg";
pub const CACHE_DIR: &str = "cache";
pub const LAUNCHER_FILE: &str = "shellforge";

pub const WARN_ENDPOINTS: &str = "endpoint host names are system-specific; re-parameterize";
pub const WARN_BUILD_CACHE: &str = "build cache discarded; rebuild required";
pub const WARN_ENGINE_IDLE: &str = "no artifacts; engine idle";

/// Functionality a runtime provides for a package.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    Api,
    Sync,
    ServiceExecution,
    Eventing,
    BuildCache,
    Subscriptions(usize),
    Extension(String),
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Api => f.write_str("api"),
            Feature::Sync => f.write_str("sync"),
            Feature::ServiceExecution => f.write_str("service execution"),
            Feature::Eventing => f.write_str("eventing"),
            Feature::BuildCache => f.write_str("build cache"),
            Feature::Subscriptions(n) => write!(f, "subscriptions({n})"),
            Feature::Extension(name) => write!(f, "extension:{name}"),
        }
    }
}

impl Serialize for Feature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Features a standalone bundle can embed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeFeature {
    Api,
    Sync,
    ServiceEngine,
    Eventing,
}

impl RuntimeFeature {
    pub const ALL: [Self; 4] = [Self::Api, Self::Sync, Self::ServiceEngine, Self::Eventing];

    pub fn all() -> BTreeSet<Self> {
        Self::ALL.into_iter().collect()
    }
}

impl std::str::FromStr for RuntimeFeature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "api" => Ok(Self::Api),
            "sync" => Ok(Self::Sync),
            "service_engine" | "service-engine" => Ok(Self::ServiceEngine),
            "eventing" => Ok(Self::Eventing),
            other => Err(format!("unknown runtime feature `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StandaloneConfig {
    pub target_dir: PathBuf,
    pub include_build_cache: bool,
    pub features: BTreeSet<RuntimeFeature>,
}

/// Runtime state of a hosted package that a file cannot carry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RuntimeState {
    pub subscriptions: usize,
    pub build_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConversionReport {
    pub from: RuntimeStrategy,
    pub to: RuntimeStrategy,
    pub retained: Vec<Feature>,
    pub dropped: Vec<Feature>,
    pub warnings: Vec<String>,
}

impl ConversionReport {
    pub fn render_text(&self) -> String {
        let list = |fs: &[Feature]| {
            if fs.is_empty() {
                "(none)".to_string()
            } else {
                fs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
            }
        };
        let mut out = format!(
            "conversion: {} -> {}\nretained: {}\ndropped: {}\n",
            self.from,
            self.to,
            list(&self.retained),
            list(&self.dropped)
        );
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PackagerError {
    #[error("feature unavailable: {0}")]
    FeatureUnavailable(String),
    #[error("invalid package: {0}")]
    InvalidPackage(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("i/o error: {0}")]
    Io(String),
}

fn io(e: std::io::Error) -> PackagerError {
    PackagerError::Io(e.to_string())
}

fn has_delegation(pkg: &AasPackage) -> bool {
    pkg.submodels.iter().flat_map(|sm| &sm.elements).any(|e| match e {
        SubmodelElement::Operation(op) => op.qualifier(QUALIFIER_DELEGATION).is_some(),
        _ => false,
    })
}

fn has_automatic_sync(pkg: &AasPackage) -> bool {
    !pkg.endpoints.is_empty()
        && pkg.sync_config.as_ref().is_some_and(|s| s.inbound == SyncMode::Automatic || s.outbound == SyncMode::Automatic)
}

/// Whether a built product for every source bundle of `pkg` is in `cache`.
pub fn build_cache_present(pkg: &AasPackage, cache: &BuildCache) -> bool {
    let bundles: Vec<_> = pkg.artifacts().iter().filter(|a| a.kind == ArtifactKind::SourceBundle).collect();
    !bundles.is_empty() && bundles.iter().all(|a| engine::cached_product(a, pkg, cache).is_some())
}

/// What a package has while running under `strategy`.
pub fn source_features(pkg: &AasPackage, strategy: RuntimeStrategy, state: &RuntimeState) -> Vec<Feature> {
    if strategy == RuntimeStrategy::Passive {
        return Vec::new();
    }
    let level = classify_level(pkg);
    let mut out = Vec::new();
    if level >= HeavinessLevel::FIXED_QUERY {
        out.push(Feature::Api);
    }
    if has_automatic_sync(pkg) {
        out.push(Feature::Sync);
    }
    if !pkg.artifacts().is_empty() || has_delegation(pkg) {
        out.push(Feature::ServiceExecution);
    }
    if level >= HeavinessLevel::FIXED_QUERY {
        out.push(Feature::Eventing);
    }
    if state.build_cache {
        out.push(Feature::BuildCache);
    }
    if state.subscriptions > 0 {
        out.push(Feature::Subscriptions(state.subscriptions));
    }
    if strategy == RuntimeStrategy::Standalone {
        out.extend(pkg.manifest.standalone_extensions.iter().cloned().map(Feature::Extension));
    }
    out
}

fn retained_by(feature: &Feature, to: RuntimeStrategy, standalone: Option<&StandaloneConfig>) -> bool {
    let has = |f: RuntimeFeature| standalone.is_none_or(|c| c.features.contains(&f));
    match (to, feature) {
        (RuntimeStrategy::Passive, _) => false,
        (_, Feature::Subscriptions(_)) => false,
        (RuntimeStrategy::ServerHosted, Feature::BuildCache | Feature::Extension(_)) => false,
        (RuntimeStrategy::ServerHosted, _) => true,
        (RuntimeStrategy::Standalone, Feature::Api) => has(RuntimeFeature::Api),
        (RuntimeStrategy::Standalone, Feature::Sync) => has(RuntimeFeature::Sync),
        (RuntimeStrategy::Standalone, Feature::ServiceExecution) => has(RuntimeFeature::ServiceEngine),
        (RuntimeStrategy::Standalone, Feature::Eventing) => has(RuntimeFeature::Eventing),
        (RuntimeStrategy::Standalone, Feature::BuildCache) => standalone.is_none_or(|c| c.include_build_cache),
        (RuntimeStrategy::Standalone, Feature::Extension(_)) => true,
    }
}

fn report(
    from: RuntimeStrategy,
    to: RuntimeStrategy,
    pkg: &AasPackage,
    state: &RuntimeState,
    standalone: Option<&StandaloneConfig>,
) -> ConversionReport {
    let (retained, dropped): (Vec<_>, Vec<_>) =
        source_features(pkg, from, state).into_iter().partition(|f| retained_by(f, to, standalone));
    let mut warnings = Vec::new();
    if !pkg.endpoints.is_empty() && to != RuntimeStrategy::Passive {
        warnings.push(WARN_ENDPOINTS.to_string());
    }
    if dropped.contains(&Feature::BuildCache) {
        warnings.push(WARN_BUILD_CACHE.to_string());
    }
    ConversionReport { from, to, retained, dropped, warnings }
}

/// Dry run of a conversion; touches nothing.
pub fn conversion_report(from: RuntimeStrategy, to: RuntimeStrategy, pkg: &AasPackage) -> ConversionReport {
    report(from, to, pkg, &RuntimeState::default(), None)
}

/// Same, taking a hosted package's runtime state into account.
pub fn conversion_report_with(
    from: RuntimeStrategy,
    to: RuntimeStrategy,
    pkg: &AasPackage,
    state: &RuntimeState,
) -> ConversionReport {
    report(from, to, pkg, state, None)
}

/// Write a hosted package back to a file. Runtime state is not part of
/// the file and is reported as dropped.
pub fn export_file(pkg: &AasPackage, from: RuntimeStrategy, state: &RuntimeState) -> (Vec<u8>, ConversionReport) {
    (serialize_package(pkg), report(from, RuntimeStrategy::Passive, pkg, state, None))
}

/// Contents of `launch.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LaunchConfig {
    pub strategy: RuntimeStrategy,
    pub package: String,
    pub features: BTreeSet<RuntimeFeature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build_cache: Option<String>,
    #[serde(default)]
    pub port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bundle {
    pub dir: PathBuf,
    pub launch: LaunchConfig,
    pub launcher: Option<PathBuf>,
}

fn check_features(pkg: &AasPackage, cfg: &StandaloneConfig) -> Result<Vec<String>, PackagerError> {
    let f = &cfg.features;
    if f.is_empty() {
        return Err(PackagerError::FeatureUnavailable("at least one runtime feature is required".into()));
    }
    for needs_api in [RuntimeFeature::ServiceEngine, RuntimeFeature::Eventing] {
        if f.contains(&needs_api) && !f.contains(&RuntimeFeature::Api) {
            return Err(PackagerError::FeatureUnavailable(format!(
                "{} is reachable only through the api",
                serde_json::to_value(needs_api).unwrap().as_str().unwrap()
            )));
        }
    }
    if f.contains(&RuntimeFeature::Sync) && pkg.endpoints.is_empty() {
        return Err(PackagerError::FeatureUnavailable(format!(
            "sync needs an asset endpoint; package is Lvl {}",
            classify_level(pkg)
        )));
    }
    let mut warnings = Vec::new();
    if f.contains(&RuntimeFeature::ServiceEngine) && pkg.artifacts().is_empty() && !has_delegation(pkg) {
        warnings.push(WARN_ENGINE_IDLE.to_string());
    }
    Ok(warnings)
}

const BUNDLE_README: &str = "Standalone shellforge bundle.

  launch.json      runtime configuration (strategy, embedded features, port)
  package.aaspkg   the embedded package
  cache/           prebuilt source-bundle services, when included
  shellforge       launcher binary, when included

Start it with:

  ./shellforge serve --bundle .

or with any shellforge binary of the same version. SHELLFORGE_PORT
overrides the port in launch.json.
";

/// Build a self-contained bundle directory for one package.
pub fn build_standalone(
    pkg: &AasPackage,
    cfg: &StandaloneConfig,
    launcher: Option<&Path>,
) -> Result<(Bundle, ConversionReport), PackagerError> {
    if let Some(v) = validate(pkg).first() {
        return Err(PackagerError::InvalidPackage(format!("{}: {}", v.path, v.message)));
    }
    let mut warnings = check_features(pkg, cfg)?;
    let dir = &cfg.target_dir;
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join(PACKAGE_FILE), serialize_package(pkg)).map_err(io)?;

    let has_bundles = pkg.artifacts().iter().any(|a| a.kind == ArtifactKind::SourceBundle);
    let global_cached = build_cache_present(pkg, BuildCache::global());
    let cache_dir = dir.join(CACHE_DIR);
    let mut build_cache = None;
    if cfg.include_build_cache && has_bundles && cfg.features.contains(&RuntimeFeature::ServiceEngine) {
        let cache = BuildCache::new(&cache_dir).map_err(io)?;
        for a in pkg.artifacts().iter().filter(|a| a.kind == ArtifactKind::SourceBundle) {
            engine::load_artifact_in(a, pkg, &cache).map_err(|e| PackagerError::InvalidPackage(e.to_string()))?;
        }
        build_cache = Some(CACHE_DIR.to_string());
    } else if cache_dir.exists() {
        fs::remove_dir_all(&cache_dir).map_err(io)?;
    }

    let launch = LaunchConfig {
        strategy: RuntimeStrategy::Standalone,
        package: PACKAGE_FILE.to_string(),
        features: cfg.features.clone(),
        build_cache,
        port: 0,
    };
    fs::write(dir.join(LAUNCH_FILE), serde_json::to_vec_pretty(&launch).expect("launch config serializes")).map_err(io)?;
    fs::write(dir.join("README"), BUNDLE_README).map_err(io)?;
    let launcher = match launcher {
        Some(src) => {
            let dst = dir.join(LAUNCHER_FILE);
            fs::copy(src, &dst).map_err(io)?;
            Some(dst)
        }
        None => None,
    };

    let state = RuntimeState { subscriptions: 0, build_cache: has_bundles && (global_cached || cfg.include_build_cache) };
    let mut report = report(RuntimeStrategy::ServerHosted, RuntimeStrategy::Standalone, pkg, &state, Some(cfg));
    report.warnings.append(&mut warnings);
    Ok((Bundle { dir: dir.clone(), launch, launcher }, report))
}

/// Read a bundle directory back.
pub fn load_bundle(dir: &Path) -> Result<(AasPackage, LaunchConfig), PackagerError> {
    let raw = fs::read(dir.join(LAUNCH_FILE)).map_err(|e| PackagerError::InvalidBundle(format!("{LAUNCH_FILE}: {e}")))?;
    let launch: LaunchConfig =
        serde_json::from_slice(&raw).map_err(|e| PackagerError::InvalidBundle(format!("{LAUNCH_FILE}: {e}")))?;
    let bytes = fs::read(dir.join(&launch.package)).map_err(|e| PackagerError::InvalidBundle(format!("{}: {e}", launch.package)))?;
    let pkg = parse_package(&bytes).map_err(|e| PackagerError::InvalidPackage(e.to_string()))?;
    Ok((pkg, launch))
}
