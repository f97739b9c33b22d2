//! Subcommands that work on files alone, plus `invoke --server`.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use shellforge_core::classify::{
    assess_quality, capability_matrix, classify_data_flow, classify_level, recommend_level, render_table, CodeVisibility,
    DeploymentTarget, FleetSize, HeavinessLevel, QualityRow, RuntimeStrategy, TaskComplexity, UseCaseProfile, CRITERIA,
};
use shellforge_core::model::{parse_package, validate as violations, AasPackage, Identifier, SubmodelElement};
use shellforge_core::packager::{
    build_standalone, conversion_report, export_file, RuntimeFeature, RuntimeState, StandaloneConfig,
};
use shellforge_core::passive::PassiveContext;
use shellforge_core::server::encode_id;

use crate::{domain, CliError, ComplexityArg, ConvertArgs, FleetArg, InvokeArgs, RecommendArgs, Report, TargetArg, VisibilityArg};

pub fn load(file: &Path) -> Result<AasPackage, CliError> {
    let bytes = std::fs::read(file).map_err(|e| CliError::Domain(format!("cannot read {}: {e}", file.display())))?;
    parse_package(&bytes).map_err(|e| CliError::Domain(format!("{}: {e}", file.display())))
}

pub fn validate(file: &Path) -> Result<Report, CliError> {
    let pkg = load(file)?;
    if let Some(v) = violations(&pkg).first() {
        return Err(CliError::Domain(format!("{}: {} at {}: {}", file.display(), v.rule, v.path, v.message)));
    }
    let level = classify_level(&pkg);
    let text = format!(
        "valid: {}\nlevel: {level}\nshells: {}\nsubmodels: {}\nartifacts: {}\n",
        file.display(),
        pkg.shells.len(),
        pkg.submodels.len(),
        pkg.artifacts().len()
    );
    let json = json!({
        "file": file.display().to_string(),
        "valid": true,
        "level": level,
        "shells": pkg.shells.len(),
        "submodels": pkg.submodels.len(),
        "artifacts": pkg.artifacts().len(),
    });
    Ok(Report::new(text, json))
}

fn data_flow(pkg: &AasPackage) -> String {
    match &pkg.sync_config {
        None => "digital model".into(),
        Some(sync) => match classify_data_flow(sync, RuntimeStrategy::ServerHosted) {
            Ok(class) => class.to_string(),
            Err(e) => e.to_string(),
        },
    }
}

pub fn classify(file: &Path) -> Result<Report, CliError> {
    let pkg = load(file)?;
    let level = classify_level(&pkg);
    let caps = capability_matrix(level);
    let flow = data_flow(&pkg);
    let shells: Vec<&str> = pkg.shells.iter().map(|s| s.id.as_str()).collect();
    let text = format!(
        "level: {level}\nshells: {}\nneeds runtime: {}\napi access: {}\nparameterized requests: {}\nembedded logic: {}\nlogic form: {}\ndata flow (server-hosted): {flow}\n",
        shells.join(", "),
        caps.needs_runtime,
        caps.api_access,
        caps.parameterized_requests,
        caps.embedded_logic,
        serde_json::to_value(caps.logic_form).unwrap().as_str().unwrap(),
    );
    let json = json!({
        "file": file.display().to_string(),
        "level": level,
        "shells": shells,
        "capabilities": caps,
        "dataFlow": flow,
    });
    Ok(Report::new(text, json))
}

fn row_json(level: HeavinessLevel, row: &QualityRow) -> Value {
    let mut obj = serde_json::Map::new();
    obj.insert("level".into(), json!(level));
    for (name, rating) in CRITERIA.iter().zip(row.ratings()) {
        obj.insert((*name).into(), json!(rating.symbol().to_string()));
    }
    Value::Object(obj)
}

pub fn assess(level: Option<u8>) -> Result<Report, CliError> {
    let levels: Vec<HeavinessLevel> = match level {
        Some(l) => vec![HeavinessLevel::new(l).ok_or_else(|| CliError::Usage(format!("no level {l}")))?],
        None => HeavinessLevel::ALL.to_vec(),
    };
    let rows: Vec<Value> = levels.iter().map(|l| row_json(*l, &assess_quality(*l))).collect();
    let json = match level {
        Some(_) => rows.into_iter().next().unwrap(),
        None => Value::Array(rows),
    };
    Ok(Report::new(render_table(&levels), json))
}

pub fn profile(args: &RecommendArgs) -> UseCaseProfile {
    UseCaseProfile {
        deployment_target: match args.target {
            TargetArg::CustomerSide => DeploymentTarget::CustomerSide,
            TargetArg::ProviderInternal => DeploymentTarget::ProviderInternal,
            TargetArg::Research => DeploymentTarget::Research,
        },
        code_visibility: match args.visibility {
            VisibilityArg::WhiteBox => CodeVisibility::WhiteBoxRequired,
            VisibilityArg::BlackBox => CodeVisibility::BlackBoxOk,
        },
        task_complexity: match args.complexity {
            ComplexityArg::Simple => TaskComplexity::Simple,
            ComplexityArg::Complex => TaskComplexity::Complex,
        },
        fleet_size: match args.fleet {
            FleetArg::Single => FleetSize::Single,
            FleetArg::Many => FleetSize::Many,
        },
        consolidation_needed: args.consolidation,
        provider_needs_raw_data: args.raw_data,
    }
}

pub fn recommend(args: &RecommendArgs) -> Result<Report, CliError> {
    let profile = profile(args);
    let recs = recommend_level(&profile);
    let mut text = String::new();
    for (i, r) in recs.iter().enumerate() {
        text.push_str(&format!("{}. Lvl {}  [{}]\n   {}\n", i + 1, r.level, r.rules.join(", "), r.rationale));
    }
    Ok(Report::new(text, json!({ "profile": profile, "recommendations": recs })))
}

fn strategy(raw: &str) -> Result<RuntimeStrategy, CliError> {
    raw.parse().map_err(CliError::Usage)
}

fn default_out(file: &Path, suffix: &str) -> PathBuf {
    let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("package");
    file.with_file_name(format!("{stem}{suffix}"))
}

pub fn convert(args: &ConvertArgs) -> Result<Report, CliError> {
    let from = strategy(&args.from)?;
    let to = strategy(&args.to)?;
    let pkg = load(&args.file)?;
    let mut written = None;
    let report = match to {
        RuntimeStrategy::Passive => {
            let (bytes, report) = export_file(&pkg, from, &RuntimeState::default());
            if !args.dry_run {
                let out = args.out.clone().unwrap_or_else(|| default_out(&args.file, ".passive.aaspkg"));
                std::fs::write(&out, bytes).map_err(|e| CliError::Domain(format!("cannot write {}: {e}", out.display())))?;
                written = Some(out);
            }
            report
        }
        RuntimeStrategy::ServerHosted => conversion_report(from, to, &pkg),
        RuntimeStrategy::Standalone => {
            let features = if args.features.is_empty() {
                let mut all = RuntimeFeature::all();
                if pkg.endpoints.is_empty() {
                    all.remove(&RuntimeFeature::Sync);
                }
                all
            } else {
                args.features.iter().map(|f| f.trim().parse()).collect::<Result<_, String>>().map_err(CliError::Usage)?
            };
            let out = args.out.clone().unwrap_or_else(|| default_out(&args.file, ".bundle"));
            if args.dry_run {
                let scratch = std::env::temp_dir().join(format!("shellforge-dry-{}", std::process::id()));
                let cfg = StandaloneConfig { target_dir: scratch.clone(), include_build_cache: args.include_build_cache, features };
                let result = build_standalone(&pkg, &cfg, None);
                let _ = std::fs::remove_dir_all(&scratch);
                result.map_err(domain)?.1
            } else {
                let cfg = StandaloneConfig { target_dir: out.clone(), include_build_cache: args.include_build_cache, features };
                let launcher = std::env::current_exe().ok();
                let (_, report) = build_standalone(&pkg, &cfg, launcher.as_deref()).map_err(domain)?;
                written = Some(out);
                report
            }
        }
    };
    let mut text = report.render_text();
    if let Some(out) = &written {
        text.push_str(&format!("wrote: {}\n", out.display()));
    }
    let json = json!({ "report": report, "wrote": written.map(|p| p.display().to_string()) });
    Ok(Report::new(text, json))
}

/// Shell to address: the named one, or the package's first.
fn shell_id(pkg: &AasPackage, requested: Option<&str>) -> Result<Identifier, CliError> {
    match requested {
        Some(id) => {
            let id = Identifier::new(id);
            pkg.shell(&id).map(|s| s.id.clone()).ok_or_else(|| CliError::Domain(format!("NotFound: shell {id}")))
        }
        None => pkg.shells.first().map(|s| s.id.clone()).ok_or_else(|| CliError::Domain("package has no shells".into())),
    }
}

/// `Submodel.Op` paths pass through; a bare name is looked up among the shell's operations.
pub fn operation_path(pkg: &AasPackage, shell: &Identifier, op: &str) -> Result<String, CliError> {
    if op.contains('.') {
        return Ok(op.to_string());
    }
    let shell = pkg.shell(shell).ok_or_else(|| CliError::Domain(format!("NotFound: shell {shell}")))?;
    let mut found = Vec::new();
    for sm in shell.submodel_refs.iter().filter_map(|r| pkg.submodel(r)) {
        for e in &sm.elements {
            if let SubmodelElement::Operation(o) = e {
                if o.id_short == op {
                    found.push(format!("{}.{}", sm.id_short, o.id_short));
                }
            }
        }
    }
    match found.len() {
        0 => Err(CliError::Domain(format!("NotFound: no operation named {op}"))),
        1 => Ok(found.remove(0)),
        _ => Err(CliError::Domain(format!("{op} is ambiguous: {}", found.join(", ")))),
    }
}

fn parse_args(raw: &str) -> Result<Value, CliError> {
    let v: Value = serde_json::from_str(raw).map_err(|e| CliError::Usage(format!("--args is not JSON: {e}")))?;
    if !v.is_object() {
        return Err(CliError::Usage("--args must be a JSON object".into()));
    }
    Ok(v)
}

/// Invoking on a file: the passive strategy has nothing to run it with.
pub fn invoke_passive(args: &InvokeArgs) -> Result<Report, CliError> {
    let call = parse_args(&args.args)?;
    let pkg = load(&args.file)?;
    let shell = shell_id(&pkg, args.shell.as_deref())?;
    let path = operation_path(&pkg, &shell, &args.operation)?;
    let ctx = PassiveContext::new(pkg);
    let out = ctx.invoke(&shell, &path, &call).map_err(domain)?;
    Ok(Report::new(out.to_string(), out))
}

pub async fn invoke_remote(args: &InvokeArgs, server: &str) -> Result<Report, CliError> {
    let call = parse_args(&args.args)?;
    let pkg = load(&args.file)?;
    let shell = shell_id(&pkg, args.shell.as_deref())?;
    let path = operation_path(&pkg, &shell, &args.operation)?;
    let url = format!("{}/shells/{}/elements/{path}/invoke", server.trim_end_matches('/'), encode_id(&shell));
    let mut req = reqwest::Client::new().post(&url).json(&call);
    if let Some(token) = &args.token {
        req = req.bearer_auth(token);
    }
    let resp = req.send().await.map_err(|e| CliError::Domain(format!("TargetUnreachable: {server}: {e}")))?;
    let status = resp.status();
    let body: Value = resp.json().await.unwrap_or(Value::Null);
    if !status.is_success() {
        let name = body["error"].as_str().unwrap_or("Error");
        let msg = body["message"].as_str().unwrap_or("");
        return Err(CliError::Domain(format!("{name} ({}): {msg}", status.as_u16())));
    }
    let text = format!("{}\n", body["outputs"]);
    Ok(Report::new(text, body))
}
