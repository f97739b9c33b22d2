//! Interpreted pipeline services.
//!
//! A pipeline is an ordered list of steps applied left to right to a
//! sequence of records. Aggregates collapse the sequence to one record; the
//! result is the last record left. All arithmetic is `f64`, evaluated in
//! sequence order, so equal inputs give bit-identical outputs.
//!
//! Stored as `artifacts/<name>.pipeline.json`:
//!
//! ```json
//! {"steps": [{"op": "window", "n": 4}, {"op": "mean"}]}
//! ```
//!
//! The same steps have a text form used by the CLI and in tests:
//! `window(4), mean, map(avg = samples), select(avg)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::doc::ServiceDoc;
use super::expr::{Cmp, Expr};

pub type Record = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("step {step}: {reason}")]
    Parse { step: usize, reason: String },
    #[error("window needs {needed} samples, {available} available")]
    EmptyWindow { needed: usize, available: usize },
    #[error("step {step}: field `{field}` missing")]
    FieldMissing { step: usize, field: String },
    #[error("step {step}: {reason}")]
    Type { step: usize, reason: String },
    #[error("pipeline produced no record")]
    EmptyOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Mean,
    Min,
    Max,
}

impl Aggregate {
    /// Fold in sequence order. `values` must be non-empty.
    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            Aggregate::Mean => values.iter().fold(0.0, |acc, v| acc + v) / values.len() as f64,
            Aggregate::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            Aggregate::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Source form of one step, as stored in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepDef {
    Window { n: i64 },
    Mean,
    Min,
    Max,
    Map { target: String, expr: String },
    Filter { field: String, cmp: Cmp, value: Value },
    RegexExtract {
        pattern: String,
        group: usize,
        field: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<String>,
    },
    Select { fields: Vec<String> },
}

#[derive(Debug, Clone)]
pub enum Step {
    Window(usize),
    Aggregate(Aggregate),
    Map { target: String, expr: Expr },
    Filter { field: String, cmp: Cmp, literal: Value },
    RegexExtract { regex: Regex, group: usize, field: String, target: String },
    Select(Vec<String>),
}

impl Step {
    fn compile(index: usize, def: &StepDef) -> Result<Step, PipelineError> {
        let err = |reason: String| PipelineError::Parse { step: index, reason };
        Ok(match def {
            StepDef::Window { n } => {
                if *n < 1 {
                    return Err(err(format!("window size must be at least 1, got {n}")));
                }
                Step::Window(*n as usize)
            }
            StepDef::Mean => Step::Aggregate(Aggregate::Mean),
            StepDef::Min => Step::Aggregate(Aggregate::Min),
            StepDef::Max => Step::Aggregate(Aggregate::Max),
            StepDef::Map { target, expr } => {
                if target.is_empty() {
                    return Err(err("map target is empty".into()));
                }
                Step::Map { target: target.clone(), expr: expr.parse().map_err(|e| err(format!("{e}")))? }
            }
            StepDef::Filter { field, cmp, value } => {
                if !(value.is_number() || value.is_string()) {
                    return Err(err("filter literal must be a number or string".into()));
                }
                Step::Filter { field: field.clone(), cmp: *cmp, literal: value.clone() }
            }
            StepDef::RegexExtract { pattern, group, field, target } => {
                let regex = Regex::new(pattern).map_err(|e| err(format!("bad regex: {e}")))?;
                if *group >= regex.captures_len() {
                    return Err(err(format!("regex has no group {group}")));
                }
                Step::RegexExtract {
                    regex,
                    group: *group,
                    field: field.clone(),
                    target: target.clone().unwrap_or_else(|| field.clone()),
                }
            }
            StepDef::Select { fields } => {
                if fields.is_empty() {
                    return Err(err("select needs at least one field".into()));
                }
                Step::Select(fields.clone())
            }
        })
    }
}

/// A validated pipeline.
#[derive(Debug, Clone)]
pub struct PipelineSpec {
    defs: Vec<StepDef>,
    steps: Vec<Step>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineFile {
    steps: Vec<StepDef>,
}

impl PipelineSpec {
    pub fn new(defs: Vec<StepDef>) -> Result<Self, PipelineError> {
        if defs.is_empty() {
            return Err(PipelineError::Parse { step: 0, reason: "pipeline has no steps".into() });
        }
        let steps = defs.iter().enumerate().map(|(i, d)| Step::compile(i, d)).collect::<Result<_, _>>()?;
        Ok(Self { defs, steps })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, PipelineError> {
        let file: PipelineFile = serde_json::from_slice(bytes)
            .map_err(|e| PipelineError::Parse { step: 0, reason: format!("invalid pipeline document: {e}") })?;
        Self::new(file.steps)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(&PipelineFile { steps: self.defs.clone() }).expect("pipeline serializes")
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn defs(&self) -> &[StepDef] {
        &self.defs
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn number(step: usize, field: &str, v: &Value) -> Result<f64, PipelineError> {
    v.as_f64().ok_or_else(|| PipelineError::Type { step, reason: format!("field `{field}` is not numeric") })
}

fn float_value(step: usize, v: f64) -> Result<Value, PipelineError> {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .ok_or_else(|| PipelineError::Type { step, reason: "result is not finite".into() })
}

fn compare(cmp: Cmp, lhs: &Value, rhs: &Value) -> Option<bool> {
    match (lhs, rhs) {
        (Value::String(a), Value::String(b)) => Some(cmp.holds(a, b)),
        (a, b) => Some(cmp.holds(a.as_f64()?, b.as_f64()?)),
    }
}

/// Apply the pipeline to a sequence of records.
pub fn run_records(spec: &PipelineSpec, input: Vec<Record>) -> Result<Record, PipelineError> {
    let mut records = input;
    for (i, step) in spec.steps.iter().enumerate() {
        records = match step {
            Step::Window(n) => {
                if records.len() < *n {
                    return Err(PipelineError::EmptyWindow { needed: *n, available: records.len() });
                }
                records.split_off(records.len() - n)
            }
            Step::Aggregate(agg) => {
                let Some(first) = records.first() else {
                    return Err(PipelineError::EmptyWindow { needed: 1, available: 0 });
                };
                let mut out = Record::new();
                for key in first.keys() {
                    let column: Option<Vec<f64>> = records.iter().map(|r| r.get(key).and_then(Value::as_f64)).collect();
                    if let Some(column) = column {
                        out.insert(key.clone(), float_value(i, agg.apply(&column))?);
                    }
                }
                vec![out]
            }
            Step::Map { target, expr } => records
                .into_iter()
                .map(|mut r| {
                    let v = expr
                        .eval(&|f| r.get(f).and_then(Value::as_f64))
                        .map_err(|e| match e {
                            super::expr::ExprError::UnknownField(field) => match r.get(&field) {
                                None => PipelineError::FieldMissing { step: i, field },
                                Some(_) => PipelineError::Type { step: i, reason: format!("field `{field}` is not numeric") },
                            },
                            other => PipelineError::Type { step: i, reason: other.to_string() },
                        })?;
                    r.insert(target.clone(), float_value(i, v)?);
                    Ok(r)
                })
                .collect::<Result<_, _>>()?,
            Step::Filter { field, cmp, literal } => {
                let mut kept = Vec::with_capacity(records.len());
                for r in records {
                    let v = r.get(field).ok_or_else(|| PipelineError::FieldMissing { step: i, field: field.clone() })?;
                    if literal.is_number() {
                        number(i, field, v)?;
                    }
                    if compare(*cmp, v, literal).ok_or_else(|| PipelineError::Type {
                        step: i,
                        reason: format!("cannot compare `{field}` with {literal}"),
                    })? {
                        kept.push(r);
                    }
                }
                kept
            }
            Step::RegexExtract { regex, group, field, target } => {
                let mut kept = Vec::with_capacity(records.len());
                for mut r in records {
                    let text = match r.get(field) {
                        None => return Err(PipelineError::FieldMissing { step: i, field: field.clone() }),
                        Some(Value::String(s)) => s.clone(),
                        Some(_) => {
                            return Err(PipelineError::Type { step: i, reason: format!("field `{field}` is not a string") })
                        }
                    };
                    // Records without a match are dropped.
                    if let Some(m) = regex.captures(&text).and_then(|c| c.get(*group)) {
                        r.insert(target.clone(), Value::String(m.as_str().to_string()));
                        kept.push(r);
                    }
                }
                kept
            }
            Step::Select(fields) => records
                .into_iter()
                .map(|r| {
                    fields
                        .iter()
                        .map(|f| {
                            r.get(f)
                                .map(|v| (f.clone(), v.clone()))
                                .ok_or_else(|| PipelineError::FieldMissing { step: i, field: f.clone() })
                        })
                        .collect::<Result<Record, _>>()
                })
                .collect::<Result<_, _>>()?,
        };
    }
    records.pop().ok_or(PipelineError::EmptyOutput)
}

/// Run a pipeline over a sequence of documents. The output carries the last
/// input's timestamp so repeated runs are identical.
pub fn run_pipeline(spec: &PipelineSpec, input: &[ServiceDoc]) -> Result<ServiceDoc, PipelineError> {
    let records = input.iter().map(|d| d.values.clone()).collect();
    let out = run_records(spec, records)?;
    let ts = input.last().and_then(|d| d.meta.ts.clone());
    Ok(ServiceDoc::new(out).with_meta(ts, "pipeline"))
}

/// Expand an invocation document into records: equal-length array fields
/// are zipped element-wise and scalars repeated; a document without arrays
/// is a single record.
pub fn expand_records(doc: &ServiceDoc) -> Result<Vec<Record>, String> {
    let lengths: Vec<usize> = doc.values.values().filter_map(|v| v.as_array().map(Vec::len)).collect();
    let Some(&len) = lengths.first() else {
        return Ok(vec![doc.values.clone()]);
    };
    if lengths.iter().any(|l| *l != len) {
        return Err("array fields have different lengths".into());
    }
    Ok((0..len)
        .map(|i| {
            doc.values
                .iter()
                .map(|(k, v)| (k.clone(), v.as_array().map_or_else(|| v.clone(), |a| a[i].clone())))
                .collect()
        })
        .collect())
}

impl fmt::Display for StepDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepDef::Window { n } => write!(f, "window({n})"),
            StepDef::Mean => f.write_str("mean"),
            StepDef::Min => f.write_str("min"),
            StepDef::Max => f.write_str("max"),
            StepDef::Map { target, expr } => write!(f, "map({target} = {expr})"),
            StepDef::Filter { field, cmp, value } => write!(f, "filter({field}, {cmp}, {value})"),
            StepDef::RegexExtract { pattern, group, field, target } => {
                write!(f, "regex_extract({}, {group}, {field}", Value::String(pattern.clone()))?;
                match target {
                    Some(t) => write!(f, ", {t})"),
                    None => f.write_str(")"),
                }
            }
            StepDef::Select { fields } => write!(f, "select({})", fields.join(", ")),
        }
    }
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.defs.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(", "))
    }
}

/// Split on `sep` at nesting depth zero, outside double-quoted strings.
fn split_top_level(s: &str, seps: &[char]) -> Result<Vec<String>, String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut in_str = false;
    let mut escaped = false;
    let mut current = String::new();
    for c in s.chars() {
        if in_str {
            current.push(c);
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => {
                in_str = true;
                current.push(c);
            }
            '(' => {
                depth += 1;
                current.push(c);
            }
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err("unbalanced `)`".into());
                }
                current.push(c);
            }
            c if depth == 0 && seps.contains(&c) => parts.push(std::mem::take(&mut current)),
            c => current.push(c),
        }
    }
    if in_str || depth != 0 {
        return Err("unterminated string or parenthesis".into());
    }
    parts.push(current);
    Ok(parts.into_iter().map(|p| p.trim().to_string()).collect())
}

fn parse_literal(s: &str) -> Result<Value, String> {
    let v: Value = serde_json::from_str(s).map_err(|_| format!("bad literal `{s}`"))?;
    if v.is_number() || v.is_string() {
        Ok(v)
    } else {
        Err(format!("literal `{s}` must be a number or string"))
    }
}

fn parse_step_text(text: &str) -> Result<StepDef, String> {
    let (name, args) = match text.find('(') {
        Some(open) => {
            let close = text.rfind(')').filter(|c| *c == text.len() - 1).ok_or("missing `)`")?;
            (text[..open].trim(), Some(&text[open + 1..close]))
        }
        None => (text.trim(), None),
    };
    let args = match args {
        Some(a) if !a.trim().is_empty() => split_top_level(a, &[','])?,
        _ => Vec::new(),
    };
    let arity = |n: std::ops::RangeInclusive<usize>| {
        if n.contains(&args.len()) {
            Ok(())
        } else {
            Err(format!("{name} takes {n:?} arguments, got {}", args.len()))
        }
    };
    Ok(match name {
        "window" => {
            arity(1..=1)?;
            StepDef::Window { n: args[0].parse().map_err(|_| format!("bad window size `{}`", args[0]))? }
        }
        "mean" => (arity(0..=0)?, StepDef::Mean).1,
        "min" => (arity(0..=0)?, StepDef::Min).1,
        "max" => (arity(0..=0)?, StepDef::Max).1,
        "map" => {
            arity(1..=1)?;
            let (target, expr) = args[0].split_once('=').ok_or("map expects `target = expr`")?;
            StepDef::Map { target: target.trim().to_string(), expr: expr.trim().to_string() }
        }
        "filter" => {
            arity(3..=3)?;
            StepDef::Filter { field: args[0].clone(), cmp: args[1].parse()?, value: parse_literal(&args[2])? }
        }
        "regex_extract" => {
            arity(3..=4)?;
            let pattern: String = serde_json::from_str(&args[0]).map_err(|_| "pattern must be a quoted string")?;
            StepDef::RegexExtract {
                pattern,
                group: args[1].parse().map_err(|_| format!("bad group `{}`", args[1]))?,
                field: args[2].clone(),
                target: args.get(3).cloned(),
            }
        }
        "select" => {
            arity(1..=usize::MAX)?;
            StepDef::Select { fields: args }
        }
        other => return Err(format!("unknown step `{other}`")),
    })
}

impl FromStr for PipelineSpec {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s.trim();
        let body = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')).unwrap_or(body);
        let parts = split_top_level(body, &[',', '|']).map_err(|reason| PipelineError::Parse { step: 0, reason })?;
        let defs = parts
            .iter()
            .enumerate()
            .map(|(i, p)| parse_step_text(p).map_err(|reason| PipelineError::Parse { step: i, reason }))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(defs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn temps(values: &[f64]) -> Vec<ServiceDoc> {
        values
            .iter()
            .map(|t| ServiceDoc::from_object(json!({"temp": t, "rpm": 1000})).unwrap())
            .collect()
    }

    #[test]
    fn text_form_round_trips() {
        let spec: PipelineSpec = r#"window(4), mean, map(avg = temp * 2), filter(avg, >, 3), regex_extract("E([0-9]+)", 1, message, code), select(avg, code)"#
            .parse()
            .unwrap();
        assert_eq!(spec.len(), 6);
        let again: PipelineSpec = spec.to_string().parse().unwrap();
        assert_eq!(again.defs(), spec.defs());
        let from_json = PipelineSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(from_json.defs(), spec.defs());
    }

    #[test]
    fn window_zero_is_rejected() {
        assert!(matches!("[window(0)]".parse::<PipelineSpec>(), Err(PipelineError::Parse { step: 0, .. })));
        assert!(matches!(
            PipelineSpec::from_json(br#"{"steps":[{"op":"mean"},{"op":"window","n":-2}]}"#),
            Err(PipelineError::Parse { step: 1, .. })
        ));
    }

    #[test]
    fn bad_regex_is_a_parse_error() {
        let err = r#"regex_extract("E(", 1, message)"#.parse::<PipelineSpec>().unwrap_err();
        assert!(matches!(err, PipelineError::Parse { .. }));
        let err = r#"regex_extract("E", 1, message)"#.parse::<PipelineSpec>().unwrap_err();
        assert!(err.to_string().contains("no group"));
    }

    #[test]
    fn window_needs_enough_samples() {
        let spec: PipelineSpec = "window(5), mean".parse().unwrap();
        assert_eq!(
            run_pipeline(&spec, &temps(&[1.0, 2.0])).unwrap_err(),
            PipelineError::EmptyWindow { needed: 5, available: 2 }
        );
    }

    #[test]
    fn select_projects() {
        let spec: PipelineSpec = "select(temp)".parse().unwrap();
        let out = run_pipeline(&spec, &temps(&[20.0])).unwrap();
        assert_eq!(out.values_json(), json!({"temp": 20.0}));
    }

    #[test]
    fn select_missing_field_errors() {
        let spec: PipelineSpec = "select(nope)".parse().unwrap();
        assert!(matches!(run_pipeline(&spec, &temps(&[20.0])), Err(PipelineError::FieldMissing { .. })));
    }

    #[test]
    fn aggregates_ignore_non_numeric_fields() {
        let spec: PipelineSpec = "max".parse().unwrap();
        let docs = vec![
            ServiceDoc::from_object(json!({"temp": 1, "tag": "a"})).unwrap(),
            ServiceDoc::from_object(json!({"temp": 3, "tag": "b"})).unwrap(),
        ];
        assert_eq!(run_pipeline(&spec, &docs).unwrap().values_json(), json!({"temp": 3.0}));
    }

    #[test]
    fn filter_emptying_everything_yields_empty_output() {
        let spec: PipelineSpec = "filter(temp, >, 100)".parse().unwrap();
        assert_eq!(run_pipeline(&spec, &temps(&[1.0])).unwrap_err(), PipelineError::EmptyOutput);
    }

    #[test]
    fn string_filter() {
        let spec: PipelineSpec = r#"filter(tag, =, "b"), select(temp)"#.parse().unwrap();
        let docs = vec![
            ServiceDoc::from_object(json!({"temp": 1, "tag": "a"})).unwrap(),
            ServiceDoc::from_object(json!({"temp": 3, "tag": "b"})).unwrap(),
        ];
        assert_eq!(run_pipeline(&spec, &docs).unwrap().values_json(), json!({"temp": 3}));
    }

    #[test]
    fn map_type_errors() {
        let spec: PipelineSpec = "map(x = tag * 2)".parse().unwrap();
        let docs = vec![ServiceDoc::from_object(json!({"tag": "a"})).unwrap()];
        assert!(matches!(run_pipeline(&spec, &docs), Err(PipelineError::Type { .. })));
        let spec: PipelineSpec = "map(x = 1 / temp)".parse().unwrap();
        assert!(matches!(run_pipeline(&spec, &temps(&[0.0])), Err(PipelineError::Type { .. })));
    }

    #[test]
    fn expand_zips_arrays_and_repeats_scalars() {
        let doc = ServiceDoc::from_object(json!({"samples": [1, 2], "unit": "C"})).unwrap();
        let records = expand_records(&doc).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1]["samples"], json!(2));
        assert_eq!(records[1]["unit"], json!("C"));
        let ragged = ServiceDoc::from_object(json!({"a": [1, 2], "b": [1]})).unwrap();
        assert!(expand_records(&ragged).is_err());
    }
}
