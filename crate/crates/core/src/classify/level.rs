use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{AasPackage, ArtifactKind};

/// Software-heaviness level, 0 (model only) through 5 (embedded executable).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct HeavinessLevel(u8);

impl HeavinessLevel {
    pub const MODEL: Self = Self(0);
    pub const FIXED_QUERY: Self = Self(1);
    pub const PARAMETERIZED: Self = Self(2);
    pub const INTERPRETED: Self = Self(3);
    pub const TRANSLATED: Self = Self(4);
    pub const EXECUTABLE: Self = Self(5);

    pub const ALL: [Self; 6] = [
        Self::MODEL,
        Self::FIXED_QUERY,
        Self::PARAMETERIZED,
        Self::INTERPRETED,
        Self::TRANSLATED,
        Self::EXECUTABLE,
    ];

    pub fn new(value: u8) -> Option<Self> {
        (value <= 5).then_some(Self(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u8> for HeavinessLevel {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value).ok_or_else(|| format!("level {value} outside 0..=5"))
    }
}

impl From<HeavinessLevel> for u8 {
    fn from(level: HeavinessLevel) -> Self {
        level.0
    }
}

impl fmt::Display for HeavinessLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Highest level whose rule applies. Levels act as a ceiling: one executable
/// artifact makes the whole package level 5.
pub fn classify_level(pkg: &AasPackage) -> HeavinessLevel {
    let has = |kind: ArtifactKind| pkg.artifacts().iter().any(|a| a.kind == kind);
    if has(ArtifactKind::Executable) {
        HeavinessLevel::EXECUTABLE
    } else if has(ArtifactKind::SourceBundle) {
        HeavinessLevel::TRANSLATED
    } else if has(ArtifactKind::PipelineScript) {
        HeavinessLevel::INTERPRETED
    } else if pkg.endpoints.iter().any(|e| e.parameterized) {
        HeavinessLevel::PARAMETERIZED
    } else if !pkg.endpoints.is_empty() {
        HeavinessLevel::FIXED_QUERY
    } else {
        HeavinessLevel::MODEL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogicForm {
    None,
    Interpreted,
    Translated,
    Executable,
}

/// What a package at a given level can do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityVector {
    pub needs_runtime: bool,
    pub api_access: bool,
    pub parameterized_requests: bool,
    pub embedded_logic: bool,
    pub logic_form: LogicForm,
}

impl CapabilityVector {
    pub fn flags(&self) -> [bool; 4] {
        [self.needs_runtime, self.api_access, self.parameterized_requests, self.embedded_logic]
    }
}

pub fn capability_matrix(level: HeavinessLevel) -> CapabilityVector {
    let l = level.value();
    CapabilityVector {
        needs_runtime: l >= 1,
        api_access: l >= 1,
        parameterized_requests: l >= 2,
        embedded_logic: l >= 3,
        logic_form: match l {
            0..=2 => LogicForm::None,
            3 => LogicForm::Interpreted,
            4 => LogicForm::Translated,
            _ => LogicForm::Executable,
        },
    }
}
