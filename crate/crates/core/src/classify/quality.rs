//! Normative quality assessment per heaviness level across the six
//! ISO/IEC 25000 criteria.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::HeavinessLevel;

/// How much attention a criterion needs at a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityRating {
    WithoutHesitation,
    PartlyConsider,
    StronglyConsider,
}

impl QualityRating {
    /// Traffic-light symbol: G, O (orange) or R.
    pub fn symbol(self) -> char {
        match self {
            QualityRating::WithoutHesitation => 'G',
            QualityRating::PartlyConsider => 'O',
            QualityRating::StronglyConsider => 'R',
        }
    }
}

impl fmt::Display for QualityRating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QualityRating::WithoutHesitation => "without hesitation",
            QualityRating::PartlyConsider => "partly to be considered",
            QualityRating::StronglyConsider => "strongly to be considered",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityRow {
    pub reliability: QualityRating,
    pub usability: QualityRating,
    pub performance: QualityRating,
    pub security: QualityRating,
    pub supportability: QualityRating,
    pub transferability: QualityRating,
}

pub const CRITERIA: [&str; 6] = [
    "reliability",
    "usability",
    "performance",
    "security",
    "supportability",
    "transferability",
];

impl QualityRow {
    /// Ratings in `CRITERIA` order.
    pub fn ratings(&self) -> [QualityRating; 6] {
        [
            self.reliability,
            self.usability,
            self.performance,
            self.security,
            self.supportability,
            self.transferability,
        ]
    }
}

use QualityRating::{PartlyConsider as O, StronglyConsider as R, WithoutHesitation as G};

const fn row(r: [QualityRating; 6]) -> QualityRow {
    QualityRow {
        reliability: r[0],
        usability: r[1],
        performance: r[2],
        security: r[3],
        supportability: r[4],
        transferability: r[5],
    }
}

const TABLE: [QualityRow; 6] = [
    row([G, G, G, G, G, G]),
    row([G, O, O, O, G, R]),
    row([O, O, O, O, G, R]),
    row([R, R, R, R, O, O]),
    row([R, R, R, R, O, O]),
    row([R, R, R, R, R, G]),
];

pub fn assess_quality(level: HeavinessLevel) -> QualityRow {
    TABLE[level.index()]
}

pub fn full_quality_table() -> [QualityRow; 6] {
    TABLE
}

/// Render the table with criteria as rows and levels as columns.
pub fn render_table(columns: &[HeavinessLevel]) -> String {
    let mut out = String::from("                ");
    for level in columns {
        out.push_str(&format!(" Lvl{level}"));
    }
    out.push('\n');
    for (i, name) in CRITERIA.iter().enumerate() {
        let mut title = name.to_string();
        title[..1].make_ascii_uppercase();
        out.push_str(&format!("{title:<16}"));
        for level in columns {
            out.push_str(&format!("    {}", assess_quality(*level).ratings()[i].symbol()));
        }
        out.push('\n');
    }
    out.push_str("G = without hesitation, O = partly to be considered, R = strongly to be considered\n");
    out
}
