//! Use-case driven level recommendation.
//!
//! The guidance is compiled into an ordered rule table. A data-need gate runs
//! first and picks the family (data access, Lvl 1-2, or embedded logic,
//! Lvl 3-5). Within the family, rules apply in the fixed priority order
//! deployment target > consolidation > task complexity > fleet size.

use serde::{Deserialize, Serialize};

use super::HeavinessLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentTarget {
    CustomerSide,
    ProviderInternal,
    Research,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeVisibility {
    WhiteBoxRequired,
    BlackBoxOk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskComplexity {
    Simple,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FleetSize {
    Single,
    Many,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UseCaseProfile {
    pub deployment_target: DeploymentTarget,
    pub code_visibility: CodeVisibility,
    pub task_complexity: TaskComplexity,
    pub fleet_size: FleetSize,
    pub consolidation_needed: bool,
    pub provider_needs_raw_data: bool,
}

/// One entry of the rule table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RecommendationRule {
    pub id: &'static str,
    pub citation: &'static str,
}

pub const RULES: &[RecommendationRule] = &[
    RecommendationRule {
        id: "GATE_DATA_NEED",
        citation: "embedded logic pays off only when the provider does not need the raw data and nothing must be consolidated across sources",
    },
    RecommendationRule {
        id: "DA_SINGLE_INTERFACE",
        citation: "with many assets, moving parameters into the request lets one interface serve every shell",
    },
    RecommendationRule {
        id: "DA_ENDPOINT_PER_SHELL",
        citation: "fixed queries need a dedicated parameterized endpoint per shell, which scales poorly",
    },
    RecommendationRule {
        id: "DA_COMPLEX_QUERIES",
        citation: "parameterized requests allow targeted and complex queries",
    },
    RecommendationRule {
        id: "DA_SIMPLE_FETCH",
        citation: "a single asset with simple needs is served by plain fixed queries",
    },
    RecommendationRule {
        id: "EL_CUSTOMER_EXECUTABLE",
        citation: "customer-side deployment favours an executable for easier integration and bundled dependencies",
    },
    RecommendationRule {
        id: "EL_WHITE_BOX_EXCLUDES_EXECUTABLE",
        citation: "an executable is a black box whose code cannot be analysed",
    },
    RecommendationRule {
        id: "EL_PROVIDER_SOURCE_ACCESS",
        citation: "for internal provider use, accessible source code simplifies maintenance and customisation",
    },
    RecommendationRule {
        id: "EL_RESEARCH_SOURCE",
        citation: "source bundles allow runtime code injection and suit research or testing",
    },
    RecommendationRule {
        id: "EL_SIMPLE_SCRIPT",
        citation: "simple calculations suit interpreted scripts",
    },
    RecommendationRule {
        id: "EL_COMPLEX_SOURCE",
        citation: "complex tasks need full services described by source code",
    },
    RecommendationRule {
        id: "EL_FLEET_STANDARD_ALGORITHMS",
        citation: "per-shell setup effort across a fleet is offset by standard algorithms in scripts or source bundles",
    },
];

pub fn rule(id: &str) -> Option<&'static RecommendationRule> {
    RULES.iter().find(|r| r.id == id)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Recommendation {
    pub level: HeavinessLevel,
    /// Rules that placed this level, in the order they fired.
    pub rules: Vec<&'static str>,
    pub rationale: String,
}

struct Ranking(Vec<(HeavinessLevel, Vec<&'static str>)>);

impl Ranking {
    fn push(&mut self, level: HeavinessLevel, rules: &[&'static str]) {
        match self.0.iter_mut().find(|(l, _)| *l == level) {
            Some((_, existing)) => existing.extend_from_slice(rules),
            None => self.0.push((level, rules.to_vec())),
        }
    }

    fn annotate(&mut self, levels: &[HeavinessLevel], rule: &'static str) {
        for (level, rules) in &mut self.0 {
            if levels.contains(level) {
                rules.push(rule);
            }
        }
    }
}

/// Rank levels for a use case. Deterministic: equal profiles give equal
/// lists, and every entry names the rules that produced it.
pub fn recommend_level(profile: &UseCaseProfile) -> Vec<Recommendation> {
    use HeavinessLevel as L;
    let mut ranking = Ranking(Vec::new());
    let gate = "GATE_DATA_NEED";

    if profile.provider_needs_raw_data || profile.consolidation_needed {
        match (profile.fleet_size, profile.task_complexity) {
            (FleetSize::Many, _) => {
                ranking.push(L::PARAMETERIZED, &[gate, "DA_SINGLE_INTERFACE"]);
                ranking.push(L::FIXED_QUERY, &[gate, "DA_ENDPOINT_PER_SHELL"]);
            }
            (FleetSize::Single, TaskComplexity::Complex) => {
                ranking.push(L::PARAMETERIZED, &[gate, "DA_COMPLEX_QUERIES"]);
                ranking.push(L::FIXED_QUERY, &[gate, "DA_SIMPLE_FETCH"]);
            }
            (FleetSize::Single, TaskComplexity::Simple) => {
                ranking.push(L::FIXED_QUERY, &[gate, "DA_SIMPLE_FETCH"]);
                ranking.push(L::PARAMETERIZED, &[gate, "DA_COMPLEX_QUERIES"]);
            }
        }
    } else {
        let black_box_ok = profile.code_visibility == CodeVisibility::BlackBoxOk;
        let (script, source) = match profile.task_complexity {
            TaskComplexity::Simple => ((L::INTERPRETED, "EL_SIMPLE_SCRIPT"), (L::TRANSLATED, "EL_COMPLEX_SOURCE")),
            TaskComplexity::Complex => ((L::TRANSLATED, "EL_COMPLEX_SOURCE"), (L::INTERPRETED, "EL_SIMPLE_SCRIPT")),
        };
        match profile.deployment_target {
            DeploymentTarget::CustomerSide => {
                if black_box_ok {
                    ranking.push(L::EXECUTABLE, &[gate, "EL_CUSTOMER_EXECUTABLE"]);
                    ranking.push(script.0, &[gate, script.1]);
                    ranking.push(source.0, &[gate, source.1]);
                } else {
                    ranking.push(script.0, &[gate, "EL_WHITE_BOX_EXCLUDES_EXECUTABLE", script.1]);
                    ranking.push(source.0, &[gate, "EL_WHITE_BOX_EXCLUDES_EXECUTABLE", source.1]);
                }
            }
            DeploymentTarget::ProviderInternal => {
                ranking.push(script.0, &[gate, "EL_PROVIDER_SOURCE_ACCESS", script.1]);
                ranking.push(source.0, &[gate, "EL_PROVIDER_SOURCE_ACCESS", source.1]);
                if black_box_ok {
                    ranking.push(L::EXECUTABLE, &[gate, "EL_CUSTOMER_EXECUTABLE"]);
                }
            }
            DeploymentTarget::Research => {
                ranking.push(L::TRANSLATED, &[gate, "EL_RESEARCH_SOURCE"]);
                ranking.push(L::INTERPRETED, &[gate, "EL_SIMPLE_SCRIPT"]);
                if black_box_ok {
                    ranking.push(L::EXECUTABLE, &[gate, "EL_CUSTOMER_EXECUTABLE"]);
                }
            }
        }
        if profile.fleet_size == FleetSize::Many {
            ranking.annotate(&[L::INTERPRETED, L::TRANSLATED], "EL_FLEET_STANDARD_ALGORITHMS");
        }
    }

    ranking
        .0
        .into_iter()
        .map(|(level, rules)| {
            let rationale = rules
                .iter()
                .map(|id| format!("{id}: {}", rule(id).map(|r| r.citation).unwrap_or_default()))
                .collect::<Vec<_>>()
                .join("; ");
            Recommendation { level, rules, rationale }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> UseCaseProfile {
        UseCaseProfile {
            deployment_target: DeploymentTarget::CustomerSide,
            code_visibility: CodeVisibility::BlackBoxOk,
            task_complexity: TaskComplexity::Complex,
            fleet_size: FleetSize::Single,
            consolidation_needed: false,
            provider_needs_raw_data: false,
        }
    }

    #[test]
    fn customer_side_black_box_prefers_executable() {
        let ranked = recommend_level(&profile());
        assert_eq!(ranked[0].level, HeavinessLevel::EXECUTABLE);
        assert!(ranked[0].rules.contains(&"EL_CUSTOMER_EXECUTABLE"));
    }

    #[test]
    fn white_box_never_recommends_executable() {
        let p = UseCaseProfile { code_visibility: CodeVisibility::WhiteBoxRequired, ..profile() };
        assert!(recommend_level(&p).iter().all(|r| r.level != HeavinessLevel::EXECUTABLE));
    }

    #[test]
    fn research_prefers_source_bundles() {
        let p = UseCaseProfile { deployment_target: DeploymentTarget::Research, ..profile() };
        assert_eq!(recommend_level(&p)[0].level, HeavinessLevel::TRANSLATED);
    }

    #[test]
    fn single_asset_simple_data_need_prefers_fixed_queries() {
        let p = UseCaseProfile {
            provider_needs_raw_data: true,
            task_complexity: TaskComplexity::Simple,
            ..profile()
        };
        assert_eq!(recommend_level(&p)[0].level, HeavinessLevel::FIXED_QUERY);
    }
}
