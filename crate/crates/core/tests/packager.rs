mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use shellforge_core::classify::RuntimeStrategy;
use shellforge_core::model::serialize_package;
use shellforge_core::packager::{
    build_standalone, conversion_report, conversion_report_with, export_file, load_bundle, source_features, Feature,
    PackagerError, RuntimeFeature, RuntimeState, StandaloneConfig, LAUNCH_FILE, PACKAGE_FILE, WARN_BUILD_CACHE,
    WARN_ENDPOINTS, WARN_ENGINE_IDLE,
};
use shellforge_core::passive::{PassiveContext, PassiveError};

use common::fixture;

const STRATEGIES: [RuntimeStrategy; 3] = RuntimeStrategy::ALL;

#[test]
fn documented_reports() {
    let r = conversion_report(RuntimeStrategy::Standalone, RuntimeStrategy::Passive, &fixture(5));
    assert!(r.dropped.contains(&Feature::ServiceExecution));

    let r = conversion_report(RuntimeStrategy::Passive, RuntimeStrategy::ServerHosted, &fixture(0));
    assert!(r.dropped.is_empty() && r.warnings.is_empty());

    let r = conversion_report(RuntimeStrategy::ServerHosted, RuntimeStrategy::ServerHosted, &fixture(2));
    assert!(r.warnings.iter().any(|w| w == WARN_ENDPOINTS));

    let (bytes, r) = export_file(&fixture(3), RuntimeStrategy::ServerHosted, &RuntimeState { subscriptions: 2, build_cache: false });
    assert!(r.dropped.contains(&Feature::Subscriptions(2)));
    assert_eq!(bytes, serialize_package(&fixture(3)));

    let (_, r) = export_file(&fixture(0), RuntimeStrategy::ServerHosted, &RuntimeState::default());
    assert_eq!(r.dropped, vec![]);

    let state = RuntimeState { subscriptions: 0, build_cache: true };
    let (_, r) = export_file(&fixture(4), RuntimeStrategy::ServerHosted, &state);
    assert!(r.warnings.iter().any(|w| w == WARN_BUILD_CACHE));
    assert_eq!(r.render_text().lines().next(), Some("conversion: server-hosted -> passive"));
}

#[test]
fn dropped_features_fail_in_a_passive_context() {
    for level in 0..6 {
        let pkg = fixture(level);
        let ctx = PassiveContext::new(pkg.clone());
        for from in STRATEGIES {
            let state = RuntimeState { subscriptions: 1, build_cache: level == 4 };
            let report = conversion_report_with(from, RuntimeStrategy::Passive, &pkg, &state);
            assert!(report.retained.is_empty());
            for feature in &report.dropped {
                assert!(ctx.exercise(feature).is_err(), "level {level} from {from}: {feature} still works");
            }
        }
    }
}

#[test]
fn passive_context_confines_execution() {
    let ctx = PassiveContext::new(fixture(3));
    let shell = ctx.package().shells[0].id.clone();
    assert!(matches!(
        ctx.invoke(&shell, "SoftwareServices.AvgTemp", &serde_json::json!({"samples": [1, 2, 3, 4]})),
        Err(PassiveError::NotExecutableInPassiveRuntime(_))
    ));
    assert_eq!(ctx.start_sync(), Err(PassiveError::StrategyForbidsSync));
    assert!(ctx.get_value(&shell, "Telemetry.temp").is_ok());
}

fn config(dir: &std::path::Path, features: &[RuntimeFeature], cache: bool) -> StandaloneConfig {
    StandaloneConfig { target_dir: dir.to_path_buf(), include_build_cache: cache, features: features.iter().copied().collect() }
}

#[test]
fn standalone_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let all = [RuntimeFeature::Api, RuntimeFeature::ServiceEngine, RuntimeFeature::Eventing];

    let (bundle, report) = build_standalone(&fixture(0), &config(dir.path(), &all, false), None).unwrap();
    assert!(report.warnings.iter().any(|w| w == WARN_ENGINE_IDLE));
    assert!(dir.path().join(LAUNCH_FILE).is_file() && dir.path().join(PACKAGE_FILE).is_file());
    let (pkg, launch) = load_bundle(&bundle.dir).unwrap();
    assert_eq!(serialize_package(&pkg), serialize_package(&fixture(0)));
    assert_eq!(launch.strategy, RuntimeStrategy::Standalone);

    let err = build_standalone(&fixture(3), &config(dir.path(), &[RuntimeFeature::ServiceEngine], false), None);
    assert!(matches!(err, Err(PackagerError::FeatureUnavailable(_))));
    let err = build_standalone(&fixture(3), &config(dir.path(), &[], false), None);
    assert!(matches!(err, Err(PackagerError::FeatureUnavailable(_))));
    let err = build_standalone(&fixture(0), &config(dir.path(), &[RuntimeFeature::Api, RuntimeFeature::Sync], false), None);
    assert!(matches!(err, Err(PackagerError::FeatureUnavailable(_))));

    let (bundle, report) = build_standalone(&fixture(4), &config(dir.path(), &all, true), None).unwrap();
    assert!(report.retained.contains(&Feature::BuildCache));
    assert_eq!(bundle.launch.build_cache.as_deref(), Some("cache"));
    assert!(dir.path().join("cache").is_dir());

    let (_, report) = build_standalone(&fixture(3), &config(dir.path(), &[RuntimeFeature::Api], false), None).unwrap();
    assert!(report.dropped.contains(&Feature::ServiceExecution));
    assert!(report.dropped.contains(&Feature::Eventing));
}

fn arb_state() -> impl Strategy<Value = RuntimeState> {
    (0usize..4, any::<bool>()).prop_map(|(subscriptions, build_cache)| RuntimeState { subscriptions, build_cache })
}

proptest! {
    #[test]
    fn reports_partition_the_source_features(level in 0usize..6, from in 0usize..3, to in 0usize..3, state in arb_state()) {
        let mut pkg = fixture(level);
        pkg.manifest.standalone_extensions = vec!["dashboard".into()];
        let (from, to) = (STRATEGIES[from], STRATEGIES[to]);
        let report = conversion_report_with(from, to, &pkg, &state);
        let source: BTreeSet<Feature> = source_features(&pkg, from, &state).into_iter().collect();
        let retained: BTreeSet<Feature> = report.retained.iter().cloned().collect();
        let dropped: BTreeSet<Feature> = report.dropped.iter().cloned().collect();
        prop_assert!(retained.is_disjoint(&dropped));
        prop_assert_eq!(retained.union(&dropped).cloned().collect::<BTreeSet<_>>(), source);
        if to == RuntimeStrategy::Passive {
            prop_assert!(report.retained.is_empty());
        }
    }
}
