use ans_harness::props::run_all;

#[test]
fn property_suites_hold() {
    let cases = std::env::var("ANS_PROP_CASES").ok().and_then(|v| v.parse().ok()).unwrap_or(64);
    for suite in run_all(cases) {
        println!("{} {} cases {:.1}s", suite.name, suite.cases, suite.elapsed_seconds);
        assert!(suite.passed, "{}: {:?}", suite.name, suite.failure);
    }
}
