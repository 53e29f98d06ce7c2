// Runs every example's entry point.

#[allow(dead_code)]
mod commodity_market {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/commodity_market.rs"));
}

#[allow(dead_code)]
mod emission_dispatch {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/emission_dispatch.rs"));
}

#[allow(dead_code)]
mod ergodic_certificate {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/ergodic_certificate.rs"));
}

#[allow(dead_code)]
mod oracle_check {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/oracle_check.rs"));
}

#[allow(dead_code)]
mod graph_operators {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/graph_operators.rs"));
}

#[allow(dead_code)]
mod custom_config {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/custom_config.rs"));
}

#[test]
fn commodity_market_example_runs() {
    commodity_market::run_example().expect("commodity_market example should run");
}

#[test]
fn emission_dispatch_example_runs() {
    emission_dispatch::run_example().expect("emission_dispatch example should run");
}

#[test]
fn ergodic_certificate_example_runs() {
    ergodic_certificate::run_example().expect("ergodic_certificate example should run");
}

#[test]
fn oracle_check_example_runs() {
    oracle_check::run_example().expect("oracle_check example should run");
}

#[test]
fn graph_operators_example_runs() {
    graph_operators::run_example().expect("graph_operators example should run");
}

#[test]
fn custom_config_example_runs() {
    custom_config::run_example().expect("custom_config example should run");
}
