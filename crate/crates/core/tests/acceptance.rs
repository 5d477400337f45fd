//! Acceptance criteria A1-A6 at full scale. Set `FOVEA_ACCEPTANCE_SCALE=desk`
//! for a quick reduced run.

use std::path::PathBuf;

use fovea_core::verify::{run_suite, Scale, SuiteOptions};

#[test]
fn acceptance_criteria() {
    let scale: Scale = std::env::var("FOVEA_ACCEPTANCE_SCALE")
        .unwrap_or_else(|_| "full".into())
        .parse()
        .expect("FOVEA_ACCEPTANCE_SCALE is desk or full");
    let work = tempfile::tempdir().expect("scratch directory");
    let options = SuiteOptions {
        scale,
        natural_dir: Some(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/natural")),
        work_dir: work.path().to_path_buf(),
    };
    let outcomes = run_suite(&options, |o| eprint!("{o}"));
    println!("acceptance ({scale} scale):");
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.to_string())
        .collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
