//! `iha run-all`: the full train -> hessian -> audit -> evaluate pipeline in
//! one deterministic invocation.

use crate::artifacts::{write_json, Layout};
use crate::config::ExperimentConfig;
use crate::CliError;

pub fn run(config: &ExperimentConfig) -> Result<(), CliError> {
    let layout = Layout::new(config.resolved_output_dir());
    std::fs::create_dir_all(layout.root())?;
    // echo the effective config so the run is reproducible from the output
    // directory alone
    write_json(&layout.root().join("config.json"), config)?;

    super::train::run(config)?;
    if config.attacks.iter().any(|a| a.needs_exact_hessian()) {
        super::hessian::run(config, None)?;
    }
    for attack in &config.attacks {
        super::audit::run(config, &attack.attack_id(), None)?;
    }
    super::evaluate::run(config)?;
    println!("pipeline complete: {}", layout.root().display());
    Ok(())
}
