//! `iha hessian`: eigendecompose each model's member-set Hessian and persist
//! it for the exact-path attacks.

use iha_core::linalg::EigenDecomposition;
use iha_core::model::{exact_hessian, Record};

use crate::artifacts::{load_game, write_atomic, Layout};
use crate::config::ExperimentConfig;
use crate::CliError;

pub fn run(config: &ExperimentConfig, only: Option<usize>) -> Result<(), CliError> {
    let layout = Layout::new(config.resolved_output_dir());
    let game = load_game(config, &layout)?;
    let indices: Vec<usize> = match only {
        Some(i) => vec![i],
        None => (0..game.models.len()).collect(),
    };
    let mut computed = 0usize;
    for index in indices {
        let model = game
            .models
            .get(index)
            .ok_or_else(|| CliError::Config(format!("model index {index} out of range")))?;
        let path = layout.eigen(index);
        if EigenDecomposition::load(&path).is_ok() {
            continue;
        }
        let members: Vec<&Record> = model
            .mask
            .member_indices()
            .into_iter()
            .map(|i| game.dataset.record(i))
            .collect();
        let h = exact_hessian(&game.spec, &model.params, &members)?;
        let eig = iha_core::linalg::sym_eigendecompose(&h)?;
        let mut bytes = Vec::new();
        eig.write_to(&mut bytes)?;
        write_atomic(&path, &bytes)?;
        computed += 1;
    }
    println!(
        "eigendecomposed {computed} Hessians into {}",
        layout.root().display()
    );
    Ok(())
}
