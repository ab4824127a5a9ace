//! `iha train`: train every model of the game and persist parameters,
//! masks, and the manifest. Completed indices are skipped on rerun;
//! corrupted files are retrained.

use iha_core::data::{bernoulli_split, MembershipMask};
use iha_core::game::model_seeds;
use iha_core::model::ParameterVector;
use iha_core::training::{train, SgdConfig};

use crate::artifacts::{model_manifest, write_atomic, write_json, Layout, Manifest};
use crate::config::ExperimentConfig;
use crate::CliError;

pub fn run(config: &ExperimentConfig) -> Result<(), CliError> {
    let layout = Layout::new(config.resolved_output_dir());
    let dataset = config.load_dataset()?;
    let spec = config.model_spec(&dataset)?;

    let mut manifests = Vec::with_capacity(config.num_models);
    let mut trained = 0usize;
    for index in 0..config.num_models {
        let (mask_seed, sgd_seed) = model_seeds(config.game_seed, index);
        let mask = bernoulli_split(&dataset, config.gamma, mask_seed);

        let params_path = layout.params(index);
        let mask_path = layout.mask(index);
        // a loadable parameter file with the right spec hash plus a matching
        // mask file counts as complete; anything else is redone
        let existing = ParameterVector::load(&spec, &params_path).ok().filter(|_| {
            MembershipMask::load(&mask_path)
                .map(|m| m == mask)
                .unwrap_or(false)
        });
        let params = match existing {
            Some(p) => p,
            None => {
                let cfg = SgdConfig {
                    seed: sgd_seed,
                    ..config.sgd.clone()
                };
                let params = train(&spec, &dataset, &mask, &cfg)?;
                let mut bytes = Vec::new();
                params.write_to(&spec, &mut bytes)?;
                write_atomic(&params_path, &bytes)?;
                let tmp = tempfile::NamedTempFile::new()?;
                mask.save(tmp.path())?;
                write_atomic(&mask_path, &std::fs::read(tmp.path())?)?;
                trained += 1;
                params
            }
        };
        manifests.push(model_manifest(
            &spec,
            &dataset,
            &mask,
            &params,
            index,
            config.game_seed,
        )?);
    }

    let manifest = Manifest {
        config_hash: config.hash(),
        spec_hash: format!("{:#018x}", spec.spec_hash()),
        config: config.clone(),
        models: manifests,
    };
    write_json(&layout.manifest(), &manifest)?;
    println!(
        "trained {trained} of {} models into {}",
        config.num_models,
        layout.root().display()
    );
    Ok(())
}
