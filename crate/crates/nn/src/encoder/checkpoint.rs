use std::path::Path;

use serde_json::json;

use euslm_core::{Error, Result};

use super::{Encoder, EncoderConfig};
use crate::io::{load_tensors, save_tensors};
use crate::optim::AdamW;
use crate::params::ParamStore;
use crate::tensor::Matrix;

pub const CHECKPOINT_KIND: &str = "euslm-encoder";

/// A loaded encoder with its optimizer state, if one was saved.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub encoder: Encoder,
    pub optimizer: Option<AdamW>,
    pub step: usize,
    pub seed: u64,
}

/// Writes every parameter of the encoder's store, and the Adam moments when given.
pub fn save_checkpoint(path: &Path, encoder: &Encoder, optimizer: Option<&AdamW>, step: usize, seed: u64) -> Result<()> {
    let mut meta = json!({
        "kind": CHECKPOINT_KIND,
        "config": encoder.config,
        "step": step,
        "seed": seed,
    });
    let mut tensors: Vec<(String, &Matrix)> = encoder.store.iter().map(|(_, p)| (format!("param.{}", p.name), &p.value)).collect();
    if let Some(opt) = optimizer {
        meta["adam"] = json!({
            "step": opt.step,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "epsilon": opt.epsilon,
            "weight_decay": opt.weight_decay,
        });
        for (id, p) in encoder.store.iter() {
            tensors.push((format!("adam.m.{}", p.name), &opt.m[id.index()]));
            tensors.push((format!("adam.v.{}", p.name), &opt.v[id.index()]));
        }
    }
    save_tensors(path, &meta, tensors.iter().map(|(n, m)| (n.as_str(), *m)))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = load_tensors(path)?;
    let meta = &file.metadata;
    if meta["kind"] != CHECKPOINT_KIND {
        return Err(Error::Input(format!("{} is not an encoder checkpoint", path.display())));
    }
    let config: EncoderConfig = serde_json::from_value(meta["config"].clone())?;
    let mut store = ParamStore::new();
    for (name, m) in file.with_prefix("param.") {
        let decay = !(name.ends_with(".bias") || name.ends_with(".gamma") || name.ends_with(".beta"));
        store.add(name, m.clone(), decay);
    }
    let encoder = Encoder::from_store(config, store)?;
    let optimizer = match meta.get("adam") {
        Some(a) => {
            let f = |k: &str| a[k].as_f64().ok_or_else(|| Error::Input(format!("checkpoint adam state lacks {k}")));
            let mut opt = AdamW::new(&encoder.store, f("beta1")?, f("beta2")?, f("epsilon")?, f("weight_decay")?);
            opt.step = a["step"].as_u64().unwrap_or(0);
            for (id, p) in encoder.store.iter() {
                let get = |k: &str| file.get(&format!("adam.{k}.{}", p.name)).cloned().ok_or_else(|| Error::Input(format!("missing adam.{k}.{}", p.name)));
                opt.m[id.index()] = get("m")?;
                opt.v[id.index()] = get("v")?;
            }
            Some(opt)
        }
        None => None,
    };
    Ok(Checkpoint {
        encoder,
        optimizer,
        step: meta["step"].as_u64().unwrap_or(0) as usize,
        seed: meta["seed"].as_u64().unwrap_or(0),
    })
}
