//! Parameter checkpoints: an `f64` container holding the flat parameter
//! vector, with the model configuration and one `param.<name> =
//! offset:rows:cols` attribute per tensor in the manifest.

use super::{param_count, Model, ModelConfig, Pooling};
use crate::error::{Error, Result};
use crate::io::container::{TensorContainer, TensorData};

pub fn save_checkpoint(model: &Model, params: &[f64]) -> Result<TensorContainer> {
    if params.len() != model.param_count() {
        return Err(Error::shape("parameter vector does not match the model"));
    }
    let c = &model.config;
    let mut t = TensorContainer::new(
        vec![params.len()],
        vec!["param"],
        TensorData::F64(params.to_vec()),
    )?
    .with_attr("kind", "checkpoint")
    .with_attr("model.n_tokens", c.n_tokens)
    .with_attr("model.d_in", c.d_in)
    .with_attr("model.d_model", c.d_model)
    .with_attr("model.n_heads", c.n_heads)
    .with_attr("model.n_blocks", c.n_blocks)
    .with_attr("model.mlp_ratio", c.mlp_ratio)
    .with_attr("model.n_classes", c.n_classes)
    .with_attr("model.weight_decay", c.weight_decay)
    .with_attr("model.decay_all", c.decay_all)
    .with_attr("model.pooling", c.pooling.name());
    for (name, slot, _) in &model.layout.entries {
        t = t.with_attr(
            &format!("param.{name}"),
            format!("{}:{}:{}", slot.offset, slot.rows, slot.cols),
        );
    }
    Ok(t)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Parse {
        line: 0,
        message: format!("checkpoint: {}", msg.into()),
    }
}

pub fn load_checkpoint(t: &TensorContainer) -> Result<(Model, Vec<f64>)> {
    if t.attr("kind") != Some("checkpoint") {
        return Err(bad("not a checkpoint container"));
    }
    let TensorData::F64(values) = &t.data else {
        return Err(bad("parameters must be f64"));
    };
    if t.shape.len() != 1 {
        return Err(bad("parameters must be rank 1"));
    }
    fn get<T: std::str::FromStr>(t: &TensorContainer, key: &str) -> Result<T> {
        t.attr(key)
            .ok_or_else(|| bad(format!("missing `{key}`")))?
            .parse()
            .map_err(|_| bad(format!("bad value for `{key}`")))
    }
    let config = ModelConfig {
        n_tokens: get(t, "model.n_tokens")?,
        d_in: get(t, "model.d_in")?,
        d_model: get(t, "model.d_model")?,
        n_heads: get(t, "model.n_heads")?,
        n_blocks: get(t, "model.n_blocks")?,
        mlp_ratio: get(t, "model.mlp_ratio")?,
        n_classes: get(t, "model.n_classes")?,
        weight_decay: get(t, "model.weight_decay")?,
        decay_all: get(t, "model.decay_all")?,
        pooling: Pooling::from_name(t.attr("model.pooling").unwrap_or(""))
            .ok_or_else(|| bad("bad `model.pooling`"))?,
    };
    if param_count(&config) != Some(values.len()) {
        return Err(bad(format!(
            "{} values do not match the configured model",
            values.len()
        )));
    }
    let model = Model::new(config)?;
    let listed = t.attrs.iter().filter(|(k, _)| k.starts_with("param.")).count();
    if listed != model.layout.entries.len() {
        return Err(bad(format!(
            "{listed} parameter entries, model has {}",
            model.layout.entries.len()
        )));
    }
    for (name, slot, _) in &model.layout.entries {
        let expect = format!("{}:{}:{}", slot.offset, slot.rows, slot.cols);
        match t.attr(&format!("param.{name}")) {
            Some(v) if v == expect => {}
            Some(v) => return Err(bad(format!("`{name}` is {v}, expected {expect}"))),
            None => return Err(bad(format!("missing parameter `{name}`"))),
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    Ok((model, values.clone()))
}
