//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::network::NetworkModel;

const FORMAT: &str = "weimix-model";
const VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a NetworkModel,
}

#[derive(Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    model: serde_json::Value,
}

pub fn model_to_string(model: &NetworkModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&EnvelopeRef {
        format: FORMAT,
        version: VERSION,
        model,
    })?)
}

pub fn model_from_str(text: &str) -> Result<NetworkModel> {
    let envelope: Envelope = serde_json::from_str(text)?;
    if envelope.format != FORMAT {
        return Err(Error::ModelFormat(format!("unknown format `{}`", envelope.format)));
    }
    if envelope.version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {} (expected {VERSION})",
            envelope.version
        )));
    }
    let model: NetworkModel = serde_json::from_value(envelope.model)?;
    model.architecture().validate()?;
    Ok(model)
}

pub fn save_model(model: &NetworkModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<NetworkModel> {
    model_from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::Architecture;
    use ndarray::Array2;

    #[test]
    fn round_trip_is_bitwise() {
        let mut model = NetworkModel::new(Architecture::new(3, 2), 1e-4, 9).unwrap();
        let x = Array2::from_shape_fn((7, 3), |(i, j)| (i as f64 * 0.37 - j as f64 * 1.3).sin());
        model.forward(&x, true).unwrap();
        let restored = model_from_str(&model_to_string(&model).unwrap()).unwrap();
        assert_eq!(restored, model);
        let a = model.infer(&x).unwrap();
        let b = restored.infer(&x).unwrap();
        for (u, v) in a.beta().iter().chain(a.eta()).chain(a.alpha()).zip(b.beta().iter().chain(b.eta()).chain(b.alpha())) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(matches!(
            model_from_str(r#"{"format":"other","version":1,"model":{}}"#),
            Err(Error::ModelFormat(_))
        ));
        assert!(matches!(
            model_from_str(r#"{"format":"weimix-model","version":7,"model":{}}"#),
            Err(Error::ModelFormat(_))
        ));
        assert!(model_from_str("not json").is_err());
    }
}
