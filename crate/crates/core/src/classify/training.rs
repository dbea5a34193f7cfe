use serde::{Deserialize, Serialize};

/// Fine-tuning hyperparameters handed to an external trainer. Nothing in
/// this crate runs training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub base_model: String,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub epochs: u32,
    pub warmup_ratio: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown model {0:?} (expected \"default\" or \"xlm-roberta\")")]
pub struct TrainingConfigError(pub String);

impl TrainingConfig {
    pub fn for_model(name: &str) -> Result<TrainingConfig, TrainingConfigError> {
        let (learning_rate, epochs) = match name {
            "default" => (5e-5, 2),
            "xlm-roberta" => (5e-6, 5),
            other => return Err(TrainingConfigError(other.to_string())),
        };
        Ok(TrainingConfig {
            base_model: name.to_string(),
            batch_size: 16,
            learning_rate,
            epochs,
            warmup_ratio: 0.1,
            max_tokens: 512,
        })
    }

    pub fn as_tuple(&self) -> (u32, f64, u32, f64, u32) {
        (self.batch_size, self.learning_rate, self.epochs, self.warmup_ratio, self.max_tokens)
    }
}

/// Pretty JSON for the named model's configuration.
pub fn emit_training_config(name: &str) -> Result<String, TrainingConfigError> {
    let config = TrainingConfig::for_model(name)?;
    Ok(serde_json::to_string_pretty(&config).expect("config serializes") + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_models() {
        assert_eq!(TrainingConfig::for_model("default").unwrap().as_tuple(), (16, 5e-5, 2, 0.1, 512));
        assert_eq!(TrainingConfig::for_model("xlm-roberta").unwrap().as_tuple(), (16, 5e-6, 5, 0.1, 512));
        assert!(TrainingConfig::for_model("gpt9").is_err());
    }

    #[test]
    fn emitted_json_parses_back() {
        let text = emit_training_config("xlm-roberta").unwrap();
        let back: TrainingConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, TrainingConfig::for_model("xlm-roberta").unwrap());
    }
}
