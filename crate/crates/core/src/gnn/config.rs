use serde::{Deserialize, Serialize};

use super::GnnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Sage,
    Gat,
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::Gcn => "GCN",
            Arch::Sage => "SAGE",
            Arch::Gat => "GAT",
        })
    }
}

impl std::str::FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "sage" | "graphsage" => Ok(Arch::Sage),
            "gat" => Ok(Arch::Gat),
            other => Err(format!("unknown architecture `{other}` (expected gcn, sage or gat)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain gradient descent with L2 weight decay.
    Sgd,
    /// Adam with L2 weight decay folded into the gradient.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub arch: Arch,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Attention heads in hidden GAT layers (concatenated).
    pub gat_heads: usize,
    /// Attention heads in the GAT output layer (averaged).
    pub gat_output_heads: usize,
    pub gat_leaky_slope: f64,
    pub bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Gcn,
            num_layers: 2,
            hidden_dim: 16,
            dropout: 0.5,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            seed: 0,
            optimizer: Optimizer::Adam,
            gat_heads: 2,
            gat_output_heads: 1,
            gat_leaky_slope: 0.2,
            bias: true,
        }
    }
}

impl ModelConfig {
    pub fn with_arch(arch: Arch) -> Self {
        ModelConfig { arch, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        let fail = |msg: &str| Err(GnnError::InvalidConfig(msg.to_string()));
        if self.num_layers < 1 {
            return fail("num_layers must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be non-negative");
        }
        if self.arch == Arch::Gat && (self.gat_heads == 0 || self.gat_output_heads == 0) {
            return fail("GAT needs at least one head per layer");
        }
        if self.num_layers > 1 && self.hidden_dim == 0 {
            return fail("hidden_dim must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            ModelConfig { num_layers: 0, ..Default::default() },
            ModelConfig { dropout: 1.0, ..Default::default() },
            ModelConfig { learning_rate: 0.0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(GnnError::InvalidConfig(_))));
        }
    }

    #[test]
    fn arch_parses() {
        assert_eq!("GraphSAGE".parse::<Arch>().unwrap(), Arch::Sage);
        assert!("mlp".parse::<Arch>().is_err());
    }
}
