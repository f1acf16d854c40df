use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Tensor;
use crate::geometry::MAX_ATOMIC_NUMBER;
use crate::so3::DegreeRange;

use super::{ModelConfig, ModelError};

/// How a parameter is initialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// `N(0, 1 / fan_in)` with `fan_in` = number of rows.
    FanIn,
    Normal(f64),
}

/// Name, shape and initialiser of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: [usize; 2],
    pub init: Init,
}

/// Cross-degree coupling paths `(l1, l2, l)` with `l1 < l2`, all in range
/// and satisfying the triangle rule.
pub fn coupling_paths(degrees: DegreeRange) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for l1 in degrees.iter() {
        for l2 in degrees.iter().filter(|&l2| l2 > l1) {
            for l in degrees.iter() {
                if l >= l2 - l1 && l <= l1 + l2 {
                    out.push((l1, l2, l));
                }
            }
        }
    }
    out
}

/// Parameter layout implied by a configuration, in storage order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let f = config.features;
    let degrees = config.degrees();
    let nl = degrees.count();
    let slice = f / nl;
    let mut specs = Vec::new();
    let mut push = |name: String, rows: usize, cols: usize, init: Init| {
        specs.push(ParamSpec {
            name,
            shape: [rows, cols],
            init,
        })
    };
    push(
        "embedding".into(),
        MAX_ATOMIC_NUMBER as usize,
        f,
        Init::Normal(1.0 / (f as f64).sqrt()),
    );
    let paths = coupling_paths(degrees);
    for t in 0..config.n_layers {
        let p = |s: &str| format!("layer{t}.{s}");
        push(p("radial.w1"), config.n_rbf, config.radial_hidden, Init::FanIn);
        push(p("radial.b1"), 1, config.radial_hidden, Init::Zeros);
        push(p("radial.w2"), config.radial_hidden, f, Init::FanIn);
        push(p("radial.b2"), 1, f, Init::Zeros);
        if config.use_spherical_filter {
            push(p("spherical.w1"), nl, config.spherical_hidden, Init::FanIn);
            push(p("spherical.b1"), 1, config.spherical_hidden, Init::Zeros);
            push(p("spherical.w2"), config.spherical_hidden, f, Init::FanIn);
            push(p("spherical.b2"), 1, f, Init::Zeros);
        }
        push(p("feature.wq"), f, f, Init::FanIn);
        push(p("feature.wk"), f, f, Init::FanIn);
        push(p("feature.wv"), f, f, Init::FanIn);
        for l in degrees.iter() {
            push(p(&format!("sphc.wq{l}")), slice, slice, Init::FanIn);
            push(p(&format!("sphc.wk{l}")), slice, slice, Init::FanIn);
        }
        push(p("interaction.w1"), f + 2 * nl, f, Init::FanIn);
        push(p("interaction.b1"), 1, f, Init::Zeros);
        push(p("interaction.w2"), f, f + nl, Init::FanIn);
        push(p("interaction.b2"), 1, f + nl, Init::Zeros);
        push(p("interaction.w3"), nl, nl, Init::FanIn);
        if !paths.is_empty() {
            let fan = paths.len() as f64 / nl as f64;
            push(p("coupling"), 1, paths.len(), Init::Normal(1.0 / fan.sqrt()));
        }
    }
    push("output.w1".into(), f, f / 2, Init::FanIn);
    push("output.b1".into(), 1, f / 2, Init::Zeros);
    push("output.w2".into(), f / 2, 1, Init::FanIn);
    push("output.b2".into(), 1, 1, Init::Zeros);
    specs
}

/// Total number of scalar parameters for a configuration.
pub fn param_count(config: &ModelConfig) -> usize {
    param_specs(config).iter().map(|s| s.shape[0] * s.shape[1]).sum()
}

/// Named, ordered parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Arc<Tensor>>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    /// Draws fresh parameters from a seeded generator.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = param_specs(config);
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in &specs {
            let [rows, cols] = spec.shape;
            let std = match spec.init {
                Init::Zeros => 0.0,
                Init::FanIn => 1.0 / (rows as f64).sqrt(),
                Init::Normal(s) => s,
            };
            let t = if std == 0.0 {
                Tensor::zeros(rows, cols)
            } else {
                let dist = Normal::new(0.0, std).expect("positive std");
                Tensor::from_fn(rows, cols, |_, _| dist.sample(&mut rng))
            };
            tensors.push(Arc::new(t));
        }
        Ok(Self::from_parts(specs.into_iter().map(|s| s.name).collect(), tensors))
    }

    /// Builds a parameter set and checks it against the layout of `config`.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self, ModelError> {
        let specs = param_specs(config);
        if specs.len() != named.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameters, found {}",
                specs.len(),
                named.len()
            )));
        }
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (spec, (name, t)) in specs.iter().zip(named) {
            if spec.name != name || spec.shape != t.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "parameter {name} {:?} does not match expected {} {:?}",
                    t.shape(),
                    spec.name,
                    spec.shape
                )));
            }
            names.push(name);
            tensors.push(Arc::new(t));
        }
        Ok(Self::from_parts(names, tensors))
    }

    fn from_parts(names: Vec<String>, tensors: Vec<Arc<Tensor>>) -> Self {
        let index = names.iter().enumerate().map(|(k, n)| (n.clone(), k)).collect();
        ModelParams { names, tensors, index }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Arc<Tensor>] {
        &self.tensors
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|k| self.tensors[k].as_ref())
    }

    /// Replaces tensor `k`; the shape must stay the same.
    pub fn set(&mut self, k: usize, value: Tensor) {
        assert_eq!(self.tensors[k].shape(), value.shape(), "shape change for {}", self.names[k]);
        self.tensors[k] = Arc::new(value);
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}
