use crate::so3::DegreeRange;

use super::ModelError;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Feature width `F`.
    pub features: usize,
    pub n_layers: usize,
    /// Largest SPHC degree; 0 selects the invariant-only variant.
    pub l_max: usize,
    /// Euclidean cutoff radius in Angstrom.
    pub r_cut: f64,
    /// Number of radial basis functions `K`.
    pub n_rbf: usize,
    /// Heads of the feature attention.
    pub heads: usize,
    /// Spherical neighborhood scale `kappa`.
    pub kappa: f64,
    /// Order of the polynomial cutoff on rescaled SPHC distances.
    pub poly_order: u32,
    pub use_nonlocal: bool,
    pub use_spherical_filter: bool,
    pub radial_hidden: usize,
    pub spherical_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            features: 132,
            n_layers: 6,
            l_max: 3,
            r_cut: 5.0,
            n_rbf: 32,
            heads: 4,
            kappa: 1.0,
            poly_order: 6,
            use_nonlocal: false,
            use_spherical_filter: true,
            radial_hidden: 128,
            spherical_hidden: 32,
        }
    }
}

impl ModelConfig {
    pub fn degrees(&self) -> DegreeRange {
        DegreeRange::new(self.l_max).expect("validated")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        let degrees = match DegreeRange::new(self.l_max) {
            Ok(d) => d,
            Err(e) => return bad(format!("l_max: {e}")),
        };
        if self.features == 0 || self.n_layers == 0 || self.n_rbf < 2 || self.heads == 0 {
            return bad("features, n_layers and heads must be positive and n_rbf at least 2".into());
        }
        if !self.features.is_multiple_of(self.heads) {
            return bad(format!("features ({}) not divisible by heads ({})", self.features, self.heads));
        }
        if !self.features.is_multiple_of(degrees.count()) {
            return bad(format!(
                "features ({}) not divisible by the number of degrees ({})",
                self.features,
                degrees.count()
            ));
        }
        if self.features < 2 {
            return bad("features must be at least 2".into());
        }
        if !(self.r_cut > 0.0) || !(self.kappa > 0.0) {
            return bad("r_cut and kappa must be positive".into());
        }
        if self.poly_order == 0 || self.radial_hidden == 0 || self.spherical_hidden == 0 {
            return bad("poly_order and hidden widths must be positive".into());
        }
        Ok(())
    }

    /// Flat `key = value` rendering, stable order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("features", self.features.to_string()),
            ("n_layers", self.n_layers.to_string()),
            ("l_max", self.l_max.to_string()),
            ("r_cut", format!("{:?}", self.r_cut)),
            ("n_rbf", self.n_rbf.to_string()),
            ("heads", self.heads.to_string()),
            ("kappa", format!("{:?}", self.kappa)),
            ("poly_order", self.poly_order.to_string()),
            ("use_nonlocal", self.use_nonlocal.to_string()),
            ("use_spherical_filter", self.use_spherical_filter.to_string()),
            ("radial_hidden", self.radial_hidden.to_string()),
            ("spherical_hidden", self.spherical_hidden.to_string()),
        ]
    }

    /// Inverse of [`ModelConfig::to_pairs`]. Missing keys keep their
    /// defaults; unknown keys are an error.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, ModelError> {
        let mut c = ModelConfig::default();
        for (key, value) in pairs {
            let err = |_| ModelError::Config(format!("bad value {value:?} for {key}"));
            match key {
                "features" => c.features = value.parse().map_err(err)?,
                "n_layers" => c.n_layers = value.parse().map_err(err)?,
                "l_max" => c.l_max = value.parse().map_err(err)?,
                "r_cut" => c.r_cut = value.parse().map_err(|_| ModelError::Config(format!("bad r_cut {value:?}")))?,
                "n_rbf" => c.n_rbf = value.parse().map_err(err)?,
                "heads" => c.heads = value.parse().map_err(err)?,
                "kappa" => c.kappa = value.parse().map_err(|_| ModelError::Config(format!("bad kappa {value:?}")))?,
                "poly_order" => c.poly_order = value.parse().map_err(err)?,
                "use_nonlocal" => {
                    c.use_nonlocal = value.parse().map_err(|_| ModelError::Config(format!("bad flag {value:?}")))?
                }
                "use_spherical_filter" => {
                    c.use_spherical_filter = value
                        .parse()
                        .map_err(|_| ModelError::Config(format!("bad flag {value:?}")))?
                }
                "radial_hidden" => c.radial_hidden = value.parse().map_err(err)?,
                "spherical_hidden" => c.spherical_hidden = value.parse().map_err(err)?,
                other => return Err(ModelError::Config(format!("unknown model key {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        let pairs = c.to_pairs();
        let back = ModelConfig::from_pairs(pairs.iter().map(|(k, v)| (*k, v.as_str()))).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn divisibility_is_checked() {
        let c = ModelConfig {
            features: 130,
            ..ModelConfig::default()
        };
        assert!(matches!(c.validate(), Err(ModelError::Config(_))));
        let c = ModelConfig {
            features: 128,
            l_max: 3,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(ModelConfig::from_pairs([("bogus", "1")]).is_err());
    }
}
