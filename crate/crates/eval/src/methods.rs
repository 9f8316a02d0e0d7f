//! Reconstruction methods compared by the evaluation harness.

use std::fmt;
use std::str::FromStr;

use pfrecon_core::{homodyne, pocs, zero_fill, ComplexImage, KSpaceData, RepetitionSet};
use pfrecon_net::train::reconstruct_normalized;
use pfrecon_net::{Aggregation, Model, Strategy};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// POCS iterations used by the harness.
pub const POCS_ITERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ZeroFill,
    Pocs,
    Homodyne,
    DrpfNone,
    DrpfMean,
    DrpfMax,
    WeightShared,
    Cascaded,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Self::ZeroFill,
        Self::Pocs,
        Self::Homodyne,
        Self::DrpfNone,
        Self::DrpfMean,
        Self::DrpfMax,
        Self::WeightShared,
        Self::Cascaded,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ZeroFill => "zero_fill",
            Self::Pocs => "pocs",
            Self::Homodyne => "homodyne",
            Self::DrpfNone => "drpf_none",
            Self::DrpfMean => "drpf_mean",
            Self::DrpfMax => "drpf_max",
            Self::WeightShared => "weight_shared",
            Self::Cascaded => "cascaded",
        }
    }

    pub fn is_learned(&self) -> bool {
        !matches!(self, Self::ZeroFill | Self::Pocs | Self::Homodyne)
    }

    /// Strategy and aggregation a checkpoint must have to serve this
    /// method; `None` for classical methods. ResNet variants accept any
    /// aggregation.
    pub fn expected_model(&self) -> Option<(Strategy, Option<Aggregation>)> {
        match self {
            Self::DrpfNone => Some((Strategy::Recurrent, Some(Aggregation::None))),
            Self::DrpfMean => Some((Strategy::Recurrent, Some(Aggregation::Mean))),
            Self::DrpfMax => Some((Strategy::Recurrent, Some(Aggregation::Max))),
            Self::WeightShared => Some((Strategy::WeightShared, None)),
            Self::Cascaded => Some((Strategy::Cascaded, None)),
            _ => None,
        }
    }

    pub fn check_model(&self, model: &Model<f32>) -> Result<()> {
        let Some((strategy, agg)) = self.expected_model() else {
            return Ok(());
        };
        let c = model.config();
        if c.strategy != strategy || agg.is_some_and(|a| a != c.aggregation) {
            return Err(Error::Checkpoint(format!(
                "{self} needs a {strategy} model{}, checkpoint is {} with {} aggregation",
                agg.map(|a| format!(" with {a} aggregation")).unwrap_or_default(),
                c.strategy,
                c.aggregation
            )));
        }
        Ok(())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown method {s:?}")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reconstructs every repetition with `method`. Learned methods need a
/// model and run at native intensity through the normalizing wrapper.
pub fn reconstruct(method: Method, y: &RepetitionSet<KSpaceData>, model: Option<&Model<f32>>) -> Result<RepetitionSet<ComplexImage>> {
    let out = match method {
        Method::ZeroFill => y.map(zero_fill)?,
        Method::Pocs => y.map(|k| pocs(k, POCS_ITERS))?,
        Method::Homodyne => y.map(homodyne)?,
        _ => {
            let model = model.ok_or_else(|| Error::Checkpoint(format!("missing checkpoint for {method}")))?;
            method.check_model(model)?;
            if model.config().pff != y.mask().pff() {
                return Err(Error::Checkpoint(format!(
                    "checkpoint was trained for pff {}, data is sampled at {}",
                    model.config().pff,
                    y.mask().pff()
                )));
            }
            reconstruct_normalized(model, y)?
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pfrecon_core::{forward, make_pf_mask, Complex64, Pff};
    use pfrecon_net::ModelConfig;

    fn measurements(pff: Pff) -> RepetitionSet<KSpaceData> {
        let x = ComplexImage::from_fn(16, 16, |r, c| Complex64::new(((r * 7 + c * 3) % 5) as f64, 0.5)).unwrap();
        RepetitionSet::new(vec![forward(&x, &make_pf_mask(16, pff).unwrap()).unwrap()]).unwrap()
    }

    fn small(strategy: Strategy, aggregation: Aggregation) -> Model<f32> {
        Model::zeros(ModelConfig {
            strategy,
            aggregation,
            iterations: 1,
            depth: 2,
            width: 2,
            ..ModelConfig::drpf()
        })
        .unwrap()
    }

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("drpf-max".parse::<Method>().unwrap(), Method::DrpfMax);
        assert_eq!("bogus".parse::<Method>().unwrap_err().kind(), "usage");
        assert_eq!(Method::ALL.iter().filter(|m| m.is_learned()).count(), 5);
    }

    #[test]
    fn checkpoints_must_match_the_method() {
        let max = small(Strategy::Recurrent, Aggregation::Max);
        assert!(Method::DrpfMax.check_model(&max).is_ok());
        assert!(Method::DrpfMean.check_model(&max).is_err());
        assert!(Method::Cascaded.check_model(&max).is_err());
        let cas = small(Strategy::Cascaded, Aggregation::None);
        assert!(Method::Cascaded.check_model(&cas).is_ok());
    }

    #[test]
    fn learned_methods_check_model_and_factor() {
        let y = measurements(Pff::FIVE_EIGHTHS);
        assert_eq!(reconstruct(Method::DrpfMax, &y, None).unwrap_err().kind(), "checkpoint");
        let max = small(Strategy::Recurrent, Aggregation::Max);
        assert_eq!(reconstruct(Method::DrpfMax, &y, Some(&max)).unwrap().len(), 1);
        let y6 = measurements(Pff::SIX_EIGHTHS);
        assert_eq!(reconstruct(Method::DrpfMax, &y6, Some(&max)).unwrap_err().kind(), "checkpoint");
    }

    #[test]
    fn zero_model_reduces_to_zero_fill() {
        let y = measurements(Pff::FIVE_EIGHTHS);
        let zf = reconstruct(Method::ZeroFill, &y, None).unwrap();
        let net = reconstruct(Method::DrpfMax, &y, Some(&small(Strategy::Recurrent, Aggregation::Max))).unwrap();
        for (a, b) in zf.items()[0].data().iter().zip(net.items()[0].data()) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}
