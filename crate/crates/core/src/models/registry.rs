use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use super::{AdaptiveModel, CompressorPredictor, Model, NgramTables, Smoothing, StaticNgramModel, UniformModel};
use crate::baseline::DeflateLength;
use crate::bridge::{BridgeModel, Endpoint};
use crate::error::{Error, Result};
use crate::harness::Domain;

/// Environment variable naming the default bridge endpoint.
pub const SIDECAR_ENV: &str = "MODELZIP_SIDECAR";

/// A model named on the command line or in a config file.
///
/// | spec | model |
/// |------|-------|
/// | `uniform` | uniform over 256 bytes |
/// | `adaptive:o<k>[:<smoothing>]` | adaptive order-k counts, Laplace unless `kt` or `d<num>/<den>` |
/// | `ngram:<path>` | static n-gram loaded from a table dump |
/// | `deflate-predictor` | compressor-as-predictor over raw deflate lengths |
/// | `bridge[:<endpoint>]` | external sidecar; endpoint defaults to `$MODELZIP_SIDECAR` |
/// | `<endpoint>` | same as `bridge:<endpoint>` |
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Uniform,
    Adaptive { order: usize, smoothing: Smoothing },
    Ngram { path: PathBuf },
    DeflatePredictor,
    Bridge { endpoint: Option<String> },
}

pub type SharedFactory = Arc<dyn Fn() -> Result<Box<dyn Model>> + Send + Sync>;

impl ModelSpec {
    pub fn is_remote(&self) -> bool {
        matches!(self, ModelSpec::Bridge { .. })
    }

    pub fn build(&self, domain: Domain) -> Result<Box<dyn Model>> {
        (self.factory(domain)?)()
    }

    /// Loads shared state once and returns a constructor for independent
    /// instances, one per worker.
    pub fn factory(&self, domain: Domain) -> Result<SharedFactory> {
        Ok(match self {
            ModelSpec::Uniform => Arc::new(|| Ok(Box::new(UniformModel::new(256)) as Box<dyn Model>)),
            &ModelSpec::Adaptive { order, smoothing } => {
                AdaptiveModel::new(256, order, smoothing)?;
                Arc::new(move || Ok(Box::new(AdaptiveModel::new(256, order, smoothing)?) as Box<dyn Model>))
            }
            ModelSpec::Ngram { path } => {
                let bytes = std::fs::read(path)
                    .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
                let tables = Arc::new(NgramTables::from_bytes(&bytes)?);
                if tables.alphabet() != 256 {
                    return Err(Error::ModelTable(format!(
                        "{}: alphabet {} is not the byte alphabet",
                        path.display(),
                        tables.alphabet()
                    )));
                }
                Arc::new(move || Ok(Box::new(StaticNgramModel::new(tables.clone())) as Box<dyn Model>))
            }
            ModelSpec::DeflatePredictor => Arc::new(|| {
                Ok(Box::new(CompressorPredictor::new(DeflateLength::default(), "deflate-predictor"))
                    as Box<dyn Model>)
            }),
            ModelSpec::Bridge { endpoint } => {
                let endpoint = match endpoint {
                    Some(e) => e.clone(),
                    None => std::env::var(SIDECAR_ENV).map_err(|_| {
                        Error::InvalidConfig(format!("no bridge endpoint given and ${SIDECAR_ENV} is unset"))
                    })?,
                };
                let endpoint: Endpoint = endpoint.parse()?;
                Arc::new(move || Ok(Box::new(BridgeModel::open(&endpoint, domain)?) as Box<dyn Model>))
            }
        })
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head, rest) {
            ("uniform", None) => Ok(ModelSpec::Uniform),
            ("deflate-predictor", None) => Ok(ModelSpec::DeflatePredictor),
            ("adaptive", Some(rest)) => {
                let (order, smoothing) = match rest.split_once(':') {
                    Some((o, sm)) => (o, sm.parse()?),
                    None => (rest, Smoothing::LAPLACE),
                };
                let order = order
                    .strip_prefix('o')
                    .unwrap_or(order)
                    .parse()
                    .map_err(|_| Error::UnknownModel(s.to_owned()))?;
                Ok(ModelSpec::Adaptive { order, smoothing })
            }
            ("ngram", Some(path)) if !path.is_empty() => Ok(ModelSpec::Ngram { path: path.into() }),
            ("bridge", None) => Ok(ModelSpec::Bridge { endpoint: None }),
            ("bridge", Some(e)) if !e.is_empty() => Ok(ModelSpec::Bridge {
                endpoint: Some(e.to_owned()),
            }),
            _ if s.parse::<Endpoint>().is_ok() => Ok(ModelSpec::Bridge {
                endpoint: Some(s.to_owned()),
            }),
            _ => Err(Error::UnknownModel(s.to_owned())),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Uniform => f.write_str("uniform"),
            ModelSpec::Adaptive { order, smoothing } => write!(f, "adaptive:o{order}:{smoothing}"),
            ModelSpec::Ngram { path } => write!(f, "ngram:{}", path.display()),
            ModelSpec::DeflatePredictor => f.write_str("deflate-predictor"),
            ModelSpec::Bridge { endpoint: None } => f.write_str("bridge"),
            ModelSpec::Bridge { endpoint: Some(e) } => write!(f, "bridge:{e}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for (s, canon) in [
            ("uniform", "uniform"),
            ("adaptive:2", "adaptive:o2:laplace"),
            ("adaptive:o0:kt", "adaptive:o0:kt"),
            ("adaptive:o1:d3/4", "adaptive:o1:d3/4"),
            ("ngram:/tmp/x.mzng", "ngram:/tmp/x.mzng"),
            ("deflate-predictor", "deflate-predictor"),
            ("bridge", "bridge"),
            ("bridge:mock:order0", "bridge:mock:order0"),
            ("mock:ngram", "bridge:mock:ngram"),
            ("tcp:127.0.0.1:7000", "bridge:tcp:127.0.0.1:7000"),
        ] {
            let spec: ModelSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), canon);
            assert_eq!(canon.parse::<ModelSpec>().unwrap(), spec);
        }
        for bad in ["", "gpt", "adaptive", "adaptive:x", "ngram:", "uniform:3", "mock:nope", "tcp:host"] {
            assert!(bad.parse::<ModelSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn built_ids_match_canonical_names() {
        for s in ["uniform", "adaptive:o3:kt"] {
            let m = s.parse::<ModelSpec>().unwrap().build(Domain::Bytes).unwrap();
            assert_eq!(m.id(), s);
        }
        assert!("adaptive:o4".parse::<ModelSpec>().unwrap().build(Domain::Bytes).is_err());
    }
}
