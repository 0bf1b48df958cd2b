//! The full stochastic model shared by every engine.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::{DelayModel, InterarrivalModel};
use crate::error::{invalid, Error, Result};
use crate::multi_index::BatchMomentProvider;

/// Interarrival law, per-type delay laws, discount rate and batch law.
///
/// JSON layout:
/// `{"k":2, "interarrival":{...}, "delays":[{...},{...}], "delta":0.2, "batch":{...}}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct ModelSpec {
    interarrival: InterarrivalModel,
    delays: Vec<DelayModel>,
    delta: f64,
    batch: BatchMomentProvider,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    k: usize,
    interarrival: InterarrivalModel,
    delays: Vec<DelayModel>,
    delta: f64,
    batch: BatchMomentProvider,
}

impl TryFrom<ModelJson> for ModelSpec {
    type Error = Error;
    fn try_from(j: ModelJson) -> Result<Self> {
        if j.k != j.delays.len() {
            return Err(invalid(format!(
                "k = {} but {} delay laws given",
                j.k,
                j.delays.len()
            )));
        }
        ModelSpec::new(j.interarrival, j.delays, j.delta, j.batch)
    }
}

impl From<ModelSpec> for ModelJson {
    fn from(m: ModelSpec) -> Self {
        ModelJson {
            k: m.delays.len(),
            interarrival: m.interarrival,
            delays: m.delays,
            delta: m.delta,
            batch: m.batch,
        }
    }
}

impl ModelSpec {
    pub fn new(
        interarrival: InterarrivalModel,
        delays: Vec<DelayModel>,
        delta: f64,
        batch: BatchMomentProvider,
    ) -> Result<Self> {
        if delays.is_empty() {
            return Err(invalid("at least one delay law (k >= 1) is required"));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(invalid(format!("discount rate must be >= 0, got {delta}")));
        }
        batch.validate()?;
        if batch.k() != delays.len() {
            return Err(Error::Dimension(format!(
                "batch has k = {}, {} delay laws given",
                batch.k(),
                delays.len()
            )));
        }
        Ok(Self {
            interarrival,
            delays,
            delta,
            batch,
        })
    }

    /// Renewal arrivals at `rate`, exponential delays at `mu` for every type.
    pub fn poisson_exponential(
        rate: f64,
        mu: f64,
        delta: f64,
        batch: BatchMomentProvider,
    ) -> Result<Self> {
        let k = batch.k();
        Self::new(
            InterarrivalModel::exponential(rate)?,
            vec![DelayModel::exponential(mu)?; k],
            delta,
            batch,
        )
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad model file {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn k(&self) -> usize {
        self.delays.len()
    }

    pub fn interarrival(&self) -> &InterarrivalModel {
        &self.interarrival
    }

    pub fn delays(&self) -> &[DelayModel] {
        &self.delays
    }

    pub fn delay(&self, j: usize) -> &DelayModel {
        &self.delays[j]
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn batch(&self) -> &BatchMomentProvider {
        &self.batch
    }

    pub fn mean_interarrival(&self) -> f64 {
        self.interarrival.mean()
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(
            self.interarrival.clone(),
            self.delays.clone(),
            delta,
            self.batch.clone(),
        )
    }

    pub fn with_interarrival(&self, interarrival: InterarrivalModel) -> Self {
        Self {
            interarrival,
            ..self.clone()
        }
    }

    /// Common exponential delay rate, if all delays are `Exp(mu)` with the same `mu`.
    pub fn common_exponential_rate(&self) -> Option<f64> {
        let mu = self.delays[0].exponential_rate()?;
        self.delays
            .iter()
            .all(|d| d.exponential_rate() == Some(mu))
            .then_some(mu)
    }

    /// Single type, unit batches: the plain G/G/inf queue.
    pub fn is_single_unit_queue(&self) -> bool {
        self.k() == 1 && self.batch.is_unit_scalar()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIAD: &str = r#"{
        "k": 2,
        "interarrival": {"family": "exponential", "rate": 1.0},
        "delays": [{"family": "exponential", "rate": 1.0}, {"family": "exponential", "rate": 1.0}],
        "delta": 0.2,
        "batch": {"kind": "multinomial", "M": 2, "p": [0.5, 0.5]}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let m = ModelSpec::from_json_str(TRIAD).unwrap();
        assert_eq!(m.k(), 2);
        assert_eq!(m.common_exponential_rate(), Some(1.0));
        let again = ModelSpec::from_json_str(&m.to_json()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn rejects_inconsistent_models() {
        let bad_k = TRIAD.replace("\"k\": 2", "\"k\": 3");
        assert!(ModelSpec::from_json_str(&bad_k).is_err());
        let neg = TRIAD.replace("0.2", "-0.2");
        assert!(ModelSpec::from_json_str(&neg).is_err());
        let batch1 = TRIAD.replace("[0.5, 0.5]", "[1.0]");
        assert!(ModelSpec::from_json_str(&batch1).is_err());
        let det = TRIAD.replace(
            r#""interarrival": {"family": "exponential", "rate": 1.0}"#,
            r#""interarrival": {"family": "deterministic", "d": 1.0}"#,
        );
        assert!(ModelSpec::from_json_str(&det).is_err());
    }

    #[test]
    fn common_rate_detection() {
        let m = ModelSpec::new(
            InterarrivalModel::exponential(1.0).unwrap(),
            vec![DelayModel::exponential(1.0).unwrap(), DelayModel::exponential(2.0).unwrap()],
            0.0,
            BatchMomentProvider::unit(2),
        )
        .unwrap();
        assert_eq!(m.common_exponential_rate(), None);
        let m1 = ModelSpec::poisson_exponential(1.0, 1.0, 0.0, BatchMomentProvider::unit(1)).unwrap();
        assert!(m1.is_single_unit_queue());
    }
}
