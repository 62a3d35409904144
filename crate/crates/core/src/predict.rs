//! Compile-time power prediction from a fitted [`EnergyModel`].

use serde::{Deserialize, Serialize};

use crate::domain::{EventVector, PnrConfiguration};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::EnergyModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Prediction<T> {
    /// One entry per model row; the leakage row (if any) carries the leak.
    pub rows_mw: Vec<T>,
    pub total_mw: T,
    pub beta: Vec<T>,
}

/// `β_e = α_e · Σ_r W_re`.
pub fn effective_beta<T: Scalar>(model: &EnergyModel<T>) -> Vec<T> {
    model.alpha().iter().enumerate().map(|(e, &a)| a * model.w().col_sum(e)).collect()
}

fn check_order<T: Scalar>(model: &EnergyModel<T>, events: &EventVector<T>) -> Result<()> {
    if events.names() != model.event_names() {
        return Err(Error::rejected("event names do not match the model's event order"));
    }
    Ok(())
}

/// `ŷ = W diag(α) x`, with the leak placed on the leakage row.
pub fn predict_rows<T: Scalar>(model: &EnergyModel<T>, events: &EventVector<T>) -> Result<Vec<T>> {
    check_order(model, events)?;
    let scaled: Vec<T> = events.counts().iter().zip(model.alpha()).map(|(&x, &a)| x * a).collect();
    let mut rows = model.w().mul_vec(&scaled);
    if let Some(r) = model.leak_row_index() {
        rows[r] += model.leak_mw();
    }
    Ok(rows)
}

/// `P̂ = Σ_e β_e x_e + leak` at the training operating point.
pub fn predict_total<T: Scalar>(model: &EnergyModel<T>, events: &EventVector<T>) -> Result<T> {
    check_order(model, events)?;
    Ok(dot(&effective_beta(model), events.counts()) + model.leak_mw())
}

/// Dynamic power scaled linearly from the training frequency; leakage is
/// frequency-invariant.
pub fn predict_power_at<T: Scalar>(model: &EnergyModel<T>, events: &EventVector<T>, freq_mhz: T) -> Result<T> {
    check_order(model, events)?;
    check_freq(freq_mhz)?;
    let dynamic = dot(&effective_beta(model), events.counts());
    Ok(freq_mhz / model.train_op().freq_mhz * dynamic + model.leak_mw())
}

fn check_freq<T: Scalar>(freq_mhz: T) -> Result<()> {
    if !(freq_mhz.is_finite() && freq_mhz > T::zero()) {
        return Err(Error::rejected("frequency must be finite and > 0"));
    }
    Ok(())
}

/// Row and total prediction together.
pub fn predict<T: Scalar>(model: &EnergyModel<T>, events: &EventVector<T>) -> Result<Prediction<T>> {
    let rows_mw = predict_rows(model, events)?;
    let total_mw = predict_total(model, events)?;
    Ok(Prediction { rows_mw, total_mw, beta: effective_beta(model) })
}

/// Power estimate for a routed candidate at its own frequency.
pub trait PowerPredictor<T>: Sync {
    fn predict_power(&self, config: &PnrConfiguration<T>) -> Result<T>;
}

/// A model with its effective coefficients precomputed. Candidate events are
/// matched by name: missing events count as zero, unknown events are an error.
#[derive(Debug, Clone)]
pub struct ModelPredictor<T> {
    model: EnergyModel<T>,
    beta: Vec<T>,
}

impl<T: Scalar> ModelPredictor<T> {
    pub fn new(model: EnergyModel<T>) -> Self {
        let beta = effective_beta(&model);
        ModelPredictor { model, beta }
    }

    pub fn model(&self) -> &EnergyModel<T> {
        &self.model
    }

    pub fn beta(&self) -> &[T] {
        &self.beta
    }

    /// Per-event dynamic power `β_e x_e` at the training frequency, in model order.
    pub fn contributions(&self, events: &EventVector<T>) -> Result<Vec<T>> {
        let counts = if events.names() == self.model.event_names() {
            events.counts().to_vec()
        } else {
            events.reorder_to(self.model.event_names())?.counts().to_vec()
        };
        Ok(counts.iter().zip(&self.beta).map(|(&x, &b)| x * b).collect())
    }

    pub fn power_at(&self, events: &EventVector<T>, freq_mhz: T) -> Result<T> {
        check_freq(freq_mhz)?;
        let dynamic: T = self.contributions(events)?.into_iter().sum();
        Ok(freq_mhz / self.model.train_op().freq_mhz * dynamic + self.model.leak_mw())
    }
}

impl<T: Scalar> PowerPredictor<T> for ModelPredictor<T> {
    fn predict_power(&self, config: &PnrConfiguration<T>) -> Result<T> {
        self.power_at(&config.events, config.freq_mhz)
    }
}

impl<T, F> PowerPredictor<T> for F
where
    F: Fn(&PnrConfiguration<T>) -> Result<T> + Sync,
{
    fn predict_power(&self, config: &PnrConfiguration<T>) -> Result<T> {
        self(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::OperatingPoint;
    use crate::linalg::Matrix;
    use crate::model::{ModelKind, LEAKAGE_ROW};

    fn op() -> OperatingPoint<f64> {
        OperatingPoint::new(0.8, 100.0, "tt").unwrap()
    }

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn beta_from_column_sum() {
        let w = Matrix::from_rows(&[vec![0.5], vec![0.5]]);
        let m = EnergyModel::new(names(&["e"]), names(&["a", "b"]), w, vec![4.0], 0.0, op(), ModelKind::Hierarchical)
            .unwrap();
        assert_eq!(effective_beta(&m), vec![4.0]);
    }

    #[test]
    fn rows_direct_product() {
        let w = Matrix::from_rows(&[vec![0.25], vec![0.75]]);
        let m = EnergyModel::new(names(&["e"]), names(&["a", "b"]), w, vec![8.0], 0.0, op(), ModelKind::Hierarchical)
            .unwrap();
        let x = EventVector::from_pairs([("e", 1.0)]).unwrap();
        assert_eq!(predict_rows(&m, &x).unwrap(), vec![2.0, 6.0]);
    }

    #[test]
    fn zero_events_give_leak_only() {
        let w = Matrix::from_rows(&[vec![1.0], vec![0.0]]);
        let m = EnergyModel::new(
            names(&["e"]),
            names(&["a", LEAKAGE_ROW]),
            w,
            vec![2.0],
            3.0,
            op(),
            ModelKind::Hierarchical,
        )
        .unwrap();
        let x = EventVector::from_pairs([("e", 0.0)]).unwrap();
        assert_eq!(predict_rows(&m, &x).unwrap(), vec![0.0, 3.0]);
        assert_eq!(predict_total(&m, &x).unwrap(), 3.0);
    }

    #[test]
    fn total_sum_of_products() {
        let m = EnergyModel::from_beta(names(&["a", "b"]), vec![2.0, 5.0], 0.0, op()).unwrap();
        let x = EventVector::from_pairs([("a", 3.0), ("b", 1.0)]).unwrap();
        assert_eq!(predict_total(&m, &x).unwrap(), 11.0);
    }

    #[test]
    fn frequency_scaling() {
        let m = EnergyModel::from_beta(names(&["a"]), vec![1.0], 20.0, op()).unwrap();
        let x = EventVector::from_pairs([("a", 100.0)]).unwrap();
        assert_eq!(predict_power_at(&m, &x, 100.0).unwrap(), predict_total(&m, &x).unwrap());
        assert_eq!(predict_power_at(&m, &x, 50.0).unwrap(), 70.0);
        let m0 = EnergyModel::from_beta(names(&["a"]), vec![1.0], 0.0, op()).unwrap();
        assert_eq!(predict_power_at(&m0, &x, 200.0).unwrap(), 2.0 * predict_total(&m0, &x).unwrap());
        assert!(predict_power_at(&m, &x, 0.0).is_err());
        assert!(predict_power_at(&m, &x, -5.0).is_err());
    }

    #[test]
    fn order_mismatch_rejected() {
        let m = EnergyModel::from_beta(names(&["a", "b"]), vec![1.0, 1.0], 0.0, op()).unwrap();
        let x = EventVector::from_pairs([("b", 1.0), ("a", 1.0)]).unwrap();
        assert!(predict_rows(&m, &x).is_err());
        assert!(predict_total(&m, &x).is_err());
    }

    #[test]
    fn predictor_maps_by_name() {
        let m = EnergyModel::from_beta(names(&["a", "b"]), vec![2.0, 5.0], 1.0, op()).unwrap();
        let p = ModelPredictor::new(m);
        let x = EventVector::from_pairs([("b", 1.0)]).unwrap();
        assert_eq!(p.power_at(&x, 100.0).unwrap(), 6.0);
        let unknown = EventVector::from_pairs([("c", 1.0)]).unwrap();
        assert!(p.power_at(&unknown, 100.0).is_err());
    }
}
