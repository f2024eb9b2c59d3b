use crate::error::{Error, Result};

/// Probabilities below this are floored before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Training target for one example.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    Vector(Vec<f64>),
}

pub fn log_loss(pred: &[f64], label: usize) -> f64 {
    -pred[label].max(LOG_FLOOR).ln()
}

pub fn log_loss_grad(pred: &[f64], label: usize) -> Vec<f64> {
    let mut g = vec![0.0; pred.len()];
    if pred[label] > LOG_FLOOR {
        g[label] = -1.0 / pred[label];
    }
    g
}

/// Squared Euclidean distance.
pub fn euclidean_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction has {} values, target {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred.iter().zip(target).map(|(p, g)| (p - g) * (p - g)).sum())
}

pub fn euclidean_loss_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    pred.iter().zip(target).map(|(p, g)| 2.0 * (p - g)).collect()
}

/// Loss value and its gradient with respect to the prediction.
pub fn loss_and_grad(pred: &[f64], target: &Target) -> Result<(f64, Vec<f64>)> {
    match target {
        Target::Class(c) => {
            if *c >= pred.len() {
                return Err(Error::Shape(format!("class {c} for a {}-way output", pred.len())));
            }
            Ok((log_loss(pred, *c), log_loss_grad(pred, *c)))
        }
        Target::Vector(g) => Ok((euclidean_loss(pred, g)?, euclidean_loss_grad(pred, g))),
    }
}
