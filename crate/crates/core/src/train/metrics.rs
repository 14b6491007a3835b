use serde::{Deserialize, Serialize};

/// Error statistics of one predicted variable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VariableError {
    pub rmse: f64,
    /// Population standard deviation of the signed errors.
    pub std: f64,
}

impl VariableError {
    pub fn from_errors(e: &[f64]) -> Self {
        if e.is_empty() {
            return Self::default();
        }
        let n = e.len() as f64;
        let mean = e.iter().sum::<f64>() / n;
        let rmse = (e.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        let std = (e.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        Self { rmse, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Running intention accuracy on the training batches of the epoch.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub intention_accuracy: f64,
    /// Insertion time, seconds.
    pub y_t: VariableError,
    /// Insertion location, meters.
    pub y_s1: VariableError,
    /// Offset from the inserted DIA's rear boundary, meters.
    pub y_s2: VariableError,
    pub loss_curve: Vec<EpochRecord>,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// `epoch,mean_loss,accuracy` rows.
    pub fn loss_curve_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "mean_loss", "accuracy"]).expect("in-memory write");
        for r in &self.loss_curve {
            w.write_record([r.epoch.to_string(), format!("{}", r.mean_loss), format!("{}", r.accuracy)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn parse_loss_curve_csv(text: &str) -> Result<Vec<EpochRecord>, crate::error::FormatError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut out = Vec::new();
        for (i, rec) in r.deserialize::<EpochRecord>().enumerate() {
            out.push(rec.map_err(|e| crate::error::FormatError::Csv {
                file: "loss_curve.csv".into(),
                line: i as u64 + 2,
                message: e.to_string(),
            })?);
        }
        Ok(out)
    }
}
