use serde::{Deserialize, Serialize};

use ppstat::{CkksParams, CostMeter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    #[serde(rename = "B")]
    pub b: f64,
    pub degree: usize,
    pub iterations: usize,
    pub sign_mode: String,
    pub max_level: u32,
    pub quantize: bool,
}

/// Machine-readable result of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub measure: String,
    pub params: ReportParams,
    /// Scalar result; `null` for vector-valued runs.
    pub value: Option<f64>,
    pub mre: f64,
    /// Largest absolute error, when meaningful for the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_error: Option<f64>,
    pub cost: CostMeter,
    /// Emulation time. Not comparable to runtimes of a real HE library.
    pub wall_seconds: f64,
    pub assumptions: Vec<String>,
}

impl StatReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let value = self.value.map(|v| format!(" value={v:.6}")).unwrap_or_default();
        format!(
            "{}:{value} mre={:.3e} bootstraps={} wall={:.2}s",
            self.measure, self.mre, self.cost.bootstrap, self.wall_seconds
        )
    }
}

pub(crate) fn params_of(ckks: &CkksParams, b: f64, degree: usize, iterations: usize, sign_mode: &str) -> ReportParams {
    ReportParams {
        b,
        degree,
        iterations,
        sign_mode: sign_mode.to_string(),
        max_level: ckks.max_level,
        quantize: ckks.quantize,
    }
}
