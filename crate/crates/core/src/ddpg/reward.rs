use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest penalty multiplier. The raw multiplier grows geometrically in
/// `L_t / L_c` and overflows for tight limits.
pub const MAX_PENALTY: f64 = 1e6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Penalty sign fixed by the violation and baseline semantics.
    #[default]
    SignCorrected,
    /// The formula exactly as printed, including its sign parity quirks.
    Literal,
}

/// Baseline and limit against which a step's (throughput, latency) is scored.
/// All quantities are in the surrogate's normalized units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardContext {
    pub baseline_throughput: f64,
    pub previous_throughput: f64,
    /// `None` for unconstrained runs.
    pub latency_limit: Option<f64>,
    pub mode: RewardMode,
}

impl RewardContext {
    pub fn is_violation(&self, latency: f64) -> bool {
        self.latency_limit.is_some_and(|c| latency > c)
    }
}

/// Scores one step.
///
/// With `d0 = T - T0` and `d1 = T - T_prev`, the throughput factor is
/// `((1 + d0)^2 - 1) * |1 + d1|` when `d0 > 0` and `((1 - d0)^2 - 1) * |1 - d1|`
/// otherwise. A latency violation multiplies it by `-(1 + L - L_c)^floor(L / L_c)`;
/// without one, the upper branch is a reward and the lower branch a penalty.
pub fn compute_reward(throughput: f64, latency: f64, ctx: &RewardContext) -> Result<f64> {
    let values = [throughput, latency, ctx.baseline_throughput, ctx.previous_throughput];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reward input"));
    }
    if let Some(limit) = ctx.latency_limit {
        if limit.is_nan() || limit <= 0.0 {
            return Err(Error::InvalidArgument(format!("latency limit {limit} must be positive")));
        }
    }

    let d0 = throughput - ctx.baseline_throughput;
    let d1 = throughput - ctx.previous_throughput;
    let above = d0 > 0.0;
    let factor = if above {
        ((1.0 + d0).powi(2) - 1.0) * (1.0 + d1).abs()
    } else {
        ((1.0 - d0).powi(2) - 1.0) * (1.0 - d1).abs()
    };
    if factor == 0.0 {
        return Ok(0.0);
    }

    // Exponent floor(L / L_c) and base offset L - L_c; unconstrained runs
    // have exponent 0.
    let (exponent, excess) = match ctx.latency_limit {
        Some(c) if c.is_finite() => ((latency / c).floor(), latency - c),
        _ => (0.0, 0.0),
    };

    let r = match ctx.mode {
        RewardMode::SignCorrected => {
            if ctx.is_violation(latency) {
                -penalty((1.0 + excess).abs(), exponent) * factor
            } else if above {
                factor
            } else {
                -factor
            }
        }
        RewardMode::Literal => {
            let base = if above { -1.0 - excess } else { 1.0 + excess };
            let magnitude = penalty(base.abs(), exponent);
            let odd = exponent % 2.0 == 1.0;
            let sign = if base < 0.0 && odd { -1.0 } else { 1.0 };
            sign * magnitude * factor
        }
    };
    Ok(r)
}

fn penalty(base: f64, exponent: f64) -> f64 {
    if exponent <= 0.0 {
        return 1.0;
    }
    let log = exponent * base.ln();
    if log >= MAX_PENALTY.ln() {
        MAX_PENALTY
    } else {
        log.exp()
    }
}
