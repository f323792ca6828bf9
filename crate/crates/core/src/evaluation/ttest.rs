use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-tailed confidence levels with tabulated critical values.
pub const CONFIDENCE_LEVELS: [f64; 8] = [0.80, 0.90, 0.95, 0.98, 0.99, 0.995, 0.998, 0.999];

/// Two-tailed Student t critical values, one row per degree of freedom 1..=30.
const T_TABLE: [[f64; 8]; 30] = [
    [3.0777, 6.3138, 12.7062, 31.8205, 63.6567, 127.3213, 318.3088, 636.6192],
    [1.8856, 2.9200, 4.3027, 6.9646, 9.9248, 14.0890, 22.3271, 31.5991],
    [1.6377, 2.3534, 3.1824, 4.5407, 5.8409, 7.4533, 10.2145, 12.9240],
    [1.5332, 2.1318, 2.7764, 3.7469, 4.6041, 5.5976, 7.1732, 8.6103],
    [1.4759, 2.0150, 2.5706, 3.3649, 4.0321, 4.7733, 5.8934, 6.8688],
    [1.4398, 1.9432, 2.4469, 3.1427, 3.7074, 4.3168, 5.2076, 5.9588],
    [1.4149, 1.8946, 2.3646, 2.9980, 3.4995, 4.0293, 4.7853, 5.4079],
    [1.3968, 1.8595, 2.3060, 2.8965, 3.3554, 3.8325, 4.5008, 5.0413],
    [1.3830, 1.8331, 2.2622, 2.8214, 3.2498, 3.6897, 4.2968, 4.7809],
    [1.3722, 1.8125, 2.2281, 2.7638, 3.1693, 3.5814, 4.1437, 4.5869],
    [1.3634, 1.7959, 2.2010, 2.7181, 3.1058, 3.4966, 4.0247, 4.4370],
    [1.3562, 1.7823, 2.1788, 2.6810, 3.0545, 3.4284, 3.9296, 4.3178],
    [1.3502, 1.7709, 2.1604, 2.6503, 3.0123, 3.3725, 3.8520, 4.2208],
    [1.3450, 1.7613, 2.1448, 2.6245, 2.9768, 3.3257, 3.7874, 4.1405],
    [1.3406, 1.7531, 2.1314, 2.6025, 2.9467, 3.2860, 3.7328, 4.0728],
    [1.3368, 1.7459, 2.1199, 2.5835, 2.9208, 3.2520, 3.6862, 4.0150],
    [1.3334, 1.7396, 2.1098, 2.5669, 2.8982, 3.2224, 3.6458, 3.9651],
    [1.3304, 1.7341, 2.1009, 2.5524, 2.8784, 3.1966, 3.6105, 3.9216],
    [1.3277, 1.7291, 2.0930, 2.5395, 2.8609, 3.1737, 3.5794, 3.8834],
    [1.3253, 1.7247, 2.0860, 2.5280, 2.8453, 3.1534, 3.5518, 3.8495],
    [1.3232, 1.7207, 2.0796, 2.5176, 2.8314, 3.1352, 3.5272, 3.8193],
    [1.3212, 1.7171, 2.0739, 2.5083, 2.8188, 3.1188, 3.5050, 3.7921],
    [1.3195, 1.7139, 2.0687, 2.4999, 2.8073, 3.1040, 3.4850, 3.7676],
    [1.3178, 1.7109, 2.0639, 2.4922, 2.7969, 3.0905, 3.4668, 3.7454],
    [1.3163, 1.7081, 2.0595, 2.4851, 2.7874, 3.0782, 3.4502, 3.7251],
    [1.3150, 1.7056, 2.0555, 2.4786, 2.7787, 3.0669, 3.4350, 3.7066],
    [1.3137, 1.7033, 2.0518, 2.4727, 2.7707, 3.0565, 3.4210, 3.6896],
    [1.3125, 1.7011, 2.0484, 2.4671, 2.7633, 3.0469, 3.4082, 3.6739],
    [1.3114, 1.6991, 2.0452, 2.4620, 2.7564, 3.0380, 3.3962, 3.6594],
    [1.3104, 1.6973, 2.0423, 2.4573, 2.7500, 3.0298, 3.3852, 3.6460],
];

/// Standard normal quantiles used beyond 30 degrees of freedom.
const Z_TABLE: [f64; 8] = [1.2816, 1.6449, 1.9600, 2.3263, 2.5758, 2.8070, 3.0902, 3.2905];

/// Two-tailed critical value at `confidence` with `df` degrees of freedom.
pub fn critical_t(df: usize, confidence: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid("t distribution needs at least one degree of freedom"));
    }
    let col = CONFIDENCE_LEVELS
        .iter()
        .position(|&c| (c - confidence).abs() < 1e-9)
        .ok_or_else(|| {
            Error::invalid(format!(
                "confidence {confidence} is not tabulated; use one of {CONFIDENCE_LEVELS:?}"
            ))
        })?;
    Ok(if df <= 30 { T_TABLE[df - 1][col] } else { Z_TABLE[col] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    /// `+inf` or `-inf` when the differences are constant and non-zero.
    pub t: f64,
    pub df: usize,
    pub critical: f64,
    pub reject: bool,
}

/// Paired two-tailed Student t test on `a[i] - b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64], confidence: f64) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "paired samples of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("paired t test needs at least two pairs"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t test sample".into()));
    }
    let df = n - 1;
    let critical = critical_t(df, confidence)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / df as f64;
    let sd = var.sqrt();
    let t = if sd == 0.0 {
        if mean == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(mean)
        }
    } else {
        mean / (sd / (n as f64).sqrt())
    };
    Ok(TTest {
        t,
        df,
        critical,
        reject: t.abs() > critical,
    })
}
