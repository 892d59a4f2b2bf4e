//! Survival rate, decision gain index and small aggregation helpers.

use num_traits::Num;

/// `s_b / (s_b + s_r)` for mean allied and enemy survivor counts; `None`
/// when both are zero.
pub fn survival_rate<T: Num + Copy>(s_b: T, s_r: T) -> Option<T> {
    let total = s_b + s_r;
    if total == T::zero() {
        None
    } else {
        Some(s_b / total)
    }
}

/// Survival rate divided by the drive rate; `None` when the drive rate is
/// zero.
pub fn gain_index<T: Num + PartialOrd + Copy>(survival: T, drive_rate: T) -> Option<T> {
    (drive_rate > T::zero()).then(|| survival / drive_rate)
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (n, sum) = values.into_iter().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| sum / n as f64)
}
