use std::f64::consts::PI;

use thiserror::Error;

/// Variables produced by the generators.
pub const SIGNALS: [&str; 3] = ["temp", "rpm", "jobs"];

/// Actuator state readable like a signal.
pub const COOLING: &str = "cooling";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown variable `{0}`")]
pub struct UnknownVariable(pub String);

/// Closed-form machine signals at simulated time `t` seconds.
pub fn sim_signal(var: &str, t: f64) -> Result<f64, UnknownVariable> {
    match var {
        "temp" => Ok(20.0 + 5.0 * (2.0 * PI * t / 60.0).sin()),
        "rpm" => Ok(1000.0 + t.rem_euclid(10.0) * 50.0),
        "jobs" => Ok((t / 30.0).floor()),
        other => Err(UnknownVariable(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        assert_eq!(sim_signal("temp", 0.0).unwrap(), 20.0);
        assert_eq!(sim_signal("temp", 15.0).unwrap(), 25.0);
        assert_eq!(sim_signal("temp", 45.0).unwrap(), 15.0);
        assert_eq!(sim_signal("rpm", 3.0).unwrap(), 1150.0);
        assert_eq!(sim_signal("rpm", 13.0).unwrap(), 1150.0);
        assert_eq!(sim_signal("jobs", 59.9).unwrap(), 1.0);
        assert!(sim_signal("nope", 0.0).is_err());
    }
}
