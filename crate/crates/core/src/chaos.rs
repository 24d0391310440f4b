//! Skew tent map iteration and keyed sequence extraction.
//!
//! This is the sole source of keyed pseudo-randomness in the crate: both the
//! permutation orders and the measurement matrices are derived from orbits of
//! the map
//!
//! ```text
//! T(z; mu) = z / mu            if 0 < z < mu
//!          = (1 - z) / (1 - mu) if mu <= z < 1
//! ```
//!
//! with control parameter `mu` and state `z` both in the open interval (0,1).
//! All arithmetic is plain IEEE-754 double precision so that identical keys
//! produce bit-identical sequences on every platform.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Default transient length discarded before any sequence is used.
pub const DEFAULT_BURN_IN: usize = 1000;

/// Replacement state used when an iterate lands exactly on 0, 1, or `mu`.
///
/// Those points are absorbing in finite precision (they collapse the orbit to
/// the fixed point 0), so the iteration swaps them for a fixed interior value
/// and continues.
pub const ESCAPE_VALUE: f64 = 0.123_456_789_012_345_6;

/// One (control parameter, initial state) pair for the skew tent map.
///
/// Two such pairs form the full secret of the cipher: one drives the
/// permutation, the other the measurement matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaoticKey {
    mu: f64,
    z0: f64,
}

impl ChaoticKey {
    /// Validates `0 < mu < 1`, `0 < z0 < 1` and `z0 != mu`.
    pub fn new(mu: f64, z0: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) || !mu.is_finite() {
            return Err(Error::InvalidKey(format!(
                "mu = {mu} outside the open interval (0,1)"
            )));
        }
        if !(z0 > 0.0 && z0 < 1.0) || !z0.is_finite() {
            return Err(Error::InvalidKey(format!(
                "z0 = {z0} outside the open interval (0,1)"
            )));
        }
        if z0 == mu {
            return Err(Error::InvalidKey(format!("z0 = mu = {mu} is not allowed")));
        }
        Ok(Self { mu, z0 })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }
}

/// A contiguous run of iterates with its discarded transient length.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaoticSequence {
    values: Vec<f64>,
    burn_in: usize,
}

impl ChaoticSequence {
    /// The iterates `z(m+1) .. z(m+length)` where `m` is the burn-in.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A strided extraction from an orbit: every `distance`-th post-offset iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSequence {
    values: Vec<f64>,
    distance: usize,
    offset: usize,
}

impl SampledSequence {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn distance(&self) -> usize {
        self.distance
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One application of the skew tent map with full domain validation.
///
/// Returns `z/mu` for `z < mu`, `(1-z)/(1-mu)` otherwise. Results that land
/// exactly on 0 or 1 are replaced by [`ESCAPE_VALUE`]; a result equal to `mu`
/// needs no replacement because its successor is exactly 1 and gets escaped
/// then, before the orbit can collapse to 0.
pub fn tent_step(z: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) || !mu.is_finite() {
        return Err(Error::Domain {
            what: "mu",
            value: mu,
            expected: "in the open interval (0,1)",
        });
    }
    if !(z > 0.0 && z < 1.0) || !z.is_finite() {
        return Err(Error::Domain {
            what: "z",
            value: z,
            expected: "in the open interval (0,1)",
        });
    }
    Ok(step_unchecked(z, mu))
}

/// The map itself, assuming validated inputs. Keeps the orbit inside (0,1).
#[inline]
fn step_unchecked(z: f64, mu: f64) -> f64 {
    let next = if z < mu { z / mu } else { (1.0 - z) / (1.0 - mu) };
    if next == 0.0 || next == 1.0 {
        ESCAPE_VALUE
    } else {
        next
    }
}

/// Iterates the map `burn_in + length` times and returns the last `length`
/// iterates, i.e. `z(burn_in+1) .. z(burn_in+length)`.
pub fn iterate(key: &ChaoticKey, burn_in: usize, length: usize) -> ChaoticSequence {
    let mu = key.mu;
    let mut z = key.z0;
    for _ in 0..burn_in {
        z = step_unchecked(z, mu);
    }
    let mut values = Vec::with_capacity(length);
    for _ in 0..length {
        z = step_unchecked(z, mu);
        values.push(z);
    }
    ChaoticSequence { values, burn_in }
}

/// Extracts `count` values spaced `distance` apart from the orbit, starting
/// at the first iterate after `offset` discarded ones.
///
/// Equivalent to `iterate(key, offset, count * distance)` downsampled with
/// stride `distance`; `values[i]` is the iterate `z(offset + i*distance + 1)`.
pub fn sample(
    key: &ChaoticKey,
    distance: usize,
    offset: usize,
    count: usize,
) -> Result<SampledSequence> {
    if distance == 0 {
        return Err(Error::Domain {
            what: "distance",
            value: 0.0,
            expected: "a positive integer",
        });
    }
    let mu = key.mu;
    let mut z = key.z0;
    for _ in 0..offset {
        z = step_unchecked(z, mu);
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        // Advance by one stride; the first sample sits one step past the offset.
        let steps = if i == 0 { 1 } else { distance };
        for _ in 0..steps {
            z = step_unchecked(z, mu);
        }
        values.push(z);
    }
    Ok(SampledSequence {
        values,
        distance,
        offset,
    })
}

/// Serializes a key as the two-line text format `mu=<decimal>`, `z0=<decimal>`.
///
/// Floats are printed with Rust's shortest round-trip representation, which
/// stays within 17 significant digits.
pub fn format_key(key: &ChaoticKey) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mu={}", key.mu);
    let _ = writeln!(out, "z0={}", key.z0);
    out
}

/// Parses the two-line key format produced by [`format_key`].
pub fn parse_key(text: &str) -> Result<ChaoticKey> {
    let mut mu = None;
    let mut z0 = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (name, value) = parse_key_line(line)?;
        match name {
            "mu" => mu = Some(value),
            "z0" => z0 = Some(value),
            other => {
                return Err(Error::Format {
                    what: "key file",
                    detail: format!("unknown field `{other}`"),
                })
            }
        }
    }
    match (mu, z0) {
        (Some(mu), Some(z0)) => ChaoticKey::new(mu, z0),
        _ => Err(Error::Format {
            what: "key file",
            detail: "missing mu or z0 line".into(),
        }),
    }
}

pub(crate) fn parse_key_line(line: &str) -> Result<(&str, f64)> {
    let (name, raw) = line.split_once('=').ok_or_else(|| Error::Format {
        what: "key file",
        detail: format!("line `{line}` is not of the form name=value"),
    })?;
    let value = raw.trim().parse::<f64>().map_err(|_| Error::Format {
        what: "key file",
        detail: format!("`{raw}` is not a decimal number"),
    })?;
    Ok((name.trim(), value))
}

pub fn write_key_file<P: AsRef<Path>>(path: P, key: &ChaoticKey) -> Result<()> {
    std::fs::write(path, format_key(key))?;
    Ok(())
}

pub fn read_key_file<P: AsRef<Path>>(path: P) -> Result<ChaoticKey> {
    let text = std::fs::read_to_string(path)?;
    parse_key(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Independent hand iteration of the map definition, used as the oracle
    /// for the frozen sequence values below.
    fn oracle_orbit(mu: f64, z0: f64, n: usize) -> Vec<f64> {
        let mut z = z0;
        let mut out = Vec::new();
        for _ in 0..n {
            z = if z < mu { z / mu } else { (1.0 - z) / (1.0 - mu) };
            out.push(z);
        }
        out
    }

    #[test]
    fn tent_step_piecewise_values() {
        assert_abs_diff_eq!(tent_step(0.25, 0.5).unwrap(), 0.5);
        assert_abs_diff_eq!(tent_step(0.75, 0.5).unwrap(), 0.5);
        assert_abs_diff_eq!(tent_step(0.3, 0.6).unwrap(), 0.5);
    }

    #[test]
    fn tent_step_rejects_out_of_domain() {
        assert!(tent_step(0.0, 0.5).is_err());
        assert!(tent_step(1.0, 0.5).is_err());
        assert!(tent_step(0.5, 0.0).is_err());
        assert!(tent_step(0.5, 1.0).is_err());
        assert!(tent_step(f64::NAN, 0.5).is_err());
        assert!(tent_step(0.5, f64::NAN).is_err());
    }

    #[test]
    fn tent_step_escapes_absorbing_points() {
        // z == mu maps to exactly 1 under the raw formula; the guard reroutes
        // the orbit before it can collapse to the fixed point 0.
        assert_eq!(tent_step(0.5, 0.5).unwrap(), ESCAPE_VALUE);
        // A result merely equal to mu is untouched...
        assert_eq!(tent_step(0.25, 0.5).unwrap(), 0.5);
        // ...and two more steps later the orbit is back in the interior.
        let key = ChaoticKey::new(0.5, 0.25).unwrap();
        let seq = iterate(&key, 0, 3);
        assert_eq!(seq.values(), &[0.5, ESCAPE_VALUE, ESCAPE_VALUE / 0.5]);
    }

    #[test]
    fn iterate_matches_hand_iteration() {
        // mu = 0.4, z0 = 0.3: 0.3/0.4, then twice (1 - z)/0.6.
        let key = ChaoticKey::new(0.4, 0.3).unwrap();
        let seq = iterate(&key, 0, 3);
        let expect = oracle_orbit(0.4, 0.3, 3);
        assert_eq!(seq.values(), expect.as_slice());
        assert_abs_diff_eq!(seq.values()[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(seq.values()[1], 0.416_666_666_666_666_7, epsilon = 1e-12);
        assert_abs_diff_eq!(seq.values()[2], 0.972_222_222_222_222_2, epsilon = 1e-12);
    }

    #[test]
    fn iterate_single_step_is_tent_step() {
        let key = ChaoticKey::new(0.7, 0.21).unwrap();
        let seq = iterate(&key, 0, 1);
        assert_eq!(seq.values()[0], tent_step(0.21, 0.7).unwrap());
    }

    #[test]
    fn iterate_stays_in_open_interval() {
        let key = ChaoticKey::new(0.63, 0.33).unwrap();
        let seq = iterate(&key, 1000, 100_000);
        assert!(seq.values().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn iterate_is_deterministic() {
        let key = ChaoticKey::new(0.28, 0.73).unwrap();
        let a = iterate(&key, 137, 4096);
        let b = iterate(&key, 137, 4096);
        assert_eq!(a, b);
    }

    #[test]
    fn sample_stride_one_equals_iterate() {
        let key = ChaoticKey::new(0.4, 0.3).unwrap();
        let direct = iterate(&key, 5, 20);
        let sampled = sample(&key, 1, 5, 20).unwrap();
        assert_eq!(sampled.values(), direct.values());
    }

    #[test]
    fn sample_takes_every_distance_th_iterate() {
        let key = ChaoticKey::new(0.4, 0.3).unwrap();
        let sampled = sample(&key, 2, 0, 2).unwrap();
        let orbit = oracle_orbit(0.4, 0.3, 3);
        assert_eq!(sampled.values(), &[orbit[0], orbit[2]]);
        assert_abs_diff_eq!(sampled.values()[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(sampled.values()[1], 0.972_222_222_222_222_2, epsilon = 1e-12);
    }

    #[test]
    fn sample_count_one() {
        let key = ChaoticKey::new(0.55, 0.2).unwrap();
        let sampled = sample(&key, 7, 3, 1).unwrap();
        let direct = iterate(&key, 3, 1);
        assert_eq!(sampled.values(), direct.values());
    }

    #[test]
    fn sample_rejects_zero_distance() {
        let key = ChaoticKey::new(0.55, 0.2).unwrap();
        assert!(sample(&key, 0, 0, 4).is_err());
    }

    #[test]
    fn key_constructor_enforces_constraints() {
        assert!(ChaoticKey::new(0.5, 0.5).is_err());
        assert!(ChaoticKey::new(0.0, 0.5).is_err());
        assert!(ChaoticKey::new(0.5, 1.0).is_err());
        assert!(ChaoticKey::new(1.0, 0.5).is_err());
        assert!(ChaoticKey::new(0.63, 0.33).is_ok());
    }

    #[test]
    fn key_file_round_trip() {
        let key = ChaoticKey::new(0.631_233_456_789_012_3, 0.337_654_321_098_765_4).unwrap();
        let text = format_key(&key);
        let back = parse_key(&text).unwrap();
        assert_eq!(back.mu().to_bits(), key.mu().to_bits());
        assert_eq!(back.z0().to_bits(), key.z0().to_bits());
    }

    #[test]
    fn key_file_rejects_garbage() {
        assert!(parse_key("mu=0.5\n").is_err());
        assert!(parse_key("mu=0.5\nz0=banana\n").is_err());
        assert!(parse_key("mu=0.5\nzeta=0.1\n").is_err());
    }
}
