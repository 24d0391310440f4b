//! Chaotic measurement matrices, column-wise sampling, RIP diagnostics, and
//! the ciphertext wire format.
//!
//! The matrix is never stored or transmitted: both ends regenerate it from
//! the secret key, the sampling distance `d`, and the burn-in. A ciphertext
//! file therefore carries only the measurements and public dimensions.

use crate::chaos::{self, ChaoticKey};
use crate::error::{Error, Result};
use crate::Signal2D;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Default sampling distance for measurement-matrix extraction.
pub const DEFAULT_SAMPLING_DISTANCE: usize = 15;

/// Magic bytes opening every ciphertext file.
pub const CIPHERTEXT_MAGIC: [u8; 4] = *b"SCS1";

/// Current ciphertext format version.
pub const CIPHERTEXT_FORMAT_VERSION: u32 = 1;

/// Hard cap for exhaustive RIP-constant enumeration.
const RIP_MAX_SIGNAL_LEN: usize = 20;

/// A K x M sensing matrix with entries drawn from a strided tent-map orbit.
///
/// Raw entries are `-2z + 1` for orbit values `z` in (0,1), then everything
/// is scaled by `sqrt(2/K)`, so `|entry| < sqrt(2/K)` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    entries: Signal2D,
    d: usize,
    key_fingerprint: [u8; 32],
}

impl MeasurementMatrix {
    pub fn entries(&self) -> &Signal2D {
        &self.entries
    }

    /// Measurements per column (K).
    pub fn measurement_count(&self) -> usize {
        self.entries.nrows()
    }

    /// Signal column length (M).
    pub fn signal_len(&self) -> usize {
        self.entries.ncols()
    }

    pub fn sampling_distance(&self) -> usize {
        self.d
    }

    /// Digest binding the matrix to its generating key and parameters.
    pub fn key_fingerprint(&self) -> &[u8; 32] {
        &self.key_fingerprint
    }
}

/// Measurements of a permuted signal: a K x N matrix plus the metadata a
/// receiver needs to rebuild the sensing matrix shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    measurements: Signal2D,
    signal_len: usize,
    d: usize,
    format_version: u32,
}

impl Ciphertext {
    pub fn new(measurements: Signal2D, signal_len: usize, d: usize) -> Self {
        Self {
            measurements,
            signal_len,
            d,
            format_version: CIPHERTEXT_FORMAT_VERSION,
        }
    }

    pub fn measurements(&self) -> &Signal2D {
        &self.measurements
    }

    /// Measurements per column (K).
    pub fn measurement_count(&self) -> usize {
        self.measurements.nrows()
    }

    /// Original signal column length (M).
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// Number of signal columns (N).
    pub fn column_count(&self) -> usize {
        self.measurements.ncols()
    }

    pub fn sampling_distance(&self) -> usize {
        self.d
    }

    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    /// Serializes as: magic `SCS1`, u32-LE K, M, N, d, format_version, then
    /// K*N doubles (IEEE-754 LE) in column-major order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (k, n) = self.measurements.shape();
        let mut out = Vec::with_capacity(24 + 8 * k * n);
        out.extend_from_slice(&CIPHERTEXT_MAGIC);
        for v in [
            k as u32,
            self.signal_len as u32,
            n as u32,
            self.d as u32,
            self.format_version,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &v in self.measurements.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |detail: String| Error::Format {
            what: "ciphertext",
            detail,
        };
        if bytes.len() < 24 {
            return Err(err("shorter than the 24-byte header".into()));
        }
        if bytes[..4] != CIPHERTEXT_MAGIC {
            return Err(err("bad magic bytes".into()));
        }
        let mut fields = [0u32; 5];
        for (i, field) in fields.iter_mut().enumerate() {
            let at = 4 + 4 * i;
            *field = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        }
        let [k, m, n, d, version] = fields.map(|v| v as usize);
        if version as u32 != CIPHERTEXT_FORMAT_VERSION {
            return Err(err(format!("unsupported format version {version}")));
        }
        if k == 0 || m == 0 || n == 0 || d == 0 {
            return Err(err("zero dimension in header".into()));
        }
        let expected = 24 + 8 * k * n;
        if bytes.len() != expected {
            return Err(err(format!(
                "expected {expected} bytes for a {k}x{n} payload, got {}",
                bytes.len()
            )));
        }
        let mut values = Vec::with_capacity(k * n);
        for chunk in bytes[24..].chunks_exact(8) {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(err("non-finite measurement value".into()));
            }
            values.push(v);
        }
        Ok(Self {
            measurements: Signal2D::from_vec(k, n, values),
            signal_len: m,
            d,
            format_version: version as u32,
        })
    }

    pub fn write_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

/// Builds the K x M sensing matrix from a strided orbit of `key`.
///
/// The orbit is sampled every `d`-th iterate after `burn_in` discarded ones;
/// sample `z` maps to `-2z + 1`, the matrix fills column by column, and all
/// entries are scaled by `sqrt(2/K)`.
pub fn build_matrix(
    key: &ChaoticKey,
    k_rows: usize,
    m_cols: usize,
    d: usize,
    burn_in: usize,
) -> Result<MeasurementMatrix> {
    if k_rows == 0 || m_cols == 0 {
        return Err(Error::DimensionMismatch {
            context: "measurement matrix shape",
            expected: 1,
            found: 0,
        });
    }
    let sampled = chaos::sample(key, d, burn_in, k_rows * m_cols)?;
    let scale = (2.0 / k_rows as f64).sqrt();
    let entries = Signal2D::from_vec(
        k_rows,
        m_cols,
        sampled
            .values()
            .iter()
            .map(|z| scale * z.mul_add(-2.0, 1.0))
            .collect(),
    );
    Ok(MeasurementMatrix {
        entries,
        d,
        key_fingerprint: fingerprint(key, k_rows, m_cols, d, burn_in),
    })
}

fn fingerprint(key: &ChaoticKey, k: usize, m: usize, d: usize, burn_in: usize) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(key.mu().to_bits().to_le_bytes());
    hasher.update(key.z0().to_bits().to_le_bytes());
    for v in [k as u64, m as u64, d as u64, burn_in as u64] {
        hasher.update(v.to_le_bytes());
    }
    hasher.finalize().into()
}

/// Samples every column of an M x N signal with the same matrix:
/// `Y*[j] = Phi * X*[j]`.
pub fn pcs_sample(x_star: &Signal2D, phi: &MeasurementMatrix) -> Result<Ciphertext> {
    if phi.signal_len() != x_star.nrows() {
        return Err(Error::DimensionMismatch {
            context: "pcs_sample signal rows",
            expected: phi.signal_len(),
            found: x_star.nrows(),
        });
    }
    let measurements = &phi.entries * x_star;
    Ok(Ciphertext::new(measurements, x_star.nrows(), phi.d))
}

/// Exhaustive restricted-isometry constant of order `s`.
///
/// Enumerates every size-`s` column support, takes the extreme singular
/// values of the K x s submatrix, and returns the worst
/// `max(sigma_max^2 - 1, 1 - sigma_min^2)`. Exponential in `M`, hence the
/// hard cap `M <= 20`.
pub fn rip_constant_estimate(phi: &MeasurementMatrix, s: usize) -> Result<f64> {
    let m = phi.signal_len();
    if m > RIP_MAX_SIGNAL_LEN {
        return Err(Error::SizeLimit {
            what: "rip signal length",
            value: m,
            limit: RIP_MAX_SIGNAL_LEN,
        });
    }
    if s == 0 || s > m {
        return Err(Error::Domain {
            what: "rip order s",
            value: s as f64,
            expected: "between 1 and the signal length",
        });
    }
    let k = phi.measurement_count();
    let mut delta: f64 = 0.0;
    for_each_combination(m, s, |support| {
        let mut sub = Signal2D::zeros(k, s);
        for (j, &col) in support.iter().enumerate() {
            sub.set_column(j, &phi.entries.column(col));
        }
        let singular = sub.singular_values();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &sv in singular.iter() {
            lo = lo.min(sv);
            hi = hi.max(sv);
        }
        // A rank-deficient support has sigma_min = 0.
        if singular.len() < s {
            lo = 0.0;
        }
        delta = delta.max(hi * hi - 1.0).max(1.0 - lo * lo);
    });
    Ok(delta)
}

/// Lexicographic enumeration of all size-`s` subsets of `0..m`.
fn for_each_combination(m: usize, s: usize, mut f: impl FnMut(&[usize])) {
    if s == 0 || s > m {
        return;
    }
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        f(&idx);
        let mut i = s;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + m - s {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Measurement count sufficient for RIP of order `s_max`:
/// `ceil(C * s_max * ln(M / s_max))`, floored at `s_max + 1`.
pub fn required_measurements(s_max: usize, m: usize, c: f64) -> usize {
    assert!(
        s_max >= 1 && s_max <= m,
        "required_measurements needs 1 <= s_max <= M, got s_max={s_max}, M={m}"
    );
    let bound = (c * s_max as f64 * (m as f64 / s_max as f64).ln()).ceil();
    (bound as usize).max(s_max + 1)
}
