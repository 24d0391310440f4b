//! `scs` — keyed compressive-sensing codec and analysis harness.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error,
//! 3 decode finished without full convergence (output still written).
//! Every failure also prints one line `scs: error[<kind>]: <message>`
//! on stderr.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use scs_core::error::Error;
use scs_core::harness::{self, AttackSpec};
use scs_core::imaging::{self, Image};
use scs_core::pipeline::{self, EncodeProfile, KeyBundle};
use scs_core::recover::SolverConfig;
use scs_core::sense::Ciphertext;
use scs_core::Signal2D;
use std::path::{Path, PathBuf};

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_DATA: i32 = 2;
const EXIT_NONCONVERGED: i32 = 3;

#[derive(Parser)]
#[command(
    name = "scs",
    version,
    about = "Chaos-keyed secure parallel compressive sensing",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive a key file from 32 bytes of seed entropy.
    Keygen {
        /// 64 hex characters of entropy.
        #[arg(long, value_name = "HEX64")]
        seed_hex: String,
        /// Output key file (four lines: mu, z0, mu_prime, z0_prime).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Compress and encrypt a PGM image into a ciphertext file.
    Encode {
        #[arg(long = "in", value_name = "PGM")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        key: PathBuf,
        /// Compression ratio in (0, 1]: measurements per column = ceil(cr * M).
        #[arg(long)]
        cr: f64,
        /// Best s-term budget; defaults to 1/16 of the pixel count.
        #[arg(long)]
        s: Option<usize>,
        #[command(flatten)]
        chaos: ChaosArgs,
        /// Skip the permutation layer (baseline mode).
        #[arg(long)]
        no_permute: bool,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Decrypt a ciphertext file back into a PGM image.
    Decode {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        key: PathBuf,
        #[arg(long, value_name = "PGM")]
        out: PathBuf,
        /// Must match the flag used at encode time.
        #[arg(long)]
        no_permute: bool,
        /// Optional reference image; PSNR against it is printed when given.
        #[arg(long = "ref", value_name = "PGM")]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = scs_core::DEFAULT_BURN_IN)]
        burn_in: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Apply a channel attack to a ciphertext file.
    Attack {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, value_enum)]
        attack: AttackName,
        /// Noise variance for awgn.
        #[arg(long, default_value_t = 1.0)]
        variance: f64,
        /// Zeroed fraction for crop.
        #[arg(long, default_value_t = 0.125)]
        fraction: f64,
        /// Seed for the attack noise generator.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// PSNR-versus-CR sweep, with and without the permutation layer.
    Sweep {
        #[arg(long, value_name = "FILE")]
        key: PathBuf,
        /// Input image; the built-in 128x128 test image when omitted.
        #[arg(long = "in", value_name = "PGM")]
        input: Option<PathBuf>,
        /// Comma-separated compression ratios.
        #[arg(long, value_delimiter = ',', required = true)]
        crs: Vec<f64>,
        #[arg(long)]
        s: Option<usize>,
        #[arg(long, value_enum)]
        attack: Option<AttackName>,
        #[arg(long, default_value_t = 1.0)]
        variance: f64,
        #[arg(long, default_value_t = 0.125)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        chaos: ChaosArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Decode with each key component perturbed in turn.
    Sensitivity {
        #[arg(long, value_name = "FILE")]
        key: PathBuf,
        #[arg(long = "in", value_name = "PGM")]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        cr: f64,
        #[arg(long, default_value_t = 1e-16)]
        perturbation: f64,
        #[arg(long)]
        s: Option<usize>,
        #[command(flatten)]
        chaos: ChaosArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Ciphertext statistics across plaintext power levels.
    Secrecy {
        #[arg(long, value_name = "FILE")]
        key: PathBuf,
        #[arg(long, default_value_t = 128)]
        m: usize,
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = 0.75)]
        cr: f64,
        /// Number of power levels of the base plaintext.
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        chaos: ChaosArgs,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Monte-Carlo acceptable-permutation probability.
    Acceptability {
        #[arg(long, default_value_t = 32)]
        m: usize,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        s: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "CSV")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ChaosArgs {
    /// Sampling distance for the measurement-matrix orbit.
    #[arg(long, default_value_t = scs_core::DEFAULT_SAMPLING_DISTANCE)]
    d: usize,
    /// Discarded transient length.
    #[arg(long, default_value_t = scs_core::DEFAULT_BURN_IN)]
    burn_in: usize,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative objective-change tolerance per continuation stage.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Iteration cap per continuation stage.
    #[arg(long, default_value_t = 1200)]
    max_iters: usize,
    /// Per-column decode parallelism; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            convergence_tol: self.tol,
            max_iterations: self.max_iters,
            ..SolverConfig::equality()
        }
    }

    /// Runs `f` inside a rayon pool of the requested width.
    fn install<T>(&self, f: impl FnOnce() -> T + Send) -> T
    where
        T: Send,
    {
        match self.threads {
            None => f(),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool")
                .install(f),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackName {
    Awgn,
    Crop,
}

impl AttackName {
    fn spec(self, variance: f64, fraction: f64) -> AttackSpec {
        match self {
            AttackName::Awgn => AttackSpec::awgn(variance),
            AttackName::Crop => AttackSpec::crop(fraction),
        }
    }
}

fn main() {
    std::process::exit(run(std::env::args_os()));
}

fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                let _ = err.print();
                return EXIT_OK;
            }
            eprintln!("scs: error[usage]: {}", first_line(&err.to_string()));
            let _ = err.print();
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("scs: error[{}]: {}", error_kind(&err), first_line(&err.to_string()));
            EXIT_DATA
        }
    }
}

fn first_line(text: &str) -> String {
    text.lines().next().unwrap_or("unknown error").to_string()
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Domain { .. } => "domain",
        Error::DimensionMismatch { .. } => "dimension",
        Error::SizeLimit { .. } => "size-limit",
        Error::InvalidKey(_) => "invalid-key",
        Error::Format { .. } => "format",
        Error::Io(_) => "io",
    }
}

fn default_budget(image: &Image) -> usize {
    (image.height() * image.width() / 16).max(1)
}

fn load_image(path: Option<&Path>) -> Result<Image, Error> {
    match path {
        Some(p) => imaging::read_pgm(p),
        None => Ok(harness::test_image()),
    }
}

fn parse_seed_hex(hex: &str) -> Result<[u8; 32], Error> {
    let hex = hex.trim();
    if hex.len() != 64 {
        return Err(Error::Format {
            what: "seed entropy",
            detail: format!("expected 64 hex characters, got {}", hex.len()),
        });
    }
    let mut bytes = [0u8; 32];
    for (i, chunk) in hex.as_bytes().chunks_exact(2).enumerate() {
        let pair = std::str::from_utf8(chunk).unwrap();
        bytes[i] = u8::from_str_radix(pair, 16).map_err(|_| Error::Format {
            what: "seed entropy",
            detail: format!("`{pair}` is not a hex byte"),
        })?;
    }
    Ok(bytes)
}

fn dispatch(command: Command) -> Result<i32, Error> {
    match command {
        Command::Keygen { seed_hex, out } => {
            let seed = parse_seed_hex(&seed_hex)?;
            let bundle = pipeline::keygen(&seed);
            bundle.write_file(&out)?;
            println!("wrote key file {}", out.display());
            Ok(EXIT_OK)
        }

        Command::Encode {
            input,
            key,
            cr,
            s,
            chaos,
            no_permute,
            out,
        } => {
            let image = imaging::read_pgm(&input)?;
            let keys = KeyBundle::read_file(&key, chaos.d, chaos.burn_in)?;
            let s = s.unwrap_or_else(|| default_budget(&image));
            let profile = EncodeProfile::new(cr, s, true)?;
            let ct =
                pipeline::encode_with_options(&image.to_signal(), &keys, &profile, !no_permute)?;
            ct.write_file(&out)?;
            println!(
                "encoded {}x{} image at cr={} (K={}, s={}) -> {}",
                image.height(),
                image.width(),
                cr,
                ct.measurement_count(),
                s,
                out.display()
            );
            Ok(EXIT_OK)
        }

        Command::Decode {
            input,
            key,
            out,
            no_permute,
            reference,
            burn_in,
            solver,
        } => {
            let ct = Ciphertext::read_file(&input)?;
            let keys = KeyBundle::read_file(&key, ct.sampling_distance(), burn_in)?;
            let cr = (ct.measurement_count() as f64 / ct.signal_len() as f64).min(1.0);
            let profile = EncodeProfile::new(cr, 0, true)?;
            let cfg = solver.config();
            let output = solver.install(|| {
                pipeline::decode_with_options(&ct, &keys, &profile, &cfg, !no_permute)
            })?;
            let image = output.to_image();
            imaging::write_pgm(&out, &image)?;
            let converged = output.reconstruction.converged_fraction();
            println!(
                "decoded {} columns ({}x{}), converged fraction {:.4} -> {}",
                ct.column_count(),
                ct.signal_len(),
                ct.column_count(),
                converged,
                out.display()
            );
            if let Some(ref_path) = reference {
                let reference = imaging::read_pgm(&ref_path)?;
                let psnr = imaging::psnr(&reference, &image)?;
                println!("psnr={psnr:.4}");
            }
            if output.all_converged() {
                Ok(EXIT_OK)
            } else {
                eprintln!(
                    "scs: error[non-convergence]: {} of {} columns did not converge; output written anyway",
                    output
                        .reconstruction
                        .columns
                        .iter()
                        .filter(|c| !c.converged)
                        .count(),
                    ct.column_count()
                );
                Ok(EXIT_NONCONVERGED)
            }
        }

        Command::Attack {
            input,
            out,
            attack,
            variance,
            fraction,
            seed,
        } => {
            let ct = Ciphertext::read_file(&input)?;
            let attacked = match attack {
                AttackName::Awgn => harness::awgn_attack(&ct, variance, seed),
                AttackName::Crop => harness::crop_attack(&ct, fraction),
            };
            attacked.write_file(&out)?;
            println!("wrote attacked ciphertext {}", out.display());
            Ok(EXIT_OK)
        }

        Command::Sweep {
            key,
            input,
            crs,
            s,
            attack,
            variance,
            fraction,
            seed,
            chaos,
            solver,
            out,
        } => {
            let image = load_image(input.as_deref())?;
            let keys = KeyBundle::read_file(&key, chaos.d, chaos.burn_in)?;
            let s = s.unwrap_or_else(|| default_budget(&image));
            let spec = attack.map(|a| a.spec(variance, fraction));
            let cfg = solver.config();
            let report = solver.install(|| {
                harness::paired_cr_sweep(&image, &keys, &crs, spec.as_ref(), s, seed, &cfg)
            })?;
            report.write_csv(&out)?;
            for (label, values) in report.rows() {
                if label.starts_with("E-minus-N") {
                    println!("cr={:.3} {label} gap={:.3} dB", values[0], values[1]);
                }
            }
            println!("wrote {}", out.display());
            Ok(EXIT_OK)
        }

        Command::Sensitivity {
            key,
            input,
            cr,
            perturbation,
            s,
            chaos,
            solver,
            out,
        } => {
            let image = load_image(input.as_deref())?;
            let keys = KeyBundle::read_file(&key, chaos.d, chaos.burn_in)?;
            let s = s.unwrap_or_else(|| default_budget(&image));
            let cfg = solver.config();
            let report = solver.install(|| {
                harness::key_sensitivity_suite(&image, &keys, perturbation, cr, s, &cfg)
            })?;
            report.write_csv(&out)?;
            for (label, values) in report.rows() {
                println!("{label}: psnr={:.3} dB", values[1]);
            }
            println!("wrote {}", out.display());
            Ok(EXIT_OK)
        }

        Command::Secrecy {
            key,
            m,
            n,
            cr,
            levels,
            seed,
            chaos,
            out,
        } => {
            if levels < 2 {
                return Err(Error::Domain {
                    what: "levels",
                    value: levels as f64,
                    expected: "at least 2",
                });
            }
            let keys = KeyBundle::read_file(&key, chaos.d, chaos.burn_in)?;
            let profile = EncodeProfile::new(cr, 0, false)?;
            let base = deterministic_signal(m, n, seed);
            let plaintexts: Vec<Signal2D> = (1..=levels)
                .map(|level| (level as f64 / levels as f64) * &base)
                .collect();
            let (report, fit) = harness::secrecy_statistics(&plaintexts, &keys, &profile)?;
            report.write_csv(&out)?;
            println!(
                "variance-vs-power fit: slope={:.6e} r_squared={:.6}",
                fit.slope, fit.r_squared
            );
            println!("wrote {}", out.display());
            Ok(EXIT_OK)
        }

        Command::Acceptability {
            m,
            n,
            s,
            trials,
            seed,
            out,
        } => {
            if trials < 1000 {
                return Err(Error::Domain {
                    what: "trials",
                    value: trials as f64,
                    expected: "at least 1000",
                });
            }
            let (empirical, formula) = harness::acceptability_montecarlo(m, n, s, trials, seed);
            println!("empirical={empirical:.6} formula={formula:.6}");
            if let Some(path) = out {
                let mut report = harness::ExperimentReport::new(vec![
                    "m", "n", "s", "trials", "empirical", "formula",
                ]);
                report.push(
                    "acceptability",
                    vec![
                        m as f64,
                        n as f64,
                        s as f64,
                        trials as f64,
                        empirical,
                        formula,
                    ],
                );
                report.write_csv(&path)?;
                println!("wrote {}", path.display());
            }
            Ok(EXIT_OK)
        }
    }
}

/// Dense pseudo-random plaintext for the secrecy experiment, fixed by `seed`.
fn deterministic_signal(m: usize, n: usize, seed: u64) -> Signal2D {
    let mut state = seed ^ 0x9E37_79B9_7F4A_7C15;
    Signal2D::from_fn(m, n, |_, _| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}
