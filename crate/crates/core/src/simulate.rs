//! Euler–Maruyama paths with reproducible, splittable randomness.
//!
//! Generator: ChaCha8 keyed by a 64-bit seed expanded with SplitMix64, with
//! the ChaCha stream id used for splitting. Stream [`PATH_STREAM`] drives the
//! path increments and stream [`START_STREAM`] draws warm-start initial
//! values. Standard normals are produced by inverse CDF from 53-bit uniforms
//! on the open unit interval.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::DiffusionModel;
use crate::scalar::Scalar;
use crate::stationary::StationaryEngine;

pub const PATH_STREAM: u64 = 0;
pub const START_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid simulation arguments: {0}")]
    InvalidArguments(String),
    #[error("explosion under discretization: state became non-finite at step {step} (last finite value {last_value})")]
    NonFiniteState { step: usize, last_value: f64 },
    #[error("path csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One SplitMix64 output step.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index` under `master`; independent of how
/// replications are scheduled.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut s = master ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut s);
    splitmix64(&mut s)
}

/// ChaCha8 generator for `(seed, stream)`.
pub fn generator(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Uniform on the open interval `(0, 1)`.
#[inline]
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal by inverse CDF.
#[inline]
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u = open_uniform(rng);
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * u)
}

/// The normals `Z_0, Z_1, ...` a path simulated with `seed` consumes.
pub fn path_normals(seed: u64) -> impl Iterator<Item = f64> {
    let mut rng = generator(seed, PATH_STREAM);
    std::iter::repeat_with(move || standard_normal(&mut rng))
}

/// Discretized trajectory `X_{t0 + i·dt}`, `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path<T = f64> {
    pub t0: T,
    pub dt: T,
    pub values: Vec<T>,
    pub seed: u64,
    pub model_tag: String,
}

impl<T: Scalar> Path<T> {
    pub fn n_steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// `T = n·dt`.
    pub fn horizon(&self) -> T {
        T::from_usize_lossy(self.n_steps()) * self.dt
    }

    pub fn time(&self, i: usize) -> T {
        self.t0 + T::from_usize_lossy(i) * self.dt
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x")?;
        let mut line = String::new();
        for (i, &x) in self.values.iter().enumerate() {
            line.clear();
            let _ = write!(
                line,
                "{},{}",
                format_g17(self.time(i).to_f64_lossy()),
                format_g17(x.to_f64_lossy())
            );
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// Reads a `t,x` CSV. Times must be uniformly spaced.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, SimulationError> {
        let mut times: Vec<f64> = Vec::new();
        let mut values = Vec::new();
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, header)) => {
                let header = header?;
                let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
                if cols != ["t", "x"] {
                    return Err(SimulationError::Csv {
                        line: 1,
                        message: format!("expected header 't,x', found '{}'", header.trim()),
                    });
                }
            }
            None => {
                return Err(SimulationError::Csv {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        }
        for (idx, line) in lines {
            let line = line?;
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (Some(t), Some(x), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(SimulationError::Csv {
                    line: line_no,
                    message: "expected two columns".into(),
                });
            };
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| SimulationError::Csv {
                        line: line_no,
                        message: format!("not a finite number: '{}'", s.trim()),
                    })
            };
            times.push(parse(t)?);
            values.push(T::lit(parse(x)?));
        }
        if values.len() < 2 {
            return Err(SimulationError::Csv {
                line: values.len() + 1,
                message: "a path needs at least two observations".into(),
            });
        }
        let t0 = times[0];
        let n = times.len() - 1;
        let dt = (times[n] - t0) / n as f64;
        if !(dt > 0.0) {
            return Err(SimulationError::Csv {
                line: 2,
                message: "times must be strictly increasing".into(),
            });
        }
        for (i, &t) in times.iter().enumerate() {
            let expected = t0 + i as f64 * dt;
            if (t - expected).abs() > 1e-6 * dt {
                return Err(SimulationError::Csv {
                    line: i + 2,
                    message: format!("non-uniform time step at t = {t}"),
                });
            }
        }
        Ok(Self {
            t0: T::lit(t0),
            dt: T::lit(dt),
            values,
            seed: 0,
            model_tag: "csv".into(),
        })
    }
}

/// C `printf("%.17g")` formatting.
pub fn format_g17(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    const P: i32 = 17;
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let fixed = format!("{:.*}", (P - 1 - exp) as usize, v);
        strip_zeros(&fixed).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Incremental Euler–Maruyama integrator. Calling [`advance`](Self::advance)
/// repeatedly continues the same random stream, so a path built in pieces is
/// identical to one built in a single call.
pub struct EulerMaruyama<'m, T: Scalar = f64> {
    model: &'m DiffusionModel<T>,
    dt: T,
    sqrt_dt: T,
    state: T,
    step: usize,
    rng: ChaCha8Rng,
}

impl<'m, T: Scalar> EulerMaruyama<'m, T> {
    pub fn new(
        model: &'m DiffusionModel<T>,
        dt: T,
        x0: T,
        seed: u64,
    ) -> Result<Self, SimulationError> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(SimulationError::InvalidArguments(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if !x0.is_finite() {
            return Err(SimulationError::InvalidArguments(format!(
                "x0 must be finite, got {x0}"
            )));
        }
        Ok(Self {
            model,
            dt,
            sqrt_dt: dt.sqrt(),
            state: x0,
            step: 0,
            rng: generator(seed, PATH_STREAM),
        })
    }

    pub fn state(&self) -> T {
        self.state
    }

    /// Appends `n` further states to `out`.
    pub fn advance(&mut self, n: usize, out: &mut Vec<T>) -> Result<(), SimulationError> {
        out.reserve(n);
        for _ in 0..n {
            let x = self.state;
            let z = T::lit(standard_normal(&mut self.rng));
            let next =
                x + self.model.drift_at(x) * self.dt + self.model.sigma_at(x) * self.sqrt_dt * z;
            if !next.is_finite() {
                return Err(SimulationError::NonFiniteState {
                    step: self.step,
                    last_value: x.to_f64_lossy(),
                });
            }
            self.state = next;
            self.step += 1;
            out.push(next);
        }
        Ok(())
    }
}

fn step_count<T: Scalar>(horizon: T, dt: T) -> Result<usize, SimulationError> {
    if !(horizon > T::zero()) || !(dt > T::zero()) || dt > horizon {
        return Err(SimulationError::InvalidArguments(format!(
            "need T > 0 and 0 < dt <= T (T = {horizon}, dt = {dt})"
        )));
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if (ratio - n).abs() > T::lit(1e-6) * n {
        return Err(SimulationError::InvalidArguments(format!(
            "T = {horizon} is not a whole number of steps dt = {dt}"
        )));
    }
    n.to_usize()
        .ok_or_else(|| SimulationError::InvalidArguments(format!("too many steps: {n}")))
}

/// Euler–Maruyama path on `[0, T]` started at `x0`.
pub fn simulate_path<T: Scalar>(
    model: &DiffusionModel<T>,
    horizon: T,
    dt: T,
    x0: T,
    seed: u64,
) -> Result<Path<T>, SimulationError> {
    let n = step_count(horizon, dt)?;
    let mut values = Vec::with_capacity(n + 1);
    values.push(x0);
    EulerMaruyama::new(model, dt, x0, seed)?.advance(n, &mut values)?;
    Ok(Path {
        t0: T::zero(),
        dt,
        values,
        seed,
        model_tag: format!("S={};sigma={}", model.drift(), model.diffusion()),
    })
}

/// One draw from the invariant density by inverse CDF on the engine grid.
pub fn sample_stationary_start<T: Scalar>(engine: &StationaryEngine<T>, seed: u64) -> T {
    let mut rng = generator(seed, START_STREAM);
    engine.stationary_quantile(T::lit(open_uniform(&mut rng)))
}

/// Path with a warm start: `X_0` drawn from the invariant density of the
/// engine's model, then simulated under that model.
pub fn simulate_stationary_path<T: Scalar>(
    engine: &StationaryEngine<T>,
    horizon: T,
    dt: T,
    seed: u64,
) -> Result<Path<T>, SimulationError> {
    let x0 = sample_stationary_start(engine, seed);
    simulate_path(engine.model(), horizon, dt, x0, seed)
}
