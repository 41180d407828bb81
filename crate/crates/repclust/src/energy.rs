//! Energy sampling through Linux RAPL counters, with the wraparound
//! correction that makes start/end bracketing usable.
//!
//! RAPL exposes monotonically increasing microjoule counters that wrap to
//! zero at a per-domain maximum, so `end - start` goes negative whenever a
//! wrap lands inside the measured window. [`corrected_delta`] recovers the
//! true consumption for a single wrap; multiple wraps inside one window
//! are indistinguishable from fewer joules and stay uncorrectable — keep
//! windows short. Readings come from a [`PowercapBackend`] on real
//! hardware or a [`MockBackend`] replaying scripted values, so the
//! correction logic is testable anywhere.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// RAPL measurement domains this harness samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Whole-package counter (`package-N` zones).
    Package,
    /// Memory controller counter (`dram` subzones).
    Dram,
}

/// One counter read: the current energy value and the wrap point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterReading {
    /// Which domain the counter belongs to.
    pub domain: Domain,
    /// CPU socket the domain lives on.
    pub socket: u32,
    /// Counter value in microjoules.
    pub energy_uj: u64,
    /// Value at which the counter wraps to zero.
    pub max_range_uj: u64,
}

/// A bracketed measurement on one domain: raw start/end reads plus the
/// wrap-corrected consumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergySample {
    /// Which domain was measured.
    pub domain: Domain,
    /// CPU socket the domain lives on.
    pub socket: u32,
    /// Counter value before the workload.
    pub start_uj: u64,
    /// Counter value after the workload.
    pub end_uj: u64,
    /// Wrap point of this counter.
    pub max_range_uj: u64,
    /// `corrected_delta(start_uj, end_uj, max_range_uj)`.
    pub corrected_uj: u64,
}

/// Errors from backends and measurement pairing.
#[derive(Debug, thiserror::Error)]
pub enum EnergyError {
    /// No usable RAPL zones; carries the reason (missing tree, no
    /// readable zones, ...). Callers degrade to "energy unavailable".
    #[error("energy counters unavailable: {reason}")]
    Unavailable {
        /// Why discovery or reading failed.
        reason: String,
    },
    /// A powercap file could not be read.
    #[error("reading {path}: {source}")]
    Io {
        /// The offending file.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },
    /// A powercap file held something other than an integer.
    #[error("{path} does not contain a counter value: {content:?}")]
    Parse {
        /// The offending file.
        path: PathBuf,
        /// What it held.
        content: String,
    },
    /// Start and end reads covered different (domain, socket) sets.
    #[error("start and end reads cover different counter sets")]
    MismatchedReadings,
    /// A [`MockBackend`] ran out of scripted reads.
    #[error("mock backend has no reads left")]
    MockExhausted,
}

/// Energy consumed between two counter reads, assuming at most one wrap.
///
/// `end - start` when the counter did not wrap; otherwise the consumption
/// is what ran to the wrap point (`max_range - start`) plus the part after
/// (`end`). Exact in integer arithmetic either way.
pub fn corrected_delta(start_uj: u64, end_uj: u64, max_range_uj: u64) -> u64 {
    if end_uj >= start_uj {
        end_uj - start_uj
    } else {
        end_uj + (max_range_uj - start_uj)
    }
}

/// Source of counter readings.
pub trait EnergyBackend {
    /// Read every available counter once, in a stable order.
    fn read_counters(&mut self) -> Result<Vec<CounterReading>, EnergyError>;
}

/// Reads the Linux powercap filesystem (`/sys/class/powercap`).
///
/// Discovery scans the flat zone listing for `intel-rapl:*` entries whose
/// `name` file says `package-N` or `dram`, remembers each zone's
/// `max_energy_range_uj`, and sorts zones by (socket, domain) so repeated
/// reads line up. Other zones (`core`, `uncore`, `psys`) are skipped.
#[derive(Debug)]
pub struct PowercapBackend {
    zones: Vec<Zone>,
}

#[derive(Debug)]
struct Zone {
    domain: Domain,
    socket: u32,
    energy_path: PathBuf,
    max_range_uj: u64,
}

impl PowercapBackend {
    /// Discover zones under the standard powercap root.
    pub fn discover() -> Result<Self, EnergyError> {
        Self::discover_at(Path::new("/sys/class/powercap"))
    }

    /// Discover zones under an alternate root (used by tests to point at
    /// a synthetic tree).
    pub fn discover_at(root: &Path) -> Result<Self, EnergyError> {
        let entries = fs::read_dir(root).map_err(|e| EnergyError::Unavailable {
            reason: format!("{}: {e}", root.display()),
        })?;

        let mut zones = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| EnergyError::Unavailable {
                reason: format!("{}: {e}", root.display()),
            })?;
            let dir_name = entry.file_name();
            let Some(dir_name) = dir_name.to_str() else { continue };
            if !dir_name.starts_with("intel-rapl:") {
                continue;
            }
            let zone_path = entry.path();
            let Ok(name) = fs::read_to_string(zone_path.join("name")) else { continue };
            let name = name.trim();

            let domain = if name.starts_with("package-") {
                Domain::Package
            } else if name == "dram" {
                Domain::Dram
            } else {
                continue;
            };
            // Socket number: for packages it is in the name (`package-0`);
            // dram subzones inherit it from the directory (`intel-rapl:0:1`).
            let socket = match domain {
                Domain::Package => name.trim_start_matches("package-").parse().ok(),
                Domain::Dram => dir_name
                    .trim_start_matches("intel-rapl:")
                    .split(':')
                    .next()
                    .and_then(|s| s.parse().ok()),
            };
            let Some(socket) = socket else { continue };

            let max_range_uj = read_counter_file(&zone_path.join("max_energy_range_uj"))?;
            zones.push(Zone {
                domain,
                socket,
                energy_path: zone_path.join("energy_uj"),
                max_range_uj,
            });
        }

        if zones.is_empty() {
            return Err(EnergyError::Unavailable {
                reason: format!("no package/dram zones under {}", root.display()),
            });
        }
        zones.sort_by_key(|z| (z.socket, z.domain));
        Ok(PowercapBackend { zones })
    }
}

impl EnergyBackend for PowercapBackend {
    fn read_counters(&mut self) -> Result<Vec<CounterReading>, EnergyError> {
        self.zones
            .iter()
            .map(|zone| {
                Ok(CounterReading {
                    domain: zone.domain,
                    socket: zone.socket,
                    energy_uj: read_counter_file(&zone.energy_path)?,
                    max_range_uj: zone.max_range_uj,
                })
            })
            .collect()
    }
}

fn read_counter_file(path: &Path) -> Result<u64, EnergyError> {
    let content = fs::read_to_string(path)
        .map_err(|source| EnergyError::Io { path: path.to_path_buf(), source })?;
    content.trim().parse().map_err(|_| EnergyError::Parse {
        path: path.to_path_buf(),
        content: content.trim().to_string(),
    })
}

/// Replays scripted reads; each call to `read_counters` consumes one
/// entry. Lets tests exercise wraparound and pairing without hardware.
pub struct MockBackend {
    reads: VecDeque<Vec<CounterReading>>,
}

impl MockBackend {
    /// Backend that will serve the given reads in order.
    pub fn new(reads: Vec<Vec<CounterReading>>) -> Self {
        MockBackend { reads: reads.into() }
    }
}

impl EnergyBackend for MockBackend {
    fn read_counters(&mut self) -> Result<Vec<CounterReading>, EnergyError> {
        self.reads.pop_front().ok_or(EnergyError::MockExhausted)
    }
}

/// Bracket a workload with counter reads and pair them into samples.
///
/// The workload's output is always returned; the samples come back as a
/// separate `Result` so an energy failure never loses the computation.
/// Start and end reads are matched by (domain, socket).
pub fn measure<T>(
    backend: &mut dyn EnergyBackend,
    workload: impl FnOnce() -> T,
) -> (T, Result<Vec<EnergySample>, EnergyError>) {
    let start = backend.read_counters();
    let output = workload();
    let end = backend.read_counters();

    let samples = (|| {
        let start = start?;
        let end = end?;
        if start.len() != end.len() {
            return Err(EnergyError::MismatchedReadings);
        }
        start
            .iter()
            .zip(&end)
            .map(|(s, e)| {
                if (s.domain, s.socket) != (e.domain, e.socket) {
                    return Err(EnergyError::MismatchedReadings);
                }
                Ok(EnergySample {
                    domain: s.domain,
                    socket: s.socket,
                    start_uj: s.energy_uj,
                    end_uj: e.energy_uj,
                    max_range_uj: s.max_range_uj,
                    corrected_uj: corrected_delta(s.energy_uj, e.energy_uj, s.max_range_uj),
                })
            })
            .collect()
    })();
    (output, samples)
}
