//! Closed-form performance model of a single-broker deployment.
//!
//! Throughput is the minimum of a producer demand and four capacity caps
//! (broker, socket, request queue, wire). Latency adds a fixed base, linger,
//! batch fill time and a congestion term that grows with `demand / throughput`.
//! All constants live in a versioned [`OracleProfile`].

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lhs::lhs_sample;
use crate::rng;
use crate::space::{knobs, Configuration, ParameterSpace, KB, MB};

/// Bytes per "MB" in throughput figures.
pub const MEGABYTE: f64 = MB as f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SendMode {
    Sync,
    Async,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reliability {
    BestEffort,
    Reliable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceProfile {
    pub producer_memory_mb: f64,
    pub broker_memory_mb: f64,
    pub consumer_memory_mb: f64,
    pub disk: String,
}

impl Default for ResourceProfile {
    fn default() -> Self {
        Self {
            producer_memory_mb: 4096.0,
            broker_memory_mb: 8192.0,
            consumer_memory_mb: 4096.0,
            disk: "local".into(),
        }
    }
}

/// Workload, topology and resources of one deployment.
///
/// `send_mode`, `reliability` and `rate` are carried for bookkeeping; profile
/// v1 does not use them (producers send unthrottled with acknowledgements).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub message_size: u64,
    pub send_mode: SendMode,
    pub reliability: Reliability,
    /// Messages per second; `None` is unlimited.
    pub rate: Option<f64>,
    pub producers: u32,
    pub brokers: u32,
    pub consumers: u32,
    pub producer_cpus: f64,
    pub broker_cpus: f64,
    /// Link bandwidth in MB/s.
    pub bandwidth: f64,
    pub resources: ResourceProfile,
}

impl Scenario {
    /// The nine reference use cases. `2` is the reference deployment: one
    /// 2-CPU producer, a 4-CPU broker, 1 Gbps and 1 KB messages.
    pub fn use_case(number: u32) -> Result<Self> {
        let (producers, cpus, gbps, size_kb) = match number {
            1 => (1, 2.0, 1.0, 0.1),
            2 => (1, 2.0, 1.0, 1.0),
            3 => (1, 2.0, 1.0, 4.0),
            4 => (1, 1.0, 1.0, 1.0),
            5 => (1, 4.0, 1.0, 1.0),
            6 => (1, 2.0, 0.1, 1.0),
            7 => (1, 2.0, 0.5, 1.0),
            8 => (3, 2.0, 1.0, 1.0),
            9 => (10, 2.0, 1.0, 1.0),
            other => {
                return Err(Error::InvalidScenario(format!("no use case {other} (expected 1-9)")))
            }
        };
        Ok(Self {
            name: format!("test-{number}"),
            message_size: (size_kb * KB as f64).round() as u64,
            send_mode: SendMode::Async,
            reliability: Reliability::Reliable,
            rate: None,
            producers,
            brokers: 1,
            consumers: 1,
            producer_cpus: cpus,
            broker_cpus: 4.0,
            bandwidth: gbps_to_mbps(gbps),
            resources: ResourceProfile::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidScenario(format!("{}: {msg}", self.name)));
        if self.brokers != 1 || self.consumers != 1 {
            return fail("exactly one broker and one consumer are modelled");
        }
        if self.producers < 1 {
            return fail("at least one producer required");
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return fail("bandwidth must be positive");
        }
        if self.message_size == 0 {
            return fail("message size must be positive");
        }
        if !(self.producer_cpus > 0.0 && self.broker_cpus > 0.0) {
            return fail("cpu counts must be positive");
        }
        if matches!(self.rate, Some(r) if r.is_nan() || r <= 0.0) {
            return fail("rate must be positive when set");
        }
        Ok(())
    }
}

/// `{0.1, 0.5, 1.0}` Gbps map to `{11.9, 59.5, 119}` MB/s.
pub fn gbps_to_mbps(gbps: f64) -> f64 {
    (gbps * 119.0 * 10.0).round() / 10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecTable {
    pub none: f64,
    pub snappy: f64,
    pub gzip: f64,
    pub lz4: f64,
}

impl CodecTable {
    pub fn get(&self, codec: &str) -> Result<f64> {
        match codec {
            "none" => Ok(self.none),
            "snappy" => Ok(self.snappy),
            "gzip" => Ok(self.gzip),
            "lz4" => Ok(self.lz4),
            other => Err(Error::InvalidArgument(format!("unknown codec {other}"))),
        }
    }
}

/// Constants of the analytic model. [`OracleProfile::v1`] is the reference set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleProfile {
    pub version: String,
    /// Bytes on the wire per payload byte.
    pub wire_ratio: CodecTable,
    /// Relative producer CPU overhead of each codec.
    pub cpu_overhead: CodecTable,
    pub batch_half_fill: f64,
    pub memory_batches: f64,
    pub request_batches: f64,
    pub producer_rate_per_cpu: f64,
    pub producer_base_efficiency: f64,
    pub broker_thread_rate: f64,
    pub broker_rate_per_cpu: f64,
    pub socket_rate: f64,
    pub socket_reference_bytes: f64,
    pub socket_max_scale: f64,
    pub queue_rate_per_request: f64,
    pub wire_efficiency: f64,
    pub base_latency_ms: f64,
    pub linger_weight: f64,
    pub congestion_weight_ms: f64,
    pub congestion_cap_ms: f64,
    pub cpu_user_weight: f64,
    pub cpu_kernel_weight: f64,
    pub memory_reference_bytes: f64,
    pub request_time_fraction: f64,
}

impl Default for OracleProfile {
    fn default() -> Self {
        Self::v1()
    }
}

impl OracleProfile {
    pub fn v1() -> Self {
        Self {
            version: "v1".into(),
            wire_ratio: CodecTable {
                none: 1.00,
                snappy: 0.60,
                gzip: 0.45,
                lz4: 0.55,
            },
            cpu_overhead: CodecTable {
                none: 0.00,
                snappy: 0.15,
                gzip: 0.45,
                lz4: 0.25,
            },
            batch_half_fill: 8.0,
            memory_batches: 64.0,
            request_batches: 256.0,
            producer_rate_per_cpu: 40.0,
            producer_base_efficiency: 0.3,
            broker_thread_rate: 18.0,
            broker_rate_per_cpu: 22.0,
            socket_rate: 55.0,
            socket_reference_bytes: 100.0 * KB as f64,
            socket_max_scale: 2.0,
            queue_rate_per_request: 0.15,
            wire_efficiency: 0.9,
            base_latency_ms: 2.0,
            linger_weight: 0.5,
            congestion_weight_ms: 25.0,
            congestion_cap_ms: 500.0,
            cpu_user_weight: 0.6,
            cpu_kernel_weight: 0.3,
            memory_reference_bytes: 256.0 * MB as f64,
            request_time_fraction: 0.8,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }
}

pub const METRIC_NAMES: [&str; 7] = [
    "blkio_io_service_bytes",
    "cpu_usage_usermode",
    "cpu_usage_kernelmode",
    "memory_usage_total",
    "produce_request_per_sec",
    "produce_request_total_time",
    "produce_request_temporary_bytes",
];

pub const THROUGHPUT_COLUMN: &str = "throughput_mbps";
pub const LATENCY_COLUMN: &str = "latency_ms";

/// The seven broker/container metrics that form the agent state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMetrics {
    /// MB/s.
    pub blkio_io_service_bytes: f64,
    pub cpu_usage_usermode: f64,
    pub cpu_usage_kernelmode: f64,
    pub memory_usage_total: f64,
    pub produce_request_per_sec: f64,
    /// ms.
    pub produce_request_total_time: f64,
    /// MB/s.
    pub produce_request_temporary_bytes: f64,
}

impl StateMetrics {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.blkio_io_service_bytes,
            self.cpu_usage_usermode,
            self.cpu_usage_kernelmode,
            self.memory_usage_total,
            self.produce_request_per_sec,
            self.produce_request_total_time,
            self.produce_request_temporary_bytes,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            blkio_io_service_bytes: a[0],
            cpu_usage_usermode: a[1],
            cpu_usage_kernelmode: a[2],
            memory_usage_total: a[3],
            produce_request_per_sec: a[4],
            produce_request_total_time: a[5],
            produce_request_temporary_bytes: a[6],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub config: Configuration,
    pub state: StateMetrics,
    /// MB/s summed over producers.
    pub throughput: f64,
    /// ms.
    pub latency: f64,
}

impl Observation {
    /// The nine model targets: state metrics, throughput, latency.
    pub fn targets(&self) -> [f64; 9] {
        let s = self.state.to_array();
        [s[0], s[1], s[2], s[3], s[4], s[5], s[6], self.throughput, self.latency]
    }
}

/// Intermediate quantities of one evaluation, exposed for inspection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Breakdown {
    pub demand: f64,
    pub broker_cap: f64,
    pub socket_cap: f64,
    pub queue_cap: f64,
    pub wire_cap: f64,
    pub throughput: f64,
    pub utilization: f64,
    pub latency: f64,
}

/// Noise-free evaluation terms.
pub fn breakdown(
    config: &Configuration,
    scenario: &Scenario,
    profile: &OracleProfile,
) -> Result<Breakdown> {
    scenario.validate()?;
    let knob = |name: &str| -> Result<f64> {
        config
            .int(name)
            .map(|v| v as f64)
            .ok_or_else(|| Error::InvalidConfiguration(vec![missing(config, name)]))
    };
    let net_threads = knob(knobs::NUM_NETWORK_THREADS)?;
    let io_threads = knob(knobs::NUM_IO_THREADS)?;
    let queued = knob(knobs::QUEUED_MAX_REQUESTS)?;
    let recv_buf = knob(knobs::SOCKET_RECEIVE_BUFFER_BYTES)?;
    let send_buf = knob(knobs::SOCKET_SEND_BUFFER_BYTES)?;
    let request_max = knob(knobs::SOCKET_REQUEST_MAX_BYTES)?;
    let buffer_memory = knob(knobs::BUFFER_MEMORY)?;
    let batch = knob(knobs::BATCH_SIZE)?;
    let linger = knob(knobs::LINGER_MS)?;
    let codec = config.label(knobs::COMPRESSION_TYPE).ok_or_else(|| {
        Error::InvalidConfiguration(vec![missing(config, knobs::COMPRESSION_TYPE)])
    })?;
    if batch <= 0.0 || net_threads <= 0.0 || io_threads <= 0.0 {
        return Err(Error::InvalidConfiguration(vec![crate::space::Violation::OutOfRange(
            knobs::BATCH_SIZE.into(),
        )]));
    }
    let ratio = profile.wire_ratio.get(codec)?;
    let overhead = profile.cpu_overhead.get(codec)?;
    let p = profile;

    let batch_msgs = (batch / scenario.message_size as f64).max(1.0);
    let batch_eff = batch_msgs / (batch_msgs + p.batch_half_fill);
    let memory_eff = (buffer_memory / (p.memory_batches * batch)).min(1.0);
    let request_eff = (request_max / (p.request_batches * batch)).min(1.0);

    let producer_cap = p.producer_rate_per_cpu
        * scenario.producer_cpus
        * (p.producer_base_efficiency + (1.0 - p.producer_base_efficiency) * batch_eff)
        / (1.0 + overhead);
    let broker_cap = (p.broker_thread_rate * (io_threads * net_threads).sqrt())
        .min(p.broker_rate_per_cpu * scenario.broker_cpus)
        * (0.5 + 0.5 * request_eff);
    let socket_cap =
        p.socket_rate * p.socket_max_scale.min(recv_buf.min(send_buf) / p.socket_reference_bytes);
    let queue_cap = p.queue_rate_per_request * queued * (0.5 + 0.5 * batch_eff);
    let wire_cap = p.wire_efficiency * scenario.bandwidth / ratio;

    let producers = scenario.producers as f64;
    let demand = producers * producer_cap * memory_eff;
    let throughput = demand.min(broker_cap).min(socket_cap).min(queue_cap).min(wire_cap);
    let utilization = demand / throughput;
    let per_producer_bytes = throughput / producers * MEGABYTE;
    let latency = p.base_latency_ms
        + p.linger_weight * linger
        + 1000.0 * batch / per_producer_bytes
        + p.congestion_cap_ms.min(p.congestion_weight_ms * (utilization - 1.0));

    Ok(Breakdown {
        demand,
        broker_cap,
        socket_cap,
        queue_cap,
        wire_cap,
        throughput,
        utilization,
        latency,
    })
}

fn missing(config: &Configuration, name: &str) -> crate::space::Violation {
    if config.get(name).is_some() {
        crate::space::Violation::WrongKind(name.into())
    } else {
        crate::space::Violation::Missing(name.into())
    }
}

fn state_metrics(
    throughput: f64,
    latency: f64,
    terms: &Breakdown,
    config: &Configuration,
    profile: &OracleProfile,
) -> Result<StateMetrics> {
    let codec = config.label(knobs::COMPRESSION_TYPE).unwrap_or("none");
    let ratio = profile.wire_ratio.get(codec)?;
    let batch = config.int(knobs::BATCH_SIZE).unwrap_or(1) as f64;
    let queued = config.int(knobs::QUEUED_MAX_REQUESTS).unwrap_or(0) as f64;
    Ok(StateMetrics {
        blkio_io_service_bytes: throughput * ratio,
        cpu_usage_usermode: (profile.cpu_user_weight * throughput / terms.broker_cap).min(1.0),
        cpu_usage_kernelmode: (profile.cpu_kernel_weight * throughput * ratio / terms.wire_cap)
            .min(1.0),
        memory_usage_total: (queued * batch / profile.memory_reference_bytes).min(1.0),
        produce_request_per_sec: throughput * MEGABYTE / batch,
        produce_request_total_time: profile.request_time_fraction * latency,
        produce_request_temporary_bytes: throughput * (1.0 - ratio),
    })
}

/// Ground-truth observation of `config` under `scenario`.
///
/// With `noise_sigma > 0` throughput and latency are each scaled by
/// `1 + sigma * xi` (`xi` standard normal drawn from `seed`, factor floored
/// at a small positive value) and the dependent metrics are recomputed.
pub fn evaluate(
    config: &Configuration,
    scenario: &Scenario,
    profile: &OracleProfile,
    noise_sigma: f64,
    seed: u64,
) -> Result<Observation> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma {noise_sigma}")));
    }
    let terms = breakdown(config, scenario, profile)?;
    let (mut throughput, mut latency) = (terms.throughput, terms.latency);
    if noise_sigma > 0.0 {
        const FLOOR: f64 = 1e-3;
        let mut rng = rng::stream(seed, 0x0b5);
        let xi_tp: f64 = StandardNormal.sample(&mut rng);
        let xi_lat: f64 = StandardNormal.sample(&mut rng);
        throughput *= (1.0 + noise_sigma * xi_tp).max(FLOOR);
        latency *= (1.0 + noise_sigma * xi_lat).max(FLOOR);
    }
    let state = state_metrics(throughput, latency, &terms, config, profile)?;
    Ok(Observation {
        config: config.clone(),
        state,
        throughput,
        latency,
    })
}

/// Evaluates with the configuration checked against `space` first.
pub fn evaluate_in(
    space: &ParameterSpace,
    config: &Configuration,
    scenario: &Scenario,
    profile: &OracleProfile,
    noise_sigma: f64,
    seed: u64,
) -> Result<Observation> {
    space.check(config)?;
    evaluate(config, scenario, profile, noise_sigma, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub scenario: Scenario,
    pub seed: u64,
    pub noise_sigma: f64,
    pub profile_version: String,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub scenario: Scenario,
    pub seed: u64,
    pub noise_sigma: f64,
    pub profile_version: String,
    pub rows: Vec<Observation>,
}

/// Per-row noise seed, independent of how rows are scheduled.
pub fn row_seed(seed: u64, row: usize) -> u64 {
    rng::mix(seed, row as u64)
}

#[allow(clippy::too_many_arguments)]
pub fn generate_dataset(
    space: &ParameterSpace,
    scenario: &Scenario,
    profile: &OracleProfile,
    n: usize,
    noise_sigma: f64,
    seed: u64,
    parallelism: usize,
) -> Result<Dataset> {
    scenario.validate()?;
    let batch = lhs_sample(space, n, seed)?;
    let eval = |(i, config): (usize, &Configuration)| {
        evaluate(config, scenario, profile, noise_sigma, row_seed(seed, i))
    };
    let rows = if parallelism > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| {
            batch
                .configs
                .par_iter()
                .enumerate()
                .map(eval)
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        batch.configs.iter().enumerate().map(eval).collect::<Result<Vec<_>>>()?
    };
    Ok(Dataset {
        scenario: scenario.clone(),
        seed,
        noise_sigma,
        profile_version: profile.version.clone(),
        rows,
    })
}

impl Dataset {
    pub fn header(space: &ParameterSpace) -> Vec<String> {
        space
            .names()
            .map(str::to_string)
            .chain(METRIC_NAMES.iter().map(|s| s.to_string()))
            .chain([THROUGHPUT_COLUMN.to_string(), LATENCY_COLUMN.to_string()])
            .collect()
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            scenario: self.scenario.clone(),
            seed: self.seed,
            noise_sigma: self.noise_sigma,
            profile_version: self.profile_version.clone(),
            rows: self.rows.len(),
        }
    }

    pub fn to_csv(&self, space: &ParameterSpace) -> Result<Vec<u8>> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(Self::header(space))?;
        for row in &self.rows {
            let mut record: Vec<String> = Vec::with_capacity(19);
            for name in space.names() {
                let value = row
                    .config
                    .get(name)
                    .ok_or_else(|| Error::InvalidConfiguration(vec![missing(&row.config, name)]))?;
                record.push(value.to_string());
            }
            record.extend(row.targets().iter().map(|v| v.to_string()));
            writer.write_record(&record)?;
        }
        writer.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Sidecar path for a dataset file: `<file>.meta.json`.
    pub fn meta_path(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    }

    /// Writes the CSV and its metadata sidecar.
    pub fn save(&self, space: &ParameterSpace, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv(space)?)?;
        fs::write(
            Self::meta_path(path),
            serde_json::to_string_pretty(&self.meta())? + "\n",
        )?;
        Ok(())
    }

    pub fn load(space: &ParameterSpace, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(Self::meta_path(path))?)?;
        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != Self::header(space) {
            return Err(Error::Parse(format!(
                "{}: header does not match the parameter space",
                path.display()
            )));
        }
        let d = space.dim();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let mut config = Configuration::new();
            for (spec, field) in space.specs().iter().zip(record.iter()) {
                let value: crate::space::KnobValue = if spec.categories().is_some() {
                    field.into()
                } else {
                    field
                        .parse::<i64>()
                        .map_err(|e| Error::Parse(format!("{}: {e}", spec.name)))?
                        .into()
                };
                config.set(&spec.name, value);
            }
            space.check(&config)?;
            let nums = record
                .iter()
                .skip(d)
                .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if nums.len() != 9 {
                return Err(Error::Parse(format!("expected 9 target columns, got {}", nums.len())));
            }
            rows.push(Observation {
                config,
                state: StateMetrics::from_array(nums[..7].try_into().expect("7 metrics")),
                throughput: nums[7],
                latency: nums[8],
            });
        }
        if rows.len() != meta.rows {
            return Err(Error::Parse(format!(
                "sidecar lists {} rows, file has {}",
                meta.rows,
                rows.len()
            )));
        }
        Ok(Self {
            scenario: meta.scenario,
            seed: meta.seed,
            noise_sigma: meta.noise_sigma,
            profile_version: meta.profile_version,
            rows,
        })
    }
}
