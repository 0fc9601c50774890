//! Serving-tier models: batch-size/latency profiles and analytic network delay.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::time::{div_round_half_up, Duration, MICROS_PER_SEC};

#[derive(Debug, thiserror::Error)]
pub enum PlatformError {
    #[error("invalid engine profile: {0}")]
    InvalidProfile(String),
    #[error("invalid network model: {0}")]
    InvalidNetwork(String),
    #[error("batch size {batch} outside 1..={max_batch}")]
    BatchOutOfRange { batch: u32, max_batch: u32 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Edge,
    Cloud,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Edge => "edge",
            Tier::Cloud => "cloud",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Deserialize)]
struct EngineProfileFile {
    tier: Tier,
    capacity: u32,
    max_batch: u32,
    points: Vec<(u32, u64)>,
    #[serde(default = "one")]
    instances: u32,
}

fn one() -> u32 {
    1
}

/// Offline batch-size to latency profile of one serving tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "EngineProfileFile")]
pub struct EngineProfile {
    tier: Tier,
    /// Most requests dispatched to this tier in one planning round.
    capacity: u32,
    max_batch: u32,
    points: Vec<(u32, u64)>,
    /// Identical engine instances; each runs one batch at a time.
    instances: u32,
}

impl TryFrom<EngineProfileFile> for EngineProfile {
    type Error = PlatformError;
    fn try_from(f: EngineProfileFile) -> Result<Self, Self::Error> {
        EngineProfile::new(f.tier, f.capacity, f.max_batch, f.points, f.instances)
    }
}

impl EngineProfile {
    pub fn new(
        tier: Tier,
        capacity: u32,
        max_batch: u32,
        points: Vec<(u32, u64)>,
        instances: u32,
    ) -> Result<Self, PlatformError> {
        let bad = |msg: String| Err(PlatformError::InvalidProfile(msg));
        if capacity == 0 {
            return bad("capacity must be >= 1".into());
        }
        if instances == 0 {
            return bad("instances must be >= 1".into());
        }
        match points.first() {
            None => return bad("no profile points".into()),
            Some(&(b, _)) if b != 1 => return bad(format!("first profiled batch must be 1, got {b}")),
            _ => {}
        }
        for w in points.windows(2) {
            let ((b0, l0), (b1, l1)) = (w[0], w[1]);
            if b1 <= b0 {
                return bad(format!("batch sizes must strictly increase ({b0} then {b1})"));
            }
            if l1 < l0 {
                return bad(format!(
                    "latency decreases from {l0}us at batch {b0} to {l1}us at batch {b1}"
                ));
            }
        }
        if let Some(&(b, _)) = points.iter().find(|&&(_, l)| l == 0) {
            return bad(format!("latency at batch {b} must be positive"));
        }
        let Some(&(_, max_lat)) = points.iter().find(|&&(b, _)| b == max_batch) else {
            return bad(format!("max_batch {max_batch} is not a profiled batch size"));
        };
        for &(b, l) in points.iter().take_while(|&&(b, _)| b < max_batch) {
            // max_batch / max_lat >= b / l
            if u128::from(max_batch) * u128::from(l) < u128::from(b) * u128::from(max_lat) {
                return bad(format!(
                    "throughput at max_batch {max_batch} is below throughput at batch {b}"
                ));
            }
        }
        Ok(EngineProfile {
            tier,
            capacity,
            max_batch,
            points,
            instances,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PlatformError> {
        let text = std::fs::read_to_string(path).map_err(|source| PlatformError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| PlatformError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn max_batch(&self) -> u32 {
        self.max_batch
    }

    pub fn instances(&self) -> u32 {
        self.instances
    }

    pub fn points(&self) -> &[(u32, u64)] {
        &self.points
    }

    pub fn with_capacity(mut self, capacity: u32) -> Self {
        self.capacity = capacity.max(1);
        self
    }

    pub fn with_instances(mut self, instances: u32) -> Self {
        self.instances = instances.max(1);
        self
    }

    /// Latency of a batch, linearly interpolated between profile points.
    pub fn batch_latency(&self, batch: u32) -> Result<Duration, PlatformError> {
        if batch == 0 || batch > self.max_batch {
            return Err(PlatformError::BatchOutOfRange {
                batch,
                max_batch: self.max_batch,
            });
        }
        Ok(self.latency_unchecked(batch))
    }

    pub(crate) fn latency_unchecked(&self, batch: u32) -> Duration {
        let idx = self.points.partition_point(|&(b, _)| b < batch);
        if let Some(&(b, l)) = self.points.get(idx) {
            if b == batch {
                return Duration(l);
            }
        }
        // Batches past the last point but within max_batch cannot happen:
        // max_batch is itself a profile point.
        let (b1, l1) = self.points[idx];
        let (b0, l0) = self.points[idx - 1];
        let rise = u128::from(l1 - l0) * u128::from(batch - b0);
        Duration(l0 + div_round_half_up(rise, u128::from(b1 - b0)) as u64)
    }

    /// Time until a batch of `own_batch` requests would complete, given the
    /// remaining busy time of each instance and batches already queued ahead.
    pub fn completion_after(&self, busy: &[Duration], ahead: &[u32], own_batch: u32) -> Duration {
        let mut free: Vec<Duration> = busy.to_vec();
        free.resize(self.instances as usize, Duration::ZERO);
        let next_free = |free: &mut Vec<Duration>, batch: u32| {
            let slot = free
                .iter()
                .enumerate()
                .min_by_key(|&(i, d)| (*d, i))
                .map(|(i, _)| i)
                .expect("at least one instance");
            free[slot] += self.latency_unchecked(batch.clamp(1, self.max_batch));
            free[slot]
        };
        for &b in ahead {
            next_free(&mut free, b);
        }
        next_free(&mut free, own_batch)
    }
}

/// Largest profiled batch size with the highest throughput.
pub fn saturation_point(points: &[(u32, u64)]) -> Option<u32> {
    let mut best: Option<(u32, u64)> = None;
    for &(b, l) in points {
        best = match best {
            Some((bb, bl)) if u128::from(b) * u128::from(bl) < u128::from(bb) * u128::from(l) => {
                Some((bb, bl))
            }
            _ => Some((b, l)),
        };
    }
    best.map(|(b, _)| b)
}

/// Greedy order-preserving split of `count` requests into batches.
pub fn split_batches(count: usize, max_batch: u32) -> Vec<u32> {
    let mb = max_batch.max(1) as usize;
    (0..count.div_ceil(mb))
        .map(|i| (count - i * mb).min(mb) as u32)
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
struct NetworkFile {
    base_latency_us: u64,
    uplink_bps: u64,
    downlink_bps: u64,
}

/// One-way base latency plus serialization at a fixed bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile")]
pub struct NetworkModel {
    pub base_latency_us: u64,
    pub uplink_bps: u64,
    pub downlink_bps: u64,
}

impl TryFrom<NetworkFile> for NetworkModel {
    type Error = PlatformError;
    fn try_from(f: NetworkFile) -> Result<Self, Self::Error> {
        NetworkModel::new(Duration(f.base_latency_us), f.uplink_bps, f.downlink_bps)
    }
}

impl NetworkModel {
    pub fn new(base_latency: Duration, uplink_bps: u64, downlink_bps: u64) -> Result<Self, PlatformError> {
        if uplink_bps == 0 || downlink_bps == 0 {
            return Err(PlatformError::InvalidNetwork("bandwidth must be positive".into()));
        }
        Ok(NetworkModel {
            base_latency_us: base_latency.as_micros(),
            uplink_bps,
            downlink_bps,
        })
    }

    /// WAN link to the cloud testbed: 100 ms one-way, 1 Gbps symmetric.
    pub fn wan_testbed() -> Self {
        NetworkModel {
            base_latency_us: 100_000,
            uplink_bps: 1_000_000_000,
            downlink_bps: 1_000_000_000,
        }
    }

    /// Wi-Fi 7 edge link: 2.5 ms, 2 Gbps up, 3 Gbps down.
    pub fn wifi7() -> Self {
        NetworkModel {
            base_latency_us: 2_500,
            uplink_bps: 2_000_000_000,
            downlink_bps: 3_000_000_000,
        }
    }

    pub fn load(path: &Path) -> Result<Self, PlatformError> {
        let text = std::fs::read_to_string(path).map_err(|source| PlatformError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| PlatformError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn base_latency(&self) -> Duration {
        Duration(self.base_latency_us)
    }

    pub fn transfer_time(&self, bytes: u64, direction: Direction) -> Duration {
        let bps = match direction {
            Direction::Up => self.uplink_bps,
            Direction::Down => self.downlink_bps,
        };
        let bits_us = u128::from(bytes) * 8 * u128::from(MICROS_PER_SEC);
        self.base_latency() + Duration(div_round_half_up(bits_us, u128::from(bps)) as u64)
    }

    pub fn cloud_round_trip(&self, req_bytes: u64, resp_bytes: u64, compute: Duration) -> Duration {
        self.transfer_time(req_bytes, Direction::Up) + compute + self.transfer_time(resp_bytes, Direction::Down)
    }
}
