//! Throughput and back-pressure model of the microphone acquisition link.
//!
//! Microphones produce PDM bits at a fixed rate; the device aggregates them
//! into frames, buffers them, and drains the buffer over one or two FIFO
//! slots of the USB bridge. While the host holds the TX-enable line low the
//! link stops draining but production continues. A frame that does not fit
//! in the buffer is dropped whole.

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Domain};

/// Per-microphone PDM rate of the acquisition front end.
pub const DEFAULT_PDM_RATE: u64 = 4_500_000;
/// Rate one FT232H FIFO slot sustains.
pub const DEFAULT_SLOT_BANDWIDTH: u64 = 20_000_000;

pub fn required_throughput(num_mics: u64, pdm_rate: u64) -> u64 {
    (num_mics as u128 * pdm_rate as u128 / 8) as u64
}

pub fn max_mics(link_bandwidth: u64, pdm_rate: u64) -> u64 {
    (link_bandwidth as u128 * 8 / pdm_rate as u128) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockInterval {
    pub start: f64,
    pub duration: f64,
}

impl BlockInterval {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Seeded alternating renewal process of host-busy periods, layered over the
/// explicit trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomBlocking {
    pub seed: u64,
    pub mean_busy_s: f64,
    pub mean_idle_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub num_mics: u64,
    #[serde(default = "default_pdm_rate")]
    pub pdm_rate: u64,
    pub frame_bytes: u64,
    #[serde(default = "default_slots")]
    pub fifo_slots: u8,
    #[serde(default = "default_slot_bandwidth")]
    pub slot_bandwidth: u64,
    pub device_buffer_bytes: u64,
    #[serde(default)]
    pub host_block_trace: Vec<BlockInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_blocking: Option<RandomBlocking>,
}

fn default_pdm_rate() -> u64 {
    DEFAULT_PDM_RATE
}

fn default_slots() -> u8 {
    1
}

fn default_slot_bandwidth() -> u64 {
    DEFAULT_SLOT_BANDWIDTH
}

impl StreamConfig {
    pub fn produce_rate(&self) -> u64 {
        required_throughput(self.num_mics, self.pdm_rate)
    }

    pub fn link_capacity(&self) -> u64 {
        self.fifo_slots as u64 * self.slot_bandwidth
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_mics == 0 || self.pdm_rate == 0 || self.frame_bytes == 0 || self.slot_bandwidth == 0 {
            return Err(Error::invalid("stream counts and rates must be positive"));
        }
        if self.produce_rate() == 0 {
            return Err(Error::invalid("producer rate rounds to zero bytes per second"));
        }
        if !matches!(self.fifo_slots, 1 | 2) {
            return Err(Error::invalid(format!(
                "fifo_slots must be 1 or 2, got {}",
                self.fifo_slots
            )));
        }
        if self.frame_bytes > self.device_buffer_bytes {
            return Err(Error::invalid(format!(
                "frame_bytes ({}) exceeds device_buffer_bytes ({})",
                self.frame_bytes, self.device_buffer_bytes
            )));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for b in &self.host_block_trace {
            if !(b.start.is_finite() && b.duration.is_finite() && b.start >= 0.0 && b.duration > 0.0) {
                return Err(Error::invalid("block intervals need start >= 0 and duration > 0"));
            }
            if b.start < prev_end {
                return Err(Error::invalid("host block trace must be sorted and non-overlapping"));
            }
            prev_end = b.end();
        }
        if let Some(r) = &self.random_blocking {
            if !(r.mean_busy_s > 0.0 && r.mean_idle_s > 0.0) {
                return Err(Error::invalid("random blocking means must be positive"));
            }
        }
        Ok(())
    }

    /// Explicit trace merged with the random process, as disjoint sorted
    /// `(start, end)` pairs.
    pub fn blocked_intervals(&self, duration: f64) -> Result<Vec<(f64, f64)>> {
        let mut all: Vec<(f64, f64)> = self.host_block_trace.iter().map(|b| (b.start, b.end())).collect();
        if let Some(r) = &self.random_blocking {
            let busy = Exp::new(1.0 / r.mean_busy_s).map_err(|e| Error::invalid(e.to_string()))?;
            let idle = Exp::new(1.0 / r.mean_idle_s).map_err(|e| Error::invalid(e.to_string()))?;
            let mut rng = keyed_rng(r.seed, Domain::Blocking, 0);
            let mut t = 0.0;
            while t < duration {
                t += idle.sample(&mut rng);
                let len = busy.sample(&mut rng);
                if t < duration {
                    all.push((t, t + len));
                }
                t += len;
            }
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(all.len());
        for (s, e) in all {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        Ok(merged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StreamStats {
    pub bytes_produced: u64,
    pub bytes_delivered: u64,
    pub bytes_dropped: u64,
    pub final_buffer_bytes: u64,
    pub max_buffer_occupancy: u64,
    /// Delivered bytes over what the link could have carried in the run.
    pub utilization: f64,
}

impl StreamStats {
    pub fn is_conserved(&self) -> bool {
        self.bytes_produced == self.bytes_delivered + self.bytes_dropped + self.final_buffer_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Frame,
    Drop,
    BlockStart,
    BlockEnd,
    End,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Frame => "frame",
            EventKind::Drop => "drop",
            EventKind::BlockStart => "block_start",
            EventKind::BlockEnd => "block_end",
            EventKind::End => "end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StreamEvent {
    pub time_s: f64,
    pub event: EventKind,
    pub buffer_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    pub stats: StreamStats,
    pub duration: f64,
    pub events: Vec<StreamEvent>,
}

pub fn simulate_stream(cfg: &StreamConfig, duration: f64) -> Result<StreamStats> {
    simulate_stream_logged(cfg, duration, false).map(|r| r.stats)
}

/// Event-driven run at frame granularity. Frame `n` (1-based) arrives at
/// `n * frame_bytes / produce_rate`; between events the link drains at full
/// capacity unless blocked. Drained bytes are whole; a fractional byte of
/// link credit carries over only while the buffer is non-empty.
pub fn simulate_stream_logged(cfg: &StreamConfig, duration: f64, log: bool) -> Result<StreamReport> {
    cfg.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration must be positive"));
    }
    let blocks = cfg.blocked_intervals(duration)?;
    let produce = cfg.produce_rate() as f64;
    let capacity = cfg.link_capacity() as f64;
    let frame = cfg.frame_bytes;
    let arrival = |n: u64| (n as u128 * frame as u128) as f64 / produce;

    let mut stats = StreamStats::default();
    let mut events = Vec::new();
    let mut buffer: u64 = 0;
    let mut credit = 0.0f64;
    let mut now = 0.0f64;
    let mut next_frame = 1u64;
    // block boundaries as (time, starts_block), in time order
    let boundaries: Vec<(f64, bool)> = blocks.iter().flat_map(|&(s, e)| [(s, true), (e, false)]).collect();
    let mut next_boundary = 0usize;
    let mut blocked = false;

    let mut drain_until = |t: f64, blocked: bool, buffer: &mut u64, credit: &mut f64, stats: &mut StreamStats| {
        if !blocked && t > now && *buffer > 0 {
            *credit += capacity * (t - now);
            let out = (credit.floor() as u64).min(*buffer);
            *buffer -= out;
            *credit -= out as f64;
            stats.bytes_delivered += out;
            if *buffer == 0 {
                *credit = 0.0;
            }
        }
        now = now.max(t);
    };

    loop {
        let ta = arrival(next_frame);
        let tb = boundaries.get(next_boundary).map(|b| b.0).unwrap_or(f64::INFINITY);
        let t = ta.min(tb);
        if t > duration {
            break;
        }
        drain_until(t, blocked, &mut buffer, &mut credit, &mut stats);
        if tb <= ta {
            blocked = boundaries[next_boundary].1;
            next_boundary += 1;
            if log {
                let kind = if blocked {
                    EventKind::BlockStart
                } else {
                    EventKind::BlockEnd
                };
                events.push(StreamEvent {
                    time_s: t,
                    event: kind,
                    buffer_bytes: buffer,
                });
            }
            continue;
        }
        stats.bytes_produced += frame;
        next_frame += 1;
        let kind = if buffer + frame > cfg.device_buffer_bytes {
            stats.bytes_dropped += frame;
            EventKind::Drop
        } else {
            buffer += frame;
            stats.max_buffer_occupancy = stats.max_buffer_occupancy.max(buffer);
            EventKind::Frame
        };
        if log {
            events.push(StreamEvent {
                time_s: t,
                event: kind,
                buffer_bytes: buffer,
            });
        }
    }
    drain_until(duration, blocked, &mut buffer, &mut credit, &mut stats);
    if log {
        events.push(StreamEvent {
            time_s: duration,
            event: EventKind::End,
            buffer_bytes: buffer,
        });
    }
    stats.final_buffer_bytes = buffer;
    stats.utilization = stats.bytes_delivered as f64 / (capacity * duration);
    debug_assert!(stats.is_conserved());
    Ok(StreamReport {
        stats,
        duration,
        events,
    })
}
