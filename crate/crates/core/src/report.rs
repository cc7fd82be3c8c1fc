//! Timing reports. Throughput is voxels per second of kernel time, in
//! billions (GVox/s).

use std::fmt;
use std::time::Duration;

use crate::engine::EngineStats;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub voxels: u64,
    pub chunks: usize,
    pub disk_read: Duration,
    pub index_build: Duration,
    pub kernel: Duration,
    pub merge: Duration,
    /// Wall time of the whole run. Phases overlap, so this is not their sum.
    pub total: Duration,
    pub peak_chunk_bytes: usize,
}

impl RunReport {
    pub fn from_stats(voxels: u64, stats: &EngineStats) -> Self {
        RunReport {
            voxels,
            chunks: stats.chunks.len(),
            disk_read: stats.read_time(),
            index_build: stats.index_time(),
            kernel: stats.kernel_time(),
            merge: stats.merge_time(),
            total: stats.total,
            peak_chunk_bytes: stats.peak_chunk_bytes,
        }
    }

    pub fn gvox_per_s(&self) -> f64 {
        gvox_per_s(self.voxels, self.kernel)
    }
}

pub fn gvox_per_s(voxels: u64, time: Duration) -> f64 {
    let secs = time.as_secs_f64().max(1e-12);
    voxels as f64 / secs / 1e9
}

pub fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18}{}", "voxels", self.voxels)?;
        writeln!(f, "{:<18}{}", "chunks", self.chunks)?;
        writeln!(f, "{:<18}{:.3}", "disk read [ms]", ms(self.disk_read))?;
        writeln!(f, "{:<18}{:.3}", "index [ms]", ms(self.index_build))?;
        writeln!(f, "{:<18}{:.3}", "kernel [ms]", ms(self.kernel))?;
        writeln!(f, "{:<18}{:.3}", "merge [ms]", ms(self.merge))?;
        writeln!(f, "{:<18}{:.3}", "overall [ms]", ms(self.total))?;
        writeln!(f, "{:<18}{}", "peak chunk [B]", self.peak_chunk_bytes)?;
        write!(f, "{:<18}{:.4}", "kernel GVox/s", self.gvox_per_s())
    }
}
