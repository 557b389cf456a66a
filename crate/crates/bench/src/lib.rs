//! Inputs shared by the benchmarks in `benches/`.

use smtpflow_core::netflow::{serialize_v5, write_csv, NetflowV5Header, MAX_RECORDS};
use smtpflow_core::synth::{generate, SynthConfig, SynthOutput};

pub fn sessions(n: usize) -> SynthOutput {
    generate(&SynthConfig {
        seed: 42,
        n_sessions: n,
        ..Default::default()
    })
    .expect("default config is valid")
}

pub fn flow_csv(out: &SynthOutput) -> Vec<u8> {
    write_csv(&out.flows(), Vec::new()).expect("writing to memory")
}

/// One full v5 datagram built from the first thirty flows.
pub fn datagram(out: &SynthOutput) -> Vec<u8> {
    let flows = &out.flows()[..MAX_RECORDS];
    let boot = flows.iter().map(|f| f.start_ms).min().unwrap_or(0);
    let export_ms = flows.iter().map(|f| f.end_ms).max().unwrap_or(0) + 1;
    let header = NetflowV5Header {
        version: 5,
        sys_uptime_ms: (export_ms - boot) as u32,
        unix_secs: (export_ms / 1000) as u32,
        unix_nsecs: ((export_ms % 1000) * 1_000_000) as u32,
        ..Default::default()
    };
    serialize_v5(&header, flows).expect("flows fit the record format")
}
