//! Drives the `smtpflow` binary end to end.

use std::fs;
use std::net::UdpSocket;
use std::path::Path;
use std::process::{Command, Output};
use std::thread;
use std::time::Duration;

use smtpflow_core::netflow::{serialize_v5, NetflowV5Header};
use smtpflow_core::FlowRecord;
use tempfile::TempDir;

fn smtpflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smtpflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const FLOW_HEADER: &str =
    "src_ip,dst_ip,src_port,dst_port,protocol,start_ms,end_ms,packets,bytes,tcp_flags\n";

#[test]
fn classify_representative_flows() {
    let dir = TempDir::new().unwrap();
    let rows = "192.0.2.1,10.0.0.25,40000,25,6,0,10,3,250,2\n\
                192.0.2.2,10.0.0.25,40001,25,6,0,10,7,600,27\n\
                192.0.2.3,10.0.0.25,40002,25,6,0,10,15,5000,27\n";
    fs::write(dir.path().join("in.csv"), format!("{FLOW_HEADER}{rows}")).unwrap();
    let o = smtpflow(
        dir.path(),
        &["classify", "--input", "in.csv", "--output", "out.csv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let classes: Vec<&str> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(10).unwrap())
        .collect();
    assert_eq!(classes, ["failed", "rejected", "accepted"]);
    assert!(out.starts_with("src_ip,dst_ip,src_port,dst_port,protocol,start_ms,end_ms,packets,bytes,tcp_flags,class,vote_bytes,vote_packets,vote_bpp\n"));
}

#[test]
fn classify_missing_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = smtpflow(
        dir.path(),
        &["classify", "--input", "nope.csv", "--output", "out.csv"],
    );
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
    assert!(!dir.path().join("out.csv").exists());
}

#[test]
fn classify_header_only_is_empty_success() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("in.csv"), FLOW_HEADER).unwrap();
    let o = smtpflow(
        dir.path(),
        &["classify", "--input", "in.csv", "--output", "out.csv"],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(dir.path().join("out.csv"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}

#[test]
fn strict_mode_rejects_malformed_rows_without_partial_output() {
    let dir = TempDir::new().unwrap();
    let text = format!("{FLOW_HEADER}192.0.2.1,10.0.0.25,1,25,6,0,1,3,250,2\n192.0.2.1,10.0.0.25,1,25,6,0,1,3,abc,2\n");
    fs::write(dir.path().join("in.csv"), text).unwrap();
    let o = smtpflow(
        dir.path(),
        &[
            "classify", "--input", "in.csv", "--output", "out.csv", "--strict",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("out.csv").exists());
    let o = smtpflow(
        dir.path(),
        &["classify", "--input", "in.csv", "--output", "out.csv"],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(dir.path().join("out.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped"));
}

#[test]
fn label_source_preconditions() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("in.csv"), FLOW_HEADER).unwrap();
    fs::write(dir.path().join("a.log"), "0 192.0.2.1 10.0.0.25 ACCEPT\n").unwrap();
    fs::write(dir.path().join("black.txt"), "192.0.2.0/24\n").unwrap();
    let both = smtpflow(
        dir.path(),
        &[
            "label",
            "--input",
            "in.csv",
            "--output",
            "l.csv",
            "--log",
            "a.log",
            "--blacklist",
            "black.txt",
        ],
    );
    assert_eq!(code(&both), 2);
    assert!(String::from_utf8_lossy(&both.stderr).contains("both"));
    let none = smtpflow(
        dir.path(),
        &["label", "--input", "in.csv", "--output", "l.csv"],
    );
    assert_eq!(code(&none), 2);
}

#[test]
fn label_by_log_and_by_lists() {
    let dir = TempDir::new().unwrap();
    let rows = "192.0.2.1,10.0.0.25,40000,25,6,1000,1100,7,600,27\n\
                198.51.100.9,10.0.0.25,40001,25,6,5000,5100,2,90,2\n";
    fs::write(dir.path().join("in.csv"), format!("{FLOW_HEADER}{rows}")).unwrap();
    fs::write(
        dir.path().join("a.log"),
        "1200 192.0.2.1 10.0.0.25 REJECT:USER_UNKNOWN\n",
    )
    .unwrap();
    let o = smtpflow(
        dir.path(),
        &[
            "label", "--input", "in.csv", "--output", "l.csv", "--log", "a.log",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = fs::read_to_string(dir.path().join("l.csv")).unwrap();
    let rows: Vec<&str> = out.lines().collect();
    assert!(
        rows[1].ends_with(",rejected,USER_UNKNOWN,server_log"),
        "{}",
        rows[1]
    );
    assert!(rows[2].ends_with(",failed,,server_log"), "{}", rows[2]);

    fs::write(
        dir.path().join("white.txt"),
        "# partners\n198.51.100.0/24\n",
    )
    .unwrap();
    let o = smtpflow(
        dir.path(),
        &[
            "label",
            "--input",
            "in.csv",
            "--output",
            "w.csv",
            "--whitelist",
            "white.txt",
        ],
    );
    assert_eq!(code(&o), 0);
    let out = fs::read_to_string(dir.path().join("w.csv")).unwrap();
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().nth(1).unwrap().ends_with(",accepted,,list"));
}

#[test]
fn synth_eval_calibrate_report_pipeline() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let o = smtpflow(
        d,
        &[
            "synth",
            "--output",
            "s",
            "--sessions",
            "20000",
            "--seed",
            "3",
            "--v5",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for suffix in [
        "flows.csv",
        "log",
        "truth.csv",
        "labeled.csv",
        "blacklist.txt",
        "whitelist.txt",
        "v5",
    ] {
        assert!(d.join(format!("s.{suffix}")).exists(), "{suffix}");
    }

    let eval = smtpflow(d, &["eval", "--input", "s.labeled.csv"]);
    assert_eq!(code(&eval), 0);
    let text = String::from_utf8(eval.stdout).unwrap();
    let acc: f64 = text
        .lines()
        .last()
        .unwrap()
        .split_whitespace()
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc > 0.94, "{text}");

    assert_eq!(
        code(&smtpflow(
            d,
            &["calibrate", "--input", "s.labeled.csv", "--output", "t.txt"]
        )),
        0
    );
    let thresholds = fs::read_to_string(d.join("t.txt")).unwrap();
    assert!(thresholds.contains("byte_lo = "));
    assert_eq!(
        code(&smtpflow(
            d,
            &["eval", "--input", "s.labeled.csv", "--thresholds", "t.txt"]
        )),
        0
    );

    // the v5 export classifies exactly like the CSV
    assert_eq!(
        code(&smtpflow(
            d,
            &["classify", "--input", "s.v5", "--output", "a.csv"]
        )),
        0
    );
    assert_eq!(
        code(&smtpflow(
            d,
            &["classify", "--input", "s.flows.csv", "--output", "b.csv"]
        )),
        0
    );
    assert_eq!(
        fs::read(d.join("a.csv")).unwrap(),
        fs::read(d.join("b.csv")).unwrap()
    );

    let o = smtpflow(
        d,
        &["report", "--input", "s.labeled.csv", "--output", "r.json"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["flows"], 20000);
    assert!(report["reject_rate"].as_f64().unwrap() > 0.75);
    assert_eq!(report["servers"].as_array().unwrap().len(), 10);
    for key in [
        "server",
        "counts",
        "rating",
        "sharpness",
        "series",
        "spikes",
        "diurnal_offset_hours",
    ] {
        assert!(report["network"].get(key).is_some(), "{key}");
    }
    for class in ["failed", "rejected", "accepted"] {
        let cdf = fs::read_to_string(d.join(format!("r.{class}.cdf.csv"))).unwrap();
        assert!(cdf.starts_with("value,cumulative_fraction\n"));
        assert!(cdf.trim_end().ends_with(",1"));
    }
}

#[test]
fn outputs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    for prefix in ["a", "b"] {
        assert_eq!(
            code(&smtpflow(
                d,
                &[
                    "synth",
                    "--output",
                    prefix,
                    "--sessions",
                    "3000",
                    "--seed",
                    "8"
                ]
            )),
            0
        );
        let json = format!("{prefix}.json");
        assert_eq!(
            code(&smtpflow(
                d,
                &[
                    "report",
                    "--input",
                    &format!("{prefix}.labeled.csv"),
                    "--output",
                    &json
                ]
            )),
            0
        );
    }
    for suffix in [
        "flows.csv",
        "log",
        "truth.csv",
        "labeled.csv",
        "blacklist.txt",
        "json",
    ] {
        assert_eq!(
            fs::read(d.join(format!("a.{suffix}"))).unwrap(),
            fs::read(d.join(format!("b.{suffix}"))).unwrap()
        );
    }
}

#[test]
fn report_nulls_without_rejections() {
    let dir = TempDir::new().unwrap();
    let labeled = "src_ip,dst_ip,src_port,dst_port,protocol,start_ms,end_ms,packets,bytes,tcp_flags,label,reason,label_source\n\
                   192.0.2.1,10.0.0.25,40000,25,6,0,10,15,5000,27,accepted,,synthetic\n";
    fs::write(dir.path().join("l.csv"), labeled).unwrap();
    let o = smtpflow(
        dir.path(),
        &["report", "--input", "l.csv", "--output", "r.json"],
    );
    assert_eq!(code(&o), 0);
    let r: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    let s = &r["servers"][0];
    assert!(s["sharpness"].is_null());
    assert_eq!(s["rating"], 1.0);
    assert!(s["diurnal_offset_hours"].is_null());
}

#[test]
fn eval_on_empty_input_fails() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("l.csv"),
        "src_ip,dst_ip,src_port,dst_port,protocol,start_ms,end_ms,packets,bytes,tcp_flags,label,reason,label_source\n",
    )
    .unwrap();
    assert_ne!(
        code(&smtpflow(dir.path(), &["eval", "--input", "l.csv"])),
        0
    );
}

#[test]
fn bad_thresholds_file_exits_2() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("in.csv"), FLOW_HEADER).unwrap();
    fs::write(dir.path().join("t.txt"), "byte_lo = 2000\nbyte_hi = 1000\n").unwrap();
    let o = smtpflow(
        dir.path(),
        &[
            "classify",
            "--input",
            "in.csv",
            "--output",
            "o.csv",
            "--thresholds",
            "t.txt",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&smtpflow(dir.path(), &["frobnicate"])), 2);
}

#[test]
fn collect_over_udp() {
    let dir = TempDir::new().unwrap();
    let port = {
        let probe = UdpSocket::bind("127.0.0.1:0").unwrap();
        probe.local_addr().unwrap().port()
    };
    let addr = format!("127.0.0.1:{port}");
    let sender = thread::spawn({
        let addr = addr.clone();
        move || {
            let header = NetflowV5Header {
                version: 5,
                sys_uptime_ms: 60_000,
                unix_secs: 1_262_563_200,
                ..Default::default()
            };
            let boot = header.export_ms() - 60_000;
            let mut flow = FlowRecord::smtp(
                "192.0.2.1".parse().unwrap(),
                "10.0.0.25".parse().unwrap(),
                7,
                600,
            );
            flow.start_ms = boot + 1000;
            flow.end_ms = boot + 2000;
            let datagram = serialize_v5(&header, &[flow, flow]).unwrap();
            let socket = UdpSocket::bind("127.0.0.1:0").unwrap();
            // resend until the collector has bound its socket
            for _ in 0..50 {
                socket.send_to(&datagram, &addr).unwrap();
                thread::sleep(Duration::from_millis(50));
            }
        }
    });
    let o = smtpflow(
        dir.path(),
        &[
            "collect",
            "--listen",
            &addr,
            "--output",
            "c.csv",
            "--max-datagrams",
            "2",
            "--idle-timeout-ms",
            "3000",
        ],
    );
    sender.join().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(out.lines().count(), 5);
    assert!(out
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("192.0.2.1,10.0.0.25,"));
}
