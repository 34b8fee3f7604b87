//! Drives the `softalign` binary the way a scripted user would.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use softalign_core::corpus::{MEASUREMENT_OEM, MEASUREMENT_SUPPLIER};

pub const EPOCH: &str = "1700000000";

pub fn softalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softalign"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", EPOCH)
        .output()
        .expect("binary runs")
}

/// Runs a command and returns (exit code, stdout, stderr).
pub fn run(args: &[&str]) -> (i32, String, String) {
    let out = softalign(args);
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

pub fn ok(args: &[&str]) -> String {
    let (code, stdout, stderr) = run(args);
    assert_eq!(
        code, 0,
        "softalign {args:?} exited {code}\nstdout:\n{stdout}\nstderr:\n{stderr}"
    );
    stdout
}

/// Writes the bundled measurement pair into `dir` and returns the two paths.
pub fn write_pair(dir: &Path) -> (PathBuf, PathBuf) {
    std::fs::create_dir_all(dir).unwrap();
    let oem = dir.join("measurement_oem.sysml");
    let supplier = dir.join("measurement_supplier.sysml");
    std::fs::write(&oem, MEASUREMENT_OEM).unwrap();
    std::fs::write(&supplier, MEASUREMENT_SUPPLIER).unwrap();
    (oem, supplier)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The full headless script: init, then run and confirm every stage with
/// automatic verdicts at Stage 3 and acknowledged coverage at Stage 5, then
/// export to `out` and confirm Stage 6. Returns an error describing the
/// first failing command.
pub fn full_session(oem: &Path, supplier: &Path, session: &Path, out: &Path) -> Result<(), String> {
    let step = |args: &[&str]| -> Result<(), String> {
        let (code, stdout, stderr) = run(args);
        if code == 0 {
            Ok(())
        } else {
            Err(format!(
                "softalign {} exited {code}: {stdout}{stderr}",
                args.join(" ")
            ))
        }
    };
    let dir = s(session);
    step(&[
        "init",
        "--oem",
        s(oem),
        "--supplier",
        s(supplier),
        "--out",
        dir,
    ])?;
    step(&["confirm", "--session", dir, "--stage", "0"])?;
    for k in 1..=5 {
        let stage = k.to_string();
        step(&["run", "--session", dir, "--stage", &stage])?;
        if k == 3 {
            step(&["verdict", "--session", dir, "--auto"])?;
        }
        if k == 5 {
            step(&[
                "confirm",
                "--session",
                dir,
                "--stage",
                &stage,
                "--acknowledge-unprocessed",
            ])?;
        } else {
            step(&["confirm", "--session", dir, "--stage", &stage])?;
        }
    }
    step(&["export", "--session", dir, "--out", s(out)])?;
    step(&[
        "confirm",
        "--session",
        dir,
        "--stage",
        "6",
        "--message",
        "bundle reviewed",
    ])?;
    Ok(())
}
